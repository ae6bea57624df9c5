"""Command-line entry point.

Exit status: 0 when every verdict passes, 2 when a verdict fails, 1 when the
run itself breaks. Errors print one ``pnsdecay: <code>: <message> | k=v``
line on stderr. ``PNSDECAY_OUTPUT_DIR`` overrides the configured output dir.
"""

import argparse
import logging
import os
import re
import sys
import time
from pathlib import Path

from . import pipeline, records
from .config import load_config
from .exceptions import PNSError

OUTPUT_ENV = "PNSDECAY_OUTPUT_DIR"
SUBCOMMANDS = ("simulate", "linear", "gen-data", "norms", "fit", "stability", "verify")
EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="pnsdecay", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--output-dir", help=f"overrides the config and ${OUTPUT_ENV}")
        if name == "verify":
            p.add_argument("--scale", type=float, default=1.0,
                           help="fraction of the random-field counts to run")
            continue
        p.add_argument("config", help="run configuration file")
        if name in ("simulate", "norms"):
            p.add_argument("--checkpoint", help="start from this checkpoint instead of the recipe")
        if name == "fit":
            p.add_argument("--input", required=True, help="norm CSV (t,sigma,r,regime,norm)")
    return parser


def resolve_output(flag, configured):
    return Path(flag or os.environ.get(OUTPUT_ENV) or configured)


def _error_line(exc):
    if isinstance(exc, PNSError):
        return f"pnsdecay: {exc.summary}"
    code = re.sub(r"(?<!^)(?=[A-Z])", "-", type(exc).__name__).lower()
    msg = " ".join(str(exc).split())
    return f"pnsdecay: {code}: {msg}"


def _metadata(args, cfg, record, started):
    meta = {"command": args.command, "version": records.version_tag(),
            "verdicts": record.verdicts, "measured_constants": record.constants,
            "passed": record.passed, "wall_seconds": time.perf_counter() - started,
            **record.extra}
    if cfg is not None:
        from .littlewood_paley import partition_for

        meta.update({"config_digest": cfg.digest(), "config": cfg.to_text(),
                     "seed": cfg.seed, "block_range": partition_for(cfg.grid).truncation(),
                     "validity_horizon": pipeline.horizon_of(cfg)})
    return meta


def execute(args):
    started = time.perf_counter()
    cfg = None
    if args.command == "verify":
        out = resolve_output(args.output_dir, "output")
        out.mkdir(parents=True, exist_ok=True)
        record = pipeline.run_verify(out, args.scale)
    else:
        cfg = load_config(args.config)
        out = resolve_output(args.output_dir, cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint = getattr(args, "checkpoint", None)
        state = records.load_checkpoint(checkpoint)[0] if checkpoint else None
        if args.command == "simulate":
            record = pipeline.run_simulate(cfg, out, state)
        elif args.command == "norms":
            record = pipeline.run_norms(cfg, out, state)
        elif args.command == "linear":
            record = pipeline.run_linear(cfg, out)
        elif args.command == "gen-data":
            record = pipeline.run_gen_data(cfg, out)
        elif args.command == "fit":
            record = pipeline.run_fit(cfg, out, args.input)
        else:
            record = pipeline.run_stability(cfg, out)
    records.write_verdicts(out / "verdicts.tsv", record.verdicts)
    records.write_metadata(out / "metadata.json", _metadata(args, cfg, record, started))
    for v in record.verdicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'} {v['experiment']} {v.get('detail', '')}".rstrip())
    return record


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        record = execute(args)
    except (PNSError, ValueError, OSError, KeyError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if record.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
