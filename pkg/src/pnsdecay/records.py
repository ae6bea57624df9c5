"""On-disk formats: checkpoints, norm CSVs, verdict reports, run metadata."""

import csv
import json
import math
import platform
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from .lame import Viscosity
from .littlewood_paley import NormTrajectory
from .solver import FluidState
from .spectral import BoxGrid, SpectralField

FORMAT_VERSION = "pnsdecay-checkpoint/1"
NORM_HEADER = ("t", "sigma", "r", "regime", "norm")
BLOCK_HEADER = ("t", "k", "block_norm")


def version_tag():
    try:
        pkg = importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "numpy": np.__version__, "python": platform.python_version(),
            "format": FORMAT_VERSION}


def save_checkpoint(path, state, extra=None):
    """Spectra stored as complex arrays; reloads bit-exactly."""
    g = state.grid
    meta = {"version": FORMAT_VERSION, "t": state.t, "grid": g.to_dict(),
            "viscosity": state.visc.to_dict(), "extra": extra or {}}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, a=state.a.amplitudes, u=state.u.amplitudes,
                 meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8))
    return path


def load_checkpoint(path):
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('version')!r}")
        g = meta["grid"]
        grid = BoxGrid(g["d"], g["N"], g["L"])
        visc = Viscosity(**meta["viscosity"])
        state = FluidState(meta["t"], SpectralField(grid, data["a"].copy()),
                           SpectralField(grid, data["u"].copy()), visc)
    return state, meta.get("extra", {})


def _fmt(x):
    return repr(float(x)) if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def write_norm_csv(path, trajs):
    """One row per (time, spec); every trajectory must share one field."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NORM_HEADER)
        for tr in trajs:
            series = tr.series()
            for t, y in zip(tr.t, series):
                w.writerow((_fmt(t), _fmt(tr.spec.s), tr.spec.r_label, tr.spec.regime, _fmt(y)))
    return path


def read_norm_csv(path):
    """``{(sigma, r, regime): (t, norm)}`` from a norm CSV."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != NORM_HEADER:
            raise ValueError(f"unexpected header {header}; want {','.join(NORM_HEADER)}")
        for t, s, r, regime, y in reader:
            key = (float(s), math.inf if r == "inf" else 1, regime)
            rows.setdefault(key, ([], []))
            rows[key][0].append(float(t))
            rows[key][1].append(float(y))
    return {k: (np.array(t), np.array(y)) for k, (t, y) in rows.items()}


def write_block_csv(path, traj):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BLOCK_HEADER)
        for t, row in zip(traj.t, traj.block_norms):
            for k, b in zip(traj.ks, row):
                w.writerow((_fmt(t), int(k), _fmt(b)))
    return path


def read_block_csv(path, spec):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != BLOCK_HEADER:
            raise ValueError(f"unexpected header {header}; want {','.join(BLOCK_HEADER)}")
        table = {}
        for t, k, b in reader:
            table.setdefault(float(t), {})[int(k)] = float(b)
    ks = np.array(sorted({k for row in table.values() for k in row}))
    traj = NormTrajectory(ks, spec)
    for t in sorted(table):
        traj.append(t, [table[t].get(int(k), 0.0) for k in ks])
    return traj


def write_verdicts(path, verdicts):
    """Plain-text report, one line per verdict."""
    lines = ["experiment\tpredicted\tfitted\tstderr\tverdict\tdetail"]
    for v in verdicts:
        lines.append("\t".join([
            v["experiment"], _opt(v.get("predicted")), _opt(v.get("fitted")),
            _opt(v.get("stderr")), "pass" if v["passed"] else "fail", v.get("detail", ""),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def _opt(x):
    return "-" if x is None else f"{x:.6g}"


def write_metadata(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
