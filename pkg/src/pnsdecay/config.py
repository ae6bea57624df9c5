"""Run configuration: a small sectioned ``key = value`` grammar.

Grammar::

    # comment            (also after a value)
    [section]            one of grid, viscosity, recipe, stepper, run, fit
    key = value          keys lowercase; lists are comma-separated

Unknown sections or keys, duplicates and invalid values are all collected
and reported together. ``to_text`` writes a config that parses back equal.
"""

import hashlib
import math
import re
from dataclasses import dataclass, field, fields

from .data_gen import DataRecipe
from .exceptions import ConfigError
from .lame import Viscosity
from .littlewood_paley import REGIMES, BesovSpec
from .solver import StepperConfig
from .spectral import BoxGrid

EXPERIMENTS = ("simulate", "linear", "stability", "lower-bound")
_SECTION = re.compile(r"^\[([a-z_]+)\]$")
_KEY = re.compile(r"^([a-z][a-z0-9_]*)\s*=\s*(.*)$")


def _optional_float(text):
    return None if text.lower() == "none" else float(text)


def _float_list(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _probe_list(text):
    return tuple(BesovSpec.from_label(x) for x in text.split(",") if x.strip())


def _probe_text(spec):
    return f"{spec.field}:{spec.s!r}:{spec.r_label}:{spec.regime}"


def _num_text(x):
    if x is None:
        return "none"
    if isinstance(x, float):
        return "inf" if x == math.inf else repr(x)
    return str(x)


@dataclass
class FitOptions:
    """Which exponents to check, where and how strictly."""

    sigmas: tuple = (0.0, 1.0, 2.0)
    window: tuple = (1.0, 64.0)
    tolerance: float = None
    regime: str = "all"
    band_ratio: float = 10.0
    lower_sigma: float = None
    high_sigma: float = None
    high_tolerance: float = 0.20
    density_tolerance: float = 0.1
    density_band: float = 2.0
    perturbations: tuple = (1e-3, 1e-4)
    amplification_gate: float = 10.0
    linearity: float = 0.30


@dataclass
class RunConfig:
    grid: BoxGrid
    viscosity: Viscosity
    recipe: DataRecipe = field(default_factory=DataRecipe)
    stepper: StepperConfig = field(default_factory=lambda: StepperConfig(dt=0.125))
    probes: tuple = ()
    experiment: str = "simulate"
    output_dir: str = "output"
    seed: int = 0
    t_end: float = 64.0
    sample_every: int = 8
    samples: int = 64
    fit: FitOptions = field(default_factory=FitOptions)

    def to_text(self):
        """Serialize in the config grammar; ``parse_config`` inverts it."""
        g, v, rc, st, ft = self.grid, self.viscosity, self.recipe, self.stepper, self.fit
        sections = {
            "grid": {"d": g.d, "n": g.N, "l": g.L},
            "viscosity": {"mu": v.mu, "nu": v.nu},
            "recipe": {k: getattr(rc, k) for k in _RECIPE_KEYS},
            "stepper": {"dt": st.dt, "scheme": st.scheme, "cfl_guard": st.cfl_guard,
                        "vacuum_floor": st.vacuum_floor},
            "run": {"experiment": self.experiment, "t_end": self.t_end,
                    "sample_every": self.sample_every, "samples": self.samples,
                    "output_dir": self.output_dir, "seed": self.seed,
                    "probes": ", ".join(_probe_text(p) for p in self.probes)},
            "fit": {f.name: getattr(ft, f.name) for f in fields(FitOptions)},
        }
        lines = []
        for name, items in sections.items():
            lines.append(f"[{name}]")
            for key, val in items.items():
                if isinstance(val, tuple):
                    val = ", ".join(_num_text(x) for x in val)
                lines.append(f"{key} = {_num_text(val)}")
            lines.append("")
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def all_probes(self):
        """Configured probes plus whatever the experiment's verdicts read."""
        d = self.grid.d
        out = list(self.probes)
        out += [BesovSpec(s) for s in self.fit.sigmas]
        if self.fit.high_sigma is not None:
            out.append(BesovSpec(self.fit.high_sigma, 1, "high"))
        out.append(BesovSpec(d / 2, 1, "all", "a"))
        seen, unique = set(), []
        for p in out:
            if p not in seen:
                seen.add(p)
                unique.append(p)
        return unique


_RECIPE_KEYS = ("kind", "sigma0", "amplitude", "divergence_mix", "density_sigma",
                "density_amplitude", "velocity_critical_norm")

# key -> (converter, required)
SCHEMA = {
    "grid": {"d": (int, True), "n": (int, True), "l": (float, True)},
    "viscosity": {"mu": (float, True), "nu": (float, False)},
    "recipe": {"kind": (str, False), "sigma0": (float, False), "amplitude": (float, False),
               "divergence_mix": (float, False), "density_sigma": (_optional_float, False),
               "density_amplitude": (float, False),
               "velocity_critical_norm": (_optional_float, False)},
    "stepper": {"dt": (float, False), "scheme": (str, False), "cfl_guard": (float, False),
                "vacuum_floor": (float, False)},
    "run": {"experiment": (str, False), "t_end": (float, False), "sample_every": (int, False),
            "samples": (int, False), "output_dir": (str, False), "seed": (int, False),
            "probes": (_probe_list, False)},
    "fit": {"sigmas": (_float_list, False), "window": (_float_list, False),
            "tolerance": (_optional_float, False), "regime": (str, False),
            "band_ratio": (float, False), "lower_sigma": (_optional_float, False),
            "high_sigma": (_optional_float, False), "high_tolerance": (float, False),
            "density_tolerance": (float, False), "density_band": (float, False),
            "perturbations": (_float_list, False), "amplification_gate": (float, False),
            "linearity": (float, False)},
}


def _tokenize(text, problems):
    """Map (section, key) -> (raw value, line number)."""
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                problems.append(f"line {lineno}: unknown section [{section}]")
            continue
        m = _KEY.match(line)
        if not m:
            problems.append(f"line {lineno}: expected 'key = value' or '[section]', got {raw.strip()!r}")
            continue
        key, val = m.group(1), m.group(2).strip()
        if section is None:
            problems.append(f"line {lineno}: key {key!r} outside any section")
            continue
        if section not in SCHEMA:
            continue
        if key not in SCHEMA[section]:
            problems.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        if (section, key) in values:
            first = values[(section, key)][1]
            problems.append(f"duplicate key {section}.{key} on lines {first} and {lineno}")
            continue
        values[(section, key)] = (val, lineno)
    return values


def parse_config(text):
    """Parse and validate; raises ``ConfigError`` listing every violation."""
    problems = []
    raw = _tokenize(text, problems)
    typed = {name: {} for name in SCHEMA}
    for (section, key), (val, lineno) in raw.items():
        conv = SCHEMA[section][key][0]
        try:
            typed[section][key] = conv(val)
        except (ValueError, TypeError) as exc:
            problems.append(f"line {lineno}: {section}.{key}: cannot parse {val!r} ({exc})")
    for section, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and (section, key) not in raw:
                problems.append(f"missing required key {section}.{key}")
    if problems:
        raise ConfigError(problems)
    cfg = _assemble(typed, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _assemble(typed, problems):
    g = typed["grid"]
    grid = visc = None
    try:
        grid = BoxGrid(g["d"], g["n"], g["l"])
    except ValueError as exc:
        problems.append(f"grid: {exc}")
    try:
        visc = Viscosity(typed["viscosity"]["mu"], typed["viscosity"].get("nu", 0.0))
    except ValueError as exc:
        problems.append(f"viscosity: {exc}")
    run = typed["run"]
    recipe = DataRecipe(seed=run.get("seed", 0), **typed["recipe"])
    stepper = StepperConfig(**{"dt": 0.125, **typed["stepper"]})
    fit = FitOptions(**typed["fit"])
    if grid is not None:
        problems += [f"recipe: {v}" for v in recipe.violations(grid.d)]
    problems += [f"stepper: {v}" for v in stepper.violations()]
    problems += _fit_violations(fit)
    cfg = RunConfig(grid=grid, viscosity=visc, recipe=recipe, stepper=stepper,
                    fit=fit, **run)
    if cfg.experiment not in EXPERIMENTS:
        problems.append(f"run.experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if not cfg.t_end > 0:
        problems.append(f"run.t_end must be positive, got {cfg.t_end}")
    if cfg.sample_every < 1:
        problems.append(f"run.sample_every must be >= 1, got {cfg.sample_every}")
    if cfg.samples < 2:
        problems.append(f"run.samples must be >= 2, got {cfg.samples}")
    return cfg


def _fit_violations(fit):
    out = []
    if len(fit.window) != 2 or not fit.window[0] < fit.window[1]:
        out.append(f"fit.window must be two increasing times, got {fit.window}")
    if fit.regime not in REGIMES:
        out.append(f"fit.regime must be one of {REGIMES}, got {fit.regime!r}")
    for name in ("band_ratio", "high_tolerance", "density_tolerance", "density_band",
                 "amplification_gate", "linearity"):
        if not getattr(fit, name) > 0:
            out.append(f"fit.{name} must be positive")
    if fit.tolerance is not None and not fit.tolerance > 0:
        out.append("fit.tolerance must be positive")
    return out


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
