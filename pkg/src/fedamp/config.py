"""Experiment configuration: flat key = value sections.

A config file fully determines an experiment given a master seed.  Keys
are validated against a fixed schema; unknown sections or keys are
rejected so typos fail loudly.  Parsing and serialization round-trip:
serialize(parse(text)) is idempotent.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .engine import MODES, RunConfig
from .objectives import NoiseModel, build_logistic, build_quadratic
from .participation import PatternSpec, generate_schedule, rho_bound
from .analysis import plan_rates_adaptive, plan_rates_fixed_amp
from .streams import derive_seed, substream


class ConfigError(ValueError):
    """Invalid configuration; maps to CLI exit code 1."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _float_list(text: str):
    return [float(v) for v in text.replace(",", " ").split()]


def _int_list(text: str):
    return [int(v) for v in text.replace(",", " ").split()]


def _offset(text: str):
    return text if text.strip() == "random" else int(text)


def _gap(text: str):
    return text if text.strip() == "exact" else float(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, list):
        return " ".join(_fmt(v) for v in value)
    return str(value)


# (section, key) -> (parser, default); None default means required when
# the section is active.  Sections themselves are optional unless the
# subcommand needs them.
SCHEMA = {
    ("population", "kind"): (str, "quadratic"),
    ("population", "N"): (int, None),
    ("population", "m"): (int, 16),
    ("population", "L"): (float, 1.0),
    ("population", "spread"): (float, 0.5),
    ("population", "seed"): (int, 42),
    ("population", "spectrum"): (str, "uniform"),       # uniform|linspace|geomspace
    ("population", "eigen_lo"): (float, 0.1),
    ("population", "eigen_hi"): (float, 1.0),
    ("population", "rotate"): (_bool, True),
    ("population", "noise"): (str, "none"),
    ("population", "sigma"): (float, 0.0),
    ("population", "samples_per_client"): (int, 64),    # logistic only
    ("population", "reg"): (float, 1e-3),               # logistic only
    ("pattern", "kind"): (str, None),
    ("pattern", "S"): (int, 0),
    ("pattern", "G"): (int, 0),
    ("pattern", "B"): (int, 0),
    ("pattern", "offset"): (_offset, "random"),
    ("pattern", "p_aa"): (float, 0.0),
    ("pattern", "p_uu"): (float, 0.0),
    ("run", "planner"): (str, "none"),                  # none|cor3.2|cor3.3
    ("run", "gap"): (_gap, "exact"),                    # planner objective gap
    ("run", "gamma"): (float, 0.0),
    ("run", "eta"): (float, 1.0),
    ("run", "I"): (int, 5),
    ("run", "P"): (int, 1),
    ("run", "T"): (int, None),
    ("run", "eval_every"): (int, 0),                    # 0: every P rounds
    ("run", "mode"): (str, "generalized"),
    ("run", "minibatch"): (int, 0),                     # 0: full local gradient
    ("run", "x0_kind"): (str, "uniform"),               # zero|uniform|gaussian|spectral
    ("run", "x0_scale"): (float, 1.0),
    ("sweep", "axis"): (str, None),                     # T|P|S
    ("sweep", "values"): (_int_list, None),
    ("sweep", "st_fixed"): (_bool, False),
    ("bounds", "check"): (str, "both"),                 # hoeffding|chebyshev|both
    ("bounds", "P"): (int, 64),
    ("bounds", "P_list"): (_int_list, [16, 32, 64, 128, 256, 512, 1024]),
    ("bounds", "c"): (float, 0.05),
    ("bounds", "chebyshev_c"): (float, 0.1),
    ("bounds", "trials"): (int, 10000),
    ("bounds", "mixing_trials"): (int, 200),
    ("bounds", "max_lag"): (int, 40),
    ("diagnose", "P_list"): (_int_list, [1, 2, 4, 8]),
    ("diagnose", "points"): (int, 0),                   # 0: exact mode
    ("seeds", "master"): (int, 0),
    ("seeds", "replications"): (int, 1),
    ("output", "dir"): (str, "out"),
}

_SECTION_ORDER = ["population", "pattern", "run", "sweep", "bounds",
                  "diagnose", "seeds", "output"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, typed view of a config file."""

    values: dict = field(default_factory=dict)   # (section, key) -> value
    sections: tuple = ()

    def get(self, section: str, key: str):
        if (section, key) in self.values:
            return self.values[(section, key)]
        parser, default = SCHEMA[(section, key)]
        if default is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default

    def has_section(self, section: str) -> bool:
        return section in self.sections

    def serialize(self) -> str:
        lines = []
        for section in _SECTION_ORDER:
            keys = [(s, k) for (s, k) in self.values if s == section]
            if not keys:
                continue
            lines.append(f"[{section}]")
            for s, k in sorted(keys, key=lambda sk: _schema_index(sk)):
                lines.append(f"{k} = {_fmt(self.values[(s, k)])}")
            lines.append("")
        return "\n".join(lines)


def _schema_index(sk):
    return list(SCHEMA).index(sk)


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str     # keys are case-sensitive (N vs n)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in _SECTION_ORDER:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if (section, key) not in SCHEMA:
                raise ConfigError(f"unknown key [{section}] {key}")
            parser, _ = SCHEMA[(section, key)]
            try:
                values[(section, key)] = parser(raw)
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r} ({exc})")
    return ExperimentConfig(values=values, sections=tuple(cp.sections()))


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a config file and apply `section.key=value` overrides."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config_text(text)
    if not overrides:
        return cfg
    values = dict(cfg.values)
    sections = list(cfg.sections)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        lhs, raw = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override key must be section.key: {lhs!r}")
        section, key = lhs.split(".", 1)
        if (section, key) not in SCHEMA:
            raise ConfigError(f"unknown override key [{section}] {key}")
        parser, _ = SCHEMA[(section, key)]
        try:
            values[(section, key)] = parser(raw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad override value for {lhs}: {raw!r} ({exc})")
        if section not in sections:
            sections.append(section)
    return ExperimentConfig(values=values, sections=tuple(sections))


# -- resolution into runnable objects ---------------------------------------

def build_population(cfg: ExperimentConfig):
    kind = cfg.get("population", "kind")
    N = cfg.get("population", "N")
    m = cfg.get("population", "m")
    seed = cfg.get("population", "seed")
    if kind == "quadratic":
        spectrum = cfg.get("population", "spectrum")
        lo, hi = cfg.get("population", "eigen_lo"), cfg.get("population", "eigen_hi")
        if spectrum == "uniform":
            eig = None
        elif spectrum == "linspace":
            eig = np.linspace(lo, hi, m)
        elif spectrum == "geomspace":
            if lo <= 0:
                raise ConfigError("geomspace spectrum needs eigen_lo > 0")
            eig = np.geomspace(lo, hi, m)
        else:
            raise ConfigError(f"unknown spectrum kind: {spectrum!r}")
        try:
            return build_quadratic(N, m, cfg.get("population", "L"),
                                   cfg.get("population", "spread"), seed,
                                   eigenvalues=eig,
                                   rotate=cfg.get("population", "rotate"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if kind == "logistic":
        try:
            return build_logistic(N, m, cfg.get("population", "samples_per_client"),
                                  seed, lam=cfg.get("population", "reg"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown population kind: {kind!r}")


def build_noise(cfg: ExperimentConfig) -> NoiseModel:
    try:
        return NoiseModel(cfg.get("population", "noise"),
                          cfg.get("population", "sigma"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_pattern(cfg: ExperimentConfig) -> PatternSpec:
    return PatternSpec(kind=cfg.get("pattern", "kind"),
                       S=cfg.get("pattern", "S"),
                       G=cfg.get("pattern", "G"),
                       B=cfg.get("pattern", "B"),
                       offset=cfg.get("pattern", "offset"),
                       p_aa=cfg.get("pattern", "p_aa"),
                       p_uu=cfg.get("pattern", "p_uu"))


def build_x0(cfg: ExperimentConfig, pop, master_seed: int) -> np.ndarray:
    kind = cfg.get("run", "x0_kind")
    scale = cfg.get("run", "x0_scale")
    m = pop.m
    center = getattr(pop, "x_star", None)
    if center is None:
        center = np.zeros(m)
    if kind == "zero":
        return np.zeros(m)
    if kind == "uniform":
        # fixed direction, ||x0 - x*|| = scale
        return center + scale * np.full(m, 1.0 / np.sqrt(m))
    if kind == "gaussian":
        v = substream(derive_seed(master_seed, "x0"), "x0").normal(size=m)
        return center + scale * v / np.linalg.norm(v)
    if kind == "spectral":
        # per-eigenvalue offsets sqrt(scale/lam): spreads the initial error
        # across the spectrum so no single curvature dominates the decay
        diag = getattr(pop, "diag", None)
        if diag is None or np.any(diag <= 0):
            raise ConfigError("spectral x0 needs a diagonal positive spectrum")
        return center + np.sqrt(scale / diag)
    raise ConfigError(f"unknown x0 kind: {kind!r}")


def resolve_plan(cfg: ExperimentConfig, pop, schedule, x0,
                 T: int | None = None, P: int | None = None):
    """Return (gamma, eta, plan_or_None) honoring the planner directive."""
    planner = cfg.get("run", "planner")
    P = P if P is not None else cfg.get("run", "P")
    T = T if T is not None else cfg.get("run", "T")
    if planner == "none":
        gamma = cfg.get("run", "gamma")
        if gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {gamma}")
        return gamma, cfg.get("run", "eta"), None
    gap = cfg.get("run", "gap")
    if gap == "exact":
        f_star = getattr(pop, "f_star", None)
        if f_star is None:
            raise ConfigError("gap=exact needs a population with a known optimum")
        gap = pop.global_value(x0) - f_star
    L = pop.lipschitz
    sigma = cfg.get("population", "sigma") if cfg.get("population", "noise") != "none" else 0.0
    rho = rho_bound(schedule)
    I = cfg.get("run", "I")
    if planner == "cor3.2":
        plan = plan_rates_adaptive(L, gap, sigma, rho, I, P, T)
    elif planner == "cor3.3":
        plan = plan_rates_fixed_amp(L, gap, sigma, rho, I, P, T)
    else:
        raise ConfigError(f"unknown planner: {planner!r}")
    if not plan.valid:
        raise ConfigError(f"planner produced an invalid plan: {plan.notes}")
    return plan.gamma, plan.eta, plan


def build_run_config(cfg: ExperimentConfig, pop, schedule, master_seed: int,
                     T: int | None = None, P: int | None = None) -> RunConfig:
    x0 = build_x0(cfg, pop, master_seed)
    P = P if P is not None else cfg.get("run", "P")
    T = T if T is not None else cfg.get("run", "T")
    gamma, eta, _ = resolve_plan(cfg, pop, schedule, x0, T=T, P=P)
    mode = cfg.get("run", "mode")
    if mode not in MODES:
        raise ConfigError(f"unknown run mode: {mode!r}")
    ev = cfg.get("run", "eval_every")
    mb = cfg.get("run", "minibatch")
    rc = RunConfig(gamma=gamma, eta=eta, local_steps=cfg.get("run", "I"),
                   amplify_every=P, rounds=T, x0=x0,
                   eval_every=ev if ev > 0 else None, mode=mode,
                   minibatch=mb if mb > 0 else None)
    try:
        rc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return rc


def build_schedule(cfg: ExperimentConfig, N: int, T: int, master_seed: int,
                   label: str = "schedule"):
    spec = build_pattern(cfg)
    try:
        return generate_schedule(spec, N, T, derive_seed(master_seed, label))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
