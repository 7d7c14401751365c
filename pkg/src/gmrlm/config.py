"""Flat ``section.key = value`` configuration with defaults from the reference experiment.

Blank lines and ``#`` comments are ignored.  Numbers may be written as
multiples of pi (``pi``, ``4pi``, ``2.5*pi``).  ``auto`` selects the
scale-aware default where a key allows it.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import re

from .cgmm import default_delta
from .grid import GridSpec, PmlProfile, build_receivers
from .inversion import STEP_RULES, ContinuationSchedule, StepControl
from .learning import FAMILIES, ExampleSpec
from .regularizer import RegularizerConfig


class ConfigError(ValueError):
    pass


_PI = re.compile(r"^\s*([+-]?\d*\.?\d*(?:[eE][+-]?\d+)?)\s*\*?\s*pi\s*$")


def _real(text):
    m = _PI.match(text)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    return float(text)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _auto_real(text):
    return None if text.strip().lower() == "auto" else _real(text)


def _str(text):
    return text.strip()


# key -> (parser, default, check, constraint text)
SCHEMA = {
    "grid.coarse_n": (_int, 128, lambda v: v >= 3, ">= 3"),
    "grid.fine_n": (_int, 432, lambda v: v >= 3, ">= 3"),
    "grid.reference_n": (_int, 640, lambda v: v >= 3, ">= 3"),
    "grid.x1": (_real, -1.0, None, ""),
    "grid.x2": (_real, 1.0, None, ""),
    "grid.y1": (_real, -1.0, None, ""),
    "grid.y2": (_real, 1.0, None, ""),
    "pml.sigma0": (_real, 1.5, lambda v: v > 1, "> 1"),
    "pml.p": (_real, 2.5, lambda v: v >= 2, ">= 2"),
    "pml.d1": (_real, 0.15, lambda v: v > 0, "> 0"),
    "pml.d2": (_real, 0.15, lambda v: v > 0, "> 0"),
    "receivers.count": (_int, 400, lambda v: v >= 1, ">= 1"),
    "receivers.radius": (_real, 1.0, lambda v: v > 0, "> 0"),
    "continuation.kappa_min": (_real, math.pi, lambda v: v > 0, "> 0"),
    "continuation.kappa_max": (_real, 10 * math.pi, lambda v: v > 0, "> 0"),
    "continuation.count": (_int, 10, lambda v: v >= 1, ">= 1"),
    "continuation.angles": (_int, 20, lambda v: v >= 1, ">= 1"),
    "noise.sigma": (_real, 0.02, lambda v: v >= 0, ">= 0"),
    "noise.nu": (_auto_real, None, lambda v: v is None or v >= 0, ">= 0 or auto"),
    "noise.seed": (_int, 0, None, ""),
    "mixture.K": (_int, 4, lambda v: v >= 1, ">= 1"),
    "mixture.delta": (_auto_real, None, lambda v: v is None or v >= 0, ">= 0 or auto"),
    "mixture.tol": (_real, 1e-8, lambda v: v > 0, "> 0"),
    "mixture.max_iter": (_int, 500, lambda v: v >= 1, ">= 1"),
    "mixture.seed": (_int, 0, None, ""),
    "mixture.retries": (_int, 5, lambda v: v >= 0, ">= 0"),
    "reg.a_scale": (_real, 0.01, lambda v: v > 0, "> 0"),
    "reg.s": (_real, 1.5, lambda v: v > 0, "> 0"),
    "reg.lambda": (_real, 0.0, lambda v: v >= 0, ">= 0"),
    "reg.delta_tv": (_real, 1e-3, lambda v: v > 0, "> 0"),
    "reg.weight": (_real, 1.0, lambda v: v >= 0, ">= 0"),
    "step.init": (_real, 1.0, lambda v: v > 0, "> 0"),
    "step.factor": (_real, 0.5, lambda v: 0 < v < 1, "in (0, 1)"),
    "step.max_backtracks": (_int, 20, lambda v: v >= 0, ">= 0"),
    "step.q_min": (_real, -0.99, lambda v: v > -1, "> -1"),
    "step.q_max": (_real, 10.0, None, ""),
    "step.rule": (_str, "max_norm", lambda v: v in STEP_RULES, f"one of {STEP_RULES}"),
    "learning.family": (_str, "gaussian_bumps", lambda v: v in FAMILIES, f"one of {FAMILIES}"),
    "learning.count": (_int, 200, lambda v: v >= 1, ">= 1"),
    "learning.seed": (_int, 0, None, ""),
    "learning.pool_angles": (_bool, False, None, ""),
    "learning.per_angle": (_bool, False, None, ""),
    "solver.tol": (_real, 1e-10, lambda v: 0 < v < 1, "in (0, 1)"),
}


@dataclass
class InversionConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def omega(self):
        v = self.values
        return (v["grid.x1"], v["grid.x2"], v["grid.y1"], v["grid.y2"])

    @property
    def profile(self) -> PmlProfile:
        v = self.values
        return PmlProfile(v["pml.sigma0"], v["pml.p"], v["pml.d1"], v["pml.d2"])

    def grid(self, which="coarse") -> GridSpec:
        return GridSpec.around_omega(self.values[f"grid.{which}_n"], self.profile, self.omega)

    def receivers(self):
        return build_receivers(self["receivers.count"], self["receivers.radius"], self.omega)

    def schedule(self) -> ContinuationSchedule:
        v = self.values
        return ContinuationSchedule.uniform(v["continuation.kappa_min"], v["continuation.kappa_max"],
                                            v["continuation.count"], v["continuation.angles"])

    def regularizer(self) -> RegularizerConfig:
        v = self.values
        return RegularizerConfig(v["reg.a_scale"], v["reg.s"], v["reg.lambda"], v["reg.delta_tv"],
                                 v["reg.weight"])

    def step(self) -> StepControl:
        v = self.values
        return StepControl(init=v["step.init"], factor=v["step.factor"],
                           max_backtracks=v["step.max_backtracks"],
                           q_min=v["step.q_min"], q_max=v["step.q_max"], rule=v["step.rule"])

    def examples(self, count=None, seed=None, family=None) -> ExampleSpec:
        v = self.values
        return ExampleSpec(family or v["learning.family"], count or v["learning.count"],
                           v["learning.seed"] if seed is None else seed)

    def mixture_delta(self, samples):
        d = self.values["mixture.delta"]
        return default_delta(samples) if d is None else d

    def dumps(self) -> str:
        lines = []
        for key in SCHEMA:
            lines.append(f"{key} = {format_value(self.values[key])}")
        return "\n".join(lines) + "\n"


def format_value(v):
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def defaults() -> InversionConfig:
    return InversionConfig({k: spec[1] for k, spec in SCHEMA.items()})


def loads(text: str, source="<string>") -> InversionConfig:
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        parser, _, check, constraint = SCHEMA[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        if check is not None and not check(parsed):
            raise ConfigError(f"{source}:{lineno}: {key} = {value} violates constraint {constraint}")
        values[key] = parsed
    cfg = InversionConfig(values)
    _cross_check(cfg)
    return cfg


def load_config(path) -> InversionConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text, str(path))


def _cross_check(cfg):
    v = cfg.values
    if not (v["grid.x1"] < v["grid.x2"] and v["grid.y1"] < v["grid.y2"]):
        raise ConfigError("grid: need x1 < x2 and y1 < y2")
    if v["continuation.kappa_max"] < v["continuation.kappa_min"]:
        raise ConfigError("continuation.kappa_max must be >= continuation.kappa_min")
    if v["continuation.count"] > 1 and v["continuation.kappa_max"] == v["continuation.kappa_min"]:
        raise ConfigError("continuation: several levels need kappa_max > kappa_min")
    if v["step.q_max"] <= v["step.q_min"]:
        raise ConfigError("step.q_max must exceed step.q_min")
    try:
        cfg.receivers()
    except ValueError as exc:
        raise ConfigError(f"receivers: {exc}") from None
    try:
        cfg.schedule()
    except ValueError as exc:
        raise ConfigError(f"continuation: {exc}") from None
