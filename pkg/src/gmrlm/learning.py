"""Training scatterers and fine-minus-coarse model-error samples."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from .cgmm import ErrorSampleSet
from .grid import GridSpec, PmlProfile, ReceiverSet, ScattererField, interpolation_matrix
from .helmholtz import DEFAULT_TOL, HelmholtzSolver, SolverError

log = logging.getLogger(__name__)

FAMILIES = ("gaussian_bumps", "random_square")

GAUSSIAN_BUMP_RANGES = {
    "a1": (1.0, 3.0), "a2": (1.0, 3.0), "a3": (-1.0, 1.0),
    "a4": (8.0, 10.0), "a6": (8.0, 10.0), "a5": (-0.8, 0.8), "a7": (-0.8, 0.8),
}
RANDOM_SQUARE_RANGES = {"height": (-1.0, 1.0), "half_width": (0.05, 0.5)}


def _peaks(x, y):
    return (0.3 * (1 - x) ** 2 * np.exp(-x**2 - (y + 1) ** 2)
            - (0.2 * x - x**3 - y**5) * np.exp(-x**2 - y**2)
            - 0.03 * np.exp(-(x + 1) ** 2 - y**2))


def example1_function(x, y):
    """Scaled peaks-type scatterer; callers restrict it to Omega."""
    return _peaks(3.0 * np.asarray(x), 3.0 * np.asarray(y))


def example2_function(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    q = np.where((np.abs(x) <= 0.3) & (np.abs(y) <= 0.3), 0.7, 0.0)
    return np.where((np.abs(x) < 0.1) & (np.abs(y) < 0.1), -0.1, q)


def true_scatterer_example1(grid: GridSpec) -> ScattererField:
    return ScattererField.from_function(grid, example1_function)


def true_scatterer_example2(grid: GridSpec) -> ScattererField:
    return ScattererField.from_function(grid, example2_function)


TRUE_SCATTERERS = {"example1": example1_function, "example2": example2_function}


@dataclass(frozen=True)
class ExampleSpec:
    family: str = "gaussian_bumps"
    count: int = 200
    seed: int = 0
    ranges: dict = field(default=None, hash=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown example family {self.family!r}; choose from {FAMILIES}")
        if self.count < 1:
            raise ValueError("example count must be >= 1")
        defaults = GAUSSIAN_BUMP_RANGES if self.family == "gaussian_bumps" else RANDOM_SQUARE_RANGES
        ranges = dict(defaults)
        ranges.update(self.ranges or {})
        for key, (lo, hi) in ranges.items():
            if lo > hi:
                raise ValueError(f"empty range for {key}: [{lo}, {hi}]")
        object.__setattr__(self, "ranges", ranges)


def draw_parameters(spec: ExampleSpec, index: int) -> dict:
    if not 0 <= index < spec.count:
        raise IndexError(f"example index {index} outside [0, {spec.count})")
    rng = np.random.default_rng([spec.seed, index])
    r = spec.ranges
    if spec.family == "gaussian_bumps":
        keys = ("a1", "a2", "a3", "a4", "a5", "a6", "a7")
        return {k: rng.uniform(*r[k], size=3) for k in keys}
    height = rng.uniform(*r["height"])
    hw = rng.uniform(*r["half_width"])
    cx, cy = rng.uniform(-1.0 + hw, 1.0 - hw, size=2)
    return {"height": height, "half_width": hw, "cx": cx, "cy": cy}


def example_function(spec: ExampleSpec, index: int):
    """Analytic training scatterer number ``index``, as a function of (x, y)."""
    p = draw_parameters(spec, index)
    if spec.family == "gaussian_bumps":
        def f(x, y):
            bx = np.clip(1.0 - np.asarray(x) ** 2, 0.0, None)
            by = np.clip(1.0 - np.asarray(y) ** 2, 0.0, None)
            out = np.zeros(np.broadcast(bx, by).shape)
            for k in range(3):
                out += (bx ** p["a1"][k] * by ** p["a2"][k] * p["a3"][k]
                        * np.exp(-p["a4"][k] * (x - p["a5"][k]) ** 2
                                 - p["a6"][k] * (y - p["a7"][k]) ** 2))
            return out
    else:
        def f(x, y):
            inside = ((np.abs(np.asarray(x) - p["cx"]) <= p["half_width"])
                      & (np.abs(np.asarray(y) - p["cy"]) <= p["half_width"]))
            return np.where(inside, p["height"], 0.0)
    return f


def gen_example(spec: ExampleSpec, index: int, grid: GridSpec) -> ScattererField:
    return ScattererField.from_function(grid, example_function(spec, index))


@dataclass
class ErrorSamplingReport:
    kappa: float
    attempted: int = 0
    failed: list = field(default_factory=list)


def error_samples_for_kappa(spec: ExampleSpec, kappa, angles, fine: GridSpec, coarse: GridSpec,
                            receivers: ReceiverSet, profile: PmlProfile | None = None,
                            tol=DEFAULT_TOL):
    """Model errors F(q_n) - F_a(q_n) at one wavenumber for every angle.

    Each training field is sampled from its analytic definition on both grids;
    one factorization per grid serves all angles.  Returns a dict
    ``angle -> ErrorSampleSet`` and a report listing skipped examples.
    """
    profile = profile or PmlProfile()
    angles = [float(a) for a in np.atleast_1d(angles)]
    M_fine = interpolation_matrix(fine, receivers.points)
    M_coarse = interpolation_matrix(coarse, receivers.points)
    rows = {a: [] for a in angles}
    report = ErrorSamplingReport(float(kappa), spec.count)
    for n in range(spec.count):
        f = example_function(spec, n)
        try:
            sf = HelmholtzSolver(ScattererField.from_function(fine, f), kappa, profile, tol)
            sc = HelmholtzSolver(ScattererField.from_function(coarse, f), kappa, profile, tol)
            errs = {}
            for a in angles:
                uf, _ = sf.scattered(a)
                uc, _ = sc.scattered(a)
                errs[a] = M_fine @ uf.values.ravel() - M_coarse @ uc.values.ravel()
        except SolverError as exc:
            log.warning("skipping training example %d at kappa=%g: %s", n, kappa, exc)
            report.failed.append(n)
            continue
        for a in angles:
            rows[a].append(errs[a])
    sets = {a: ErrorSampleSet(kappa, np.array(rows[a]).reshape(-1, receivers.count), a)
            for a in angles}
    return sets, report


def compute_error_samples(spec: ExampleSpec, kappa, angle, fine: GridSpec, coarse: GridSpec,
                          receivers: ReceiverSet, profile=None, tol=DEFAULT_TOL) -> ErrorSampleSet:
    sets, _ = error_samples_for_kappa(spec, kappa, [angle], fine, coarse, receivers, profile, tol)
    return sets[float(angle)]


def pool(sets) -> ErrorSampleSet:
    """Stack sample sets of one wavenumber (e.g. over incident angles)."""
    sets = list(sets)
    return ErrorSampleSet(sets[0].kappa, np.vstack([s.samples for s in sets]), sets[0].angle)
