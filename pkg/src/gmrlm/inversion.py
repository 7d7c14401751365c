"""Recursive linearization over wavenumbers, with optional error-mixture compensation."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import time

import numpy as np

from .adjoint import MisfitContext, gradient_state, linearized_data, misfit_value
from .cgmm import MixtureModel
from .grid import PmlProfile, ReceiverSet, ScattererField, restrict_to_grid
from .helmholtz import DEFAULT_TOL, DataRecord
from .regularizer import R_gradient, R_value, RegularizerConfig, apply_A_pow

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ContinuationSchedule:
    kappas: tuple
    angles: tuple

    def __post_init__(self):
        k = tuple(float(v) for v in self.kappas)
        if not k or k[0] <= 0 or any(b <= a for a, b in zip(k, k[1:])):
            raise ConfigurationError("wavenumbers must be positive and strictly increasing")
        a = tuple(float(v) for v in self.angles)
        if not a:
            raise ConfigurationError("need at least one incident angle")
        object.__setattr__(self, "kappas", k)
        object.__setattr__(self, "angles", a)

    @classmethod
    def uniform(cls, kappa_min=math.pi, kappa_max=10 * math.pi, count=10, n_angles=20):
        kappas = np.linspace(kappa_min, kappa_max, count) if count > 1 else [kappa_min]
        return cls(tuple(kappas), tuple(2 * math.pi * np.arange(n_angles) / n_angles))


STEP_RULES = ("max_norm", "gauss_newton")


@dataclass(frozen=True)
class StepControl:
    init: float = 1.0
    factor: float = 0.5
    max_backtracks: int = 20
    armijo: float = 1e-4
    q_min: float = -0.99
    q_max: float = 10.0
    rule: str = "max_norm"

    def __post_init__(self):
        if self.rule not in STEP_RULES:
            raise ConfigurationError(f"step.rule must be one of {STEP_RULES}")
        if not self.init > 0:
            raise ConfigurationError("step.init must be positive")
        if not 0 < self.factor < 1:
            raise ConfigurationError("step.factor must lie in (0, 1)")
        if self.max_backtracks < 0:
            raise ConfigurationError("step.max_backtracks must be >= 0")
        if not -1 < self.q_min < self.q_max:
            raise ConfigurationError("need -1 < q_min < q_max")


@dataclass
class UpdateRecord:
    kappa: float
    angle: float
    misfit: float
    objective: float
    objective_new: float
    step: float
    backtracks: int
    accepted: bool
    rel_error: float = float("nan")
    seconds: float = 0.0


@dataclass
class InversionReport:
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    final: ScattererField | None = None
    models_used: dict = field(default_factory=dict)

    def per_kappa_errors(self):
        out = {}
        for r in self.records:
            out[r.kappa] = r.rel_error
        return out


def relative_error(q_est: ScattererField, q_true: ScattererField) -> float:
    """Relative L2(Omega) error with cell-area weights."""
    if q_true.grid != q_est.grid:
        q_true = restrict_to_grid(q_true, q_est.grid)
    m = q_est.grid.omega_mask()
    ref = np.sqrt(np.sum(q_true.values[m] ** 2))
    if ref == 0:
        raise ValueError("relative error undefined for a zero reference scatterer")
    return float(np.sqrt(np.sum((q_true.values[m] - q_est.values[m]) ** 2)) / ref)


def _same(a, b):
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def lookup_model(models, kappa, angle):
    """Model for (kappa, angle): an angle-specific entry first, then a per-kappa one."""
    if not models:
        return None
    for key, model in models.items():
        if isinstance(key, tuple) and _same(key[0], kappa) and _same(key[1], angle):
            return model
    for key, model in models.items():
        if not isinstance(key, tuple) and _same(key, kappa):
            return model
    return None


def update_step(q: ScattererField, data: DataRecord, model: MixtureModel | None,
                receivers: ReceiverSet, reg: RegularizerConfig | None = None,
                step: StepControl | None = None, profile: PmlProfile | None = None,
                nu=None, tol=DEFAULT_TOL):
    """One projected gradient update of misfit + weighted regularizer.

    The first trial step moves q by ``step.init`` in max norm (rule
    ``max_norm``); rule ``gauss_newton`` instead starts from the minimizer of
    the Gauss-Newton quadratic model along -g when that is smaller.  The step
    is then scaled by ``step.factor`` until the projected Armijo condition
    holds.  Without a model the misfit is plain least squares with
    covariance nu*I.
    """
    reg = reg or RegularizerConfig()
    step = step or StepControl()
    profile = profile or PmlProfile()
    kappa, angle = data.kappa, data.angle
    if model is None:
        model = MixtureModel.degenerate(data.values.size, kappa)
    ctx = MisfitContext(data, model, nu)
    area = q.grid.cell_area

    def objective(qq):
        return misfit_value(qq, kappa, angle, ctx, receivers, profile, tol) + reg.weight * R_value(qq, reg)

    gfield, phi, (solver, u, pred) = gradient_state(q, kappa, angle, ctx, receivers, profile, tol)
    g = gfield.values + reg.weight * R_gradient(q, reg).values
    j0 = phi + reg.weight * R_value(q, reg)
    gmax = np.abs(g).max()
    if gmax == 0 or not np.isfinite(gmax):
        return q, UpdateRecord(kappa, angle, phi, j0, j0, 0.0, 0, False)

    alpha = step.init / gmax
    if step.rule == "gauss_newton":
        slope = area * float(np.sum(g * g))
        dd = linearized_data(solver, angle, u, g, receivers)
        half = apply_A_pow(ScattererField(q.grid, g), reg.s / 2.0, reg).values
        curv = ctx.curvature(pred, dd) + reg.weight * area * float(np.sum(half**2))
        if curv > 0:
            alpha = min(alpha, slope / curv)
    for tries in range(step.max_backtracks + 1):
        trial = ScattererField(q.grid, q.values - alpha * g).clamp(step.q_min, step.q_max)
        j1 = objective(trial)
        decrease = step.armijo * area * float(np.sum(g * (q.values - trial.values)))
        if j1 < j0 and j1 <= j0 - decrease:
            return trial, UpdateRecord(kappa, angle, phi, j0, j1, float(alpha), tries, True)
        alpha *= step.factor
    log.warning("no descent at kappa=%.4g angle=%.4g after %d backtracks; step skipped",
                kappa, angle, step.max_backtracks)
    return q, UpdateRecord(kappa, angle, phi, j0, j0, 0.0, step.max_backtracks, False)


def run_inversion(schedule: ContinuationSchedule, data, receivers: ReceiverSet, grid,
                  models=None, q_true: ScattererField | None = None,
                  q0: ScattererField | None = None, reg=None, step=None, profile=None,
                  nu=None, tol=DEFAULT_TOL, progress=None) -> InversionReport:
    """Sweep wavenumbers upward, one update per incident angle, warm-starting each level.

    ``data`` maps (kappa, angle) to DataRecord (or is an iterable of records);
    ``models`` maps kappa or (kappa, angle) to a MixtureModel, or is None for
    plain recursive linearization.
    """
    records = _index_records(data)
    missing = [(k, a) for k in schedule.kappas for a in schedule.angles
               if _find(records, k, a) is None]
    if missing:
        raise ConfigurationError(f"no data for (kappa, angle) pairs {missing[:5]}"
                                 + (" ..." if len(missing) > 5 else ""))
    q = q0 if q0 is not None else ScattererField.zeros(grid)
    report = InversionReport()
    for ki, kappa in enumerate(schedule.kappas):
        for angle in schedule.angles:
            model = lookup_model(models, kappa, angle)
            if models and model is None:
                log.warning("no error model for kappa=%.4g; using plain least squares", kappa)
            t0 = time.perf_counter()
            q, rec = update_step(q, _find(records, kappa, angle), model, receivers, reg, step,
                                 profile, nu, tol)
            rec.seconds = time.perf_counter() - t0
            if q_true is not None:
                rec.rel_error = relative_error(q, q_true)
            report.records.append(rec)
            report.models_used[(kappa, angle)] = model
            if progress:
                progress(rec)
        report.snapshots[ki] = q
    report.final = q
    return report


def _index_records(data):
    if isinstance(data, dict):
        return list(data.values())
    return list(data)


def _find(records, kappa, angle):
    for r in records:
        if _same(r.kappa, kappa) and _same(r.angle, angle):
            return r
    return None
