"""Circular complex Gaussian mixtures and their EM fit.

The density of a component is

    N_c(eta | zeta, Sigma) = exp(-(eta - zeta)^H Sigma^{-1} (eta - zeta)) / (pi^N det Sigma)

Everything is evaluated in log space through Cholesky factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_PI = np.log(np.pi)


class NumericError(ArithmeticError):
    pass


class ComponentCollapse(NumericError):
    pass


@dataclass(frozen=True, eq=False)
class ComplexGaussian:
    zeta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        z = np.array(self.zeta, dtype=complex).ravel()
        s = np.array(self.sigma, dtype=complex).reshape(z.size, z.size)
        scale = max(1.0, float(np.abs(s).max(initial=0.0)))
        if not np.allclose(s, s.conj().T, rtol=0, atol=1e-12 * scale):
            raise ValueError("covariance is not Hermitian")
        z.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "sigma", s)

    @property
    def dim(self) -> int:
        return self.zeta.size


@dataclass(frozen=True, eq=False)
class MixtureModel:
    weights: np.ndarray
    components: tuple
    kappa_tag: float = 0.0
    delta_reg: float = 0.0
    angle_tag: float | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        comps = tuple(self.components)
        if w.size != len(comps) or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w <= 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must lie in (0, 1] and sum to 1, got {w}")
        if len({c.dim for c in comps}) != 1:
            raise ValueError("components have different dimensions")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def means(self) -> np.ndarray:
        return np.array([c.zeta for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components])

    @classmethod
    def degenerate(cls, dim, kappa=0.0):
        """One zero-mean, zero-covariance component: plain least squares once noise is added."""
        return cls(np.ones(1), (ComplexGaussian(np.zeros(dim), np.zeros((dim, dim))),),
                   kappa_tag=kappa)


@dataclass(frozen=True, eq=False)
class ErrorSampleSet:
    kappa: float
    samples: np.ndarray
    angle: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.ndim != 2:
            raise ValueError("samples must be an (N_s, N_d) array")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def cholesky(sigma) -> np.ndarray:
    """Lower Cholesky factor; raises NumericError naming the failing pivot."""
    sigma = np.asarray(sigma, dtype=complex)
    c, info = linalg.lapack.zpotrf(sigma, lower=1, clean=1)
    if info > 0:
        raise NumericError(f"covariance not positive definite: pivot {info} of {sigma.shape[0]} "
                           "is not positive")
    if info < 0:
        raise NumericError(f"invalid covariance argument (lapack info={info})")
    return c


def _log_density_rows(etas, zeta, chol) -> np.ndarray:
    diff = np.atleast_2d(etas) - zeta
    w = linalg.solve_triangular(chol, diff.T, lower=True)
    quad = np.sum(np.abs(w) ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.real(np.diag(chol))))
    return -zeta.size * LOG_PI - logdet - quad


def log_density(eta, g: ComplexGaussian) -> float:
    return float(_log_density_rows(np.asarray(eta, dtype=complex).ravel(), g.zeta,
                                   cholesky(g.sigma))[0])


def density(eta, g: ComplexGaussian) -> float:
    """Literal density value; only sensible in low dimension."""
    return float(np.exp(log_density(eta, g)))


def weighted_log_densities(etas, model: MixtureModel, extra_diag=0.0) -> np.ndarray:
    """(N, K) array of ln pi_k + ln N_c(eta_n | zeta_k, Sigma_k + extra_diag I)."""
    etas = np.atleast_2d(np.asarray(etas, dtype=complex))
    eye = np.eye(model.dim)
    cols = []
    for w, comp in zip(model.weights, model.components):
        chol = cholesky(comp.sigma + extra_diag * eye)
        cols.append(np.log(w) + _log_density_rows(etas, comp.zeta, chol))
    return np.column_stack(cols)


def _normalize_log(lw):
    norm = logsumexp(lw, axis=1)
    if not np.all(np.isfinite(norm)):
        raise NumericError("every component has zero density at some sample")
    return np.exp(lw - norm[:, None]), norm


def responsibilities(eta, model: MixtureModel) -> np.ndarray:
    gamma, _ = _normalize_log(weighted_log_densities(eta, model))
    return gamma[0]


def responsibility_matrix(samples: ErrorSampleSet, model: MixtureModel):
    """E step: (N_s, K) responsibilities and the log likelihood of ``model``."""
    gamma, norm = _normalize_log(weighted_log_densities(samples.samples, model))
    return gamma, float(norm.sum())


def log_likelihood(samples: ErrorSampleSet, model: MixtureModel) -> float:
    return float(logsumexp(weighted_log_densities(samples.samples, model), axis=1).sum())


def m_step(samples: ErrorSampleSet, gamma, delta=0.0, collapse_tol=1e-8) -> MixtureModel:
    E = samples.samples
    gamma = np.asarray(gamma, dtype=float).reshape(E.shape[0], -1)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    nk = gamma.sum(axis=0)
    if np.any(nk < collapse_tol * E.shape[0]):
        raise ComponentCollapse(f"effective component sizes {nk} below collapse threshold")
    means = (gamma.T @ E) / nk[:, None]
    eye = np.eye(E.shape[1])
    comps = []
    for k in range(gamma.shape[1]):
        D = E - means[k]
        S = (D * gamma[:, k, None]).T @ D.conj() / nk[k]
        S = 0.5 * (S + S.conj().T) + delta * eye
        comps.append(ComplexGaussian(means[k], S))
    weights = nk / E.shape[0]
    return MixtureModel(weights / weights.sum(), tuple(comps), samples.kappa, delta,
                        samples.angle)


def pooled_covariance(samples: ErrorSampleSet) -> np.ndarray:
    D = samples.samples - samples.samples.mean(axis=0)
    S = D.T @ D.conj() / samples.count
    return 0.5 * (S + S.conj().T)


def default_delta(samples: ErrorSampleSet, factor=1e-6) -> float:
    """Scale-aware regularization: ``factor`` times the mean pooled variance."""
    tr = float(np.real(np.trace(pooled_covariance(samples))))
    return factor * tr / samples.dim if tr > 0 else factor


def initial_model(samples: ErrorSampleSet, K, delta, rng) -> MixtureModel:
    idx = rng.choice(samples.count, size=K, replace=False)
    S = pooled_covariance(samples) + delta * np.eye(samples.dim)
    comps = tuple(ComplexGaussian(samples.samples[i], S) for i in idx)
    return MixtureModel(np.full(K, 1.0 / K), comps, samples.kappa, delta, samples.angle)


@dataclass
class EMResult:
    model: MixtureModel
    trace: list = field(default_factory=list)
    iterations: int = 0
    restarts: int = 0
    converged: bool = False


def fit_em(samples: ErrorSampleSet, K=4, delta=None, tol=1e-8, max_iter=500, seed=0,
           retries=5) -> EMResult:
    """Complex EM with the regularized covariance update.

    Stops when the relative change of the log likelihood drops below ``tol``
    and returns the iterate with the best likelihood seen.  A collapsed
    component triggers a fresh seeded initialization, at most ``retries``
    times.
    """
    if samples.count < K:
        raise ValueError(f"need at least K={K} samples, got {samples.count}")
    if delta is None:
        delta = default_delta(samples)
    for attempt in range(retries + 1):
        rng = np.random.default_rng([seed, attempt])
        try:
            result = _run_em(samples, initial_model(samples, K, delta, rng), delta, tol, max_iter)
        except ComponentCollapse as exc:
            log.warning("EM restart %d after collapse: %s", attempt + 1, exc)
            continue
        result.restarts = attempt
        return result
    raise ComponentCollapse(f"EM failed to avoid component collapse in {retries + 1} attempts")


def _run_em(samples, model, delta, tol, max_iter) -> EMResult:
    gamma, ll = responsibility_matrix(samples, model)
    trace = [ll]
    best, best_ll = model, ll
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        model = m_step(samples, gamma, delta)
        gamma, ll = responsibility_matrix(samples, model)
        change = ll - trace[-1]
        trace.append(ll)
        if ll > best_ll:
            best, best_ll = model, ll
        if abs(change) <= tol * (1.0 + abs(ll)):
            converged = True
            break
    return EMResult(best, trace, it, 0, converged)


def realify(e) -> np.ndarray:
    """Interleave real and imaginary parts: (Re e1, Im e1, Re e2, Im e2, ...)."""
    e = np.asarray(e, dtype=complex).ravel()
    return np.column_stack([e.real, e.imag]).ravel()


def real_representation(sigma, atol=1e-12) -> np.ndarray:
    """Real 2N x 2N embedding with 2x2 blocks [[Re s, -Im s], [Im s, Re s]]."""
    s = np.asarray(sigma, dtype=complex)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.allclose(s, s.conj().T, rtol=0, atol=atol * max(1.0, np.abs(s).max())):
        raise ValueError("matrix is not Hermitian")
    n = s.shape[0]
    M = np.empty((2 * n, 2 * n))
    M[0::2, 0::2] = s.real
    M[0::2, 1::2] = -s.imag
    M[1::2, 0::2] = s.imag
    M[1::2, 1::2] = s.real
    return M
