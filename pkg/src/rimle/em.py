"""Constrained EM fitting of the Gaussian mixture with an improper noise component."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math

import numpy as np

from ._validation import as_data_array, check_scalar
from .constraints import ConstraintConfig, EigenvalueBundle, eigen_line_search, noise_mass
from .exceptions import (
    AllStartsFailedError,
    DegenerateFitError,
    EmptyComponentError,
    PreconditionError,
)
from .model import (
    ComponentParams,
    IcdValue,
    MixtureParams,
    _posterior_matrix,
    assign,
    log_psi,
    log_pseudo_likelihood,
)

__all__ = [
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITER",
    "DEFAULT_N_STARTS",
    "DEFAULT_GAMMA",
    "DEFAULT_PI_MAX",
    "DEFAULT_MIN_COMPONENT_MASS",
    "INIT_NOISE_WEIGHT",
    "MAX_RESEEDS",
    "EmConfig",
    "Responsibilities",
    "ComponentMoments",
    "FitResult",
    "StartSummary",
    "MultistartResult",
    "check_a0",
    "e_step",
    "m_step_proportions",
    "m_step_moments",
    "m_step_covariances",
    "em_fit",
    "initialize",
    "multistart_fit",
]

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 1000
DEFAULT_N_STARTS = 30
DEFAULT_GAMMA = 100.0
DEFAULT_PI_MAX = 0.5
DEFAULT_MIN_COMPONENT_MASS = 1e-10
INIT_NOISE_WEIGHT = 0.05
MAX_RESEEDS = 3


@dataclass(frozen=True)
class EmConfig:
    """Tuning knobs of a fit.

    Parameters
    ----------
    icd : IcdValue
        Improper constant density.
    n_components : int
        Number of Gaussian components ``G``.
    constraints : ConstraintConfig
        Eigenratio bound and noise cap.
    tol : float
        Stop when the absolute change of the average log pseudo-likelihood is
        at most ``tol``.
    max_iter : int
        Safety cap on EM iterations per start.
    n_starts : int
        Number of random starts used by :func:`multistart_fit`.
    seed : int
        Base seed; start ``s`` uses ``numpy.random.default_rng([seed, s])``.
    min_component_mass : float
        A component with summed responsibility ``<= min_component_mass * n``
        counts as empty.
    """

    icd: IcdValue
    n_components: int
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    n_starts: int = DEFAULT_N_STARTS
    seed: int = 0
    min_component_mass: float = DEFAULT_MIN_COMPONENT_MASS

    def __post_init__(self):
        if not isinstance(self.icd, IcdValue):
            raise TypeError("icd must be an IcdValue")
        check_scalar(self.n_components, "n_components", lower=1, integer=True)
        check_scalar(self.tol, "tol", lower=0.0, lower_inclusive=False)
        check_scalar(self.max_iter, "max_iter", lower=1, integer=True)
        check_scalar(self.n_starts, "n_starts", lower=1, integer=True)
        check_scalar(self.seed, "seed", lower=0, integer=True)
        check_scalar(self.min_component_mass, "min_component_mass", lower=0.0)

    @property
    def gamma(self):
        return self.constraints.gamma

    @property
    def pi_max(self):
        return self.constraints.pi_max

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """Pseudo-posterior matrix (n x (G+1), noise in column 0) and its column sums."""

    matrix: np.ndarray
    column_sums: np.ndarray

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix, matrix.sum(axis=0))

    @property
    def n(self):
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class ComponentMoments:
    """Weighted mean and scatter of one component, with the scatter's eigendecomposition."""

    weight: float
    mean: np.ndarray
    scatter: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(eq=False)
class FitResult:
    """Outcome of a single EM run.

    ``trajectory`` holds the average log pseudo-likelihood after every
    iteration, starting with the value at the initial parameters (restarted
    whenever an empty component is re-seeded).
    """

    theta: MixtureParams
    loglik: float
    iterations: int
    converged: bool
    assignments: np.ndarray
    noise_proportion: float
    trajectory: list
    n_reseeds: int = 0


@dataclass
class StartSummary:
    start: int
    loglik: float = math.nan
    iterations: int = 0
    converged: bool = False
    min_eigenvalue: float = math.nan
    error: str = None


@dataclass(eq=False)
class MultistartResult:
    """Best fit over all starts together with a summary line per start."""

    best: FitResult
    best_start: int
    starts: list


def check_a0(data, cfg):
    """Whether the data have enough distinct rows for the estimator to exist.

    With ``delta > 0`` the number of distinct rows must exceed
    ``G + ceil(n * pi_max)``; with ``delta = 0`` it must exceed ``G``.
    """
    X = as_data_array(data)
    distinct = np.unique(X, axis=0).shape[0]
    if cfg.icd.is_zero:
        return distinct > cfg.n_components
    return distinct > cfg.n_components + math.ceil(X.shape[0] * cfg.pi_max)


def e_step(data, theta, icd):
    X = as_data_array(data)
    return Responsibilities.from_matrix(_posterior_matrix(X, theta, icd))


def m_step_proportions(resp, cfg):
    """Noise weight capped at ``pi_max``; Gaussian weights share the remainder.

    Returns
    -------
    noise_weight : float
    weights : ndarray of shape (G,)
    """
    n = resp.n
    if n <= 0:
        raise ValueError("responsibilities are empty")
    t0 = resp.column_sums[0]
    tj = resp.column_sums[1:]
    gauss_mass = tj.sum()
    if t0 / n >= 1.0 or gauss_mass <= 0:
        raise DegenerateFitError("all responsibility mass is on the noise component")
    noise_weight = min(cfg.pi_max, t0 / n)
    # (1 - pi_0) / (1 - T_0 / n) * T_j / n, written so it stays accurate near T_0 = n
    weights = (1.0 - noise_weight) * (tj / gauss_mass)
    return float(noise_weight), weights


def m_step_moments(data, resp, min_component_mass=0.0):
    """Weighted means, scatter matrices and their spectral decompositions.

    Raises
    ------
    EmptyComponentError
        If some component has summed responsibility ``<= min_component_mass * n``;
        ``exc.components`` lists the offending 0-based component indices.
    """
    X = as_data_array(data)
    tau = resp.matrix[:, 1:]
    totals = resp.column_sums[1:]
    empty = np.flatnonzero(totals <= min_component_mass * X.shape[0])
    if empty.size:
        exc = EmptyComponentError(f"components {empty.tolist()} have no mass")
        exc.components = empty.tolist()
        raise exc
    out = []
    for j in range(tau.shape[1]):
        w = tau[:, j]
        mean = (w @ X) / totals[j]
        centered = X - mean
        scatter = (centered * w[:, None]).T @ centered / totals[j]
        scatter = 0.5 * (scatter + scatter.T)
        evals, evecs = np.linalg.eigh(scatter)
        out.append(ComponentMoments(float(totals[j]), mean, scatter,
                                    evals[::-1].copy(), evecs[:, ::-1].copy()))
    return out


def m_step_covariances(moments, resp, cfg):
    """Covariances maximizing the expected complete log-likelihood under the eigenratio bound.

    When the scatter eigenvalues already satisfy the global ratio bound the
    scatter matrices are used as they are; otherwise the eigenvalues are
    replaced by the solution of :func:`eigen_line_search` with weights ``T_j``
    and the eigenvectors are kept.

    Returns
    -------
    list of ComponentParams
    """
    gamma = cfg.gamma
    evals = np.array([np.maximum(mom.eigenvalues, 0.0) for mom in moments])
    lmin, lmax = evals.min(), evals.max()
    if lmin > 0 and lmax <= gamma * lmin:
        return [ComponentParams(mom.mean, mom.scatter, ev, mom.eigenvectors)
                for mom, ev in zip(moments, evals)]
    weights = resp.column_sums[1:]
    _, clamped = eigen_line_search(EigenvalueBundle(weights, evals), gamma)
    return [ComponentParams.from_spectral(mom.mean, ev, mom.eigenvectors)
            for mom, ev in zip(moments, clamped)]


def _global_diag_cov(X):
    """Diagonal matrix of squared column MADs; columns with MAD 0 fall back to the variance."""
    med = np.median(X, axis=0)
    scale = np.median(np.abs(X - med), axis=0) ** 2
    zero = scale == 0
    scale[zero] = np.var(X[:, zero], axis=0)
    return np.diag(scale)


def _reseed(X, theta, icd, empty, cfg):
    lp = log_psi(X, theta, icd)
    order = np.argsort(lp, kind="stable")
    cov = _global_diag_cov(X)
    comps = list(theta.components)
    used = set()
    k = 0
    for j in empty:
        while tuple(X[order[k]]) in used:
            k += 1
        used.add(tuple(X[order[k]]))
        comps[j] = _feasible_component(X[order[k]], cov, cfg.gamma)
        k += 1
    weights = theta.weights.copy()
    weights[empty] = (1.0 - theta.noise_weight) / theta.n_components
    weights *= (1.0 - theta.noise_weight) / weights.sum()
    return MixtureParams(theta.noise_weight, weights, comps)


def _feasible_component(mean, cov, gamma):
    evals = np.diag(cov).copy()
    if evals.min() <= 0 or evals.max() > gamma * evals.min():
        _, clamped = eigen_line_search(EigenvalueBundle([1.0], evals[None, :]), gamma)
        evals = clamped[0]
    return ComponentParams.from_spectral(mean, evals, np.eye(evals.size))


def em_fit(data, cfg, theta0):
    """Run the constrained EM algorithm from ``theta0``.

    Each iteration performs the E-step, the proportion update, the weighted
    moments and the constrained covariance update, then stops once the
    average log pseudo-likelihood changes by at most ``cfg.tol``.

    A component whose mass vanishes is re-seeded at the observation with the
    smallest pseudo-density, at most ``MAX_RESEEDS`` times.

    Raises
    ------
    PreconditionError
        If :func:`check_a0` fails.
    EmptyComponentError
        If a component empties after all re-seeds were used.
    """
    X = as_data_array(data)
    if theta0.n_components != cfg.n_components or theta0.dim != X.shape[1]:
        raise ValueError("theta0 does not match the configuration or data dimension")
    if not check_a0(X, cfg):
        raise PreconditionError(
            "not enough distinct observations for the requested number of components "
            "and noise cap")
    icd = cfg.icd
    theta = theta0
    loglik = log_pseudo_likelihood(X, theta, icd)
    trajectory = [loglik]
    converged = False
    iterations = 0
    n_reseeds = 0
    while iterations < cfg.max_iter:
        resp = e_step(X, theta, icd)
        noise_weight, weights = m_step_proportions(resp, cfg)
        try:
            moments = m_step_moments(X, resp, cfg.min_component_mass)
        except EmptyComponentError as exc:
            if n_reseeds >= MAX_RESEEDS:
                raise EmptyComponentError(
                    f"{exc} after {n_reseeds} re-seeds") from exc
            theta = _reseed(X, theta, icd, exc.components, cfg)
            n_reseeds += 1
            logger.debug("re-seeded components %s", exc.components)
            loglik = log_pseudo_likelihood(X, theta, icd)
            trajectory = [loglik]
            continue
        comps = m_step_covariances(moments, resp, cfg)
        theta = MixtureParams(noise_weight, weights, comps)
        iterations += 1
        new_loglik = log_pseudo_likelihood(X, theta, icd)
        trajectory.append(new_loglik)
        delta = abs(new_loglik - loglik)
        loglik = new_loglik
        if delta <= cfg.tol:
            converged = True
            break
    labels = assign(X, theta, icd)
    return FitResult(theta, loglik, iterations, converged, labels,
                     float(np.mean(labels == 0)), trajectory, n_reseeds)


def initialize(data, cfg, rng):
    """Random starting parameters inside the constrained parameter space.

    Means are ``G`` distinct sample points, every covariance is the diagonal
    of squared column MADs (clamped to the eigenratio bound) and the Gaussian
    weights share ``1 - pi_0`` equally. ``pi_0`` starts at 0.05 (0 when
    ``delta = 0``) and is halved while the noise cap is exceeded.
    """
    X = as_data_array(data)
    G = cfg.n_components
    uniq = np.unique(X, axis=0)
    if uniq.shape[0] < G:
        raise ValueError(f"need at least {G} distinct points, got {uniq.shape[0]}")
    rng = np.random.default_rng(rng)
    means = uniq[rng.choice(uniq.shape[0], size=G, replace=False)]
    comp_cov = _global_diag_cov(X)
    comps = [_feasible_component(mu, comp_cov, cfg.gamma) for mu in means]
    noise_weight = 0.0 if cfg.icd.is_zero else min(INIT_NOISE_WEIGHT, cfg.pi_max)

    def build(pi0):
        return MixtureParams(pi0, np.full(G, (1.0 - pi0) / G), comps)

    theta = build(noise_weight)
    for _ in range(60):
        if noise_weight == 0 or noise_mass(X, theta, cfg.icd) <= cfg.pi_max:
            break
        noise_weight /= 2.0
        theta = build(noise_weight)
    return theta


def _run_start(X, cfg, start):
    rng = np.random.default_rng([cfg.seed, start])
    try:
        theta0 = initialize(X, cfg, rng)
        return em_fit(X, cfg, theta0), None
    except Exception as exc:  # noqa: BLE001 - a failed start must not abort the others
        return None, exc


def multistart_fit(data, cfg, n_jobs=1):
    """Run ``cfg.n_starts`` independent EM fits and keep the one with the largest likelihood.

    Ties go to the lowest start index. The selected result does not depend on
    ``n_jobs``.

    Raises
    ------
    PreconditionError
        If :func:`check_a0` fails.
    AllStartsFailedError
        If every start raised.
    """
    X = as_data_array(data)
    if not check_a0(X, cfg):
        raise PreconditionError(
            "not enough distinct observations for the requested number of components "
            "and noise cap")
    starts = range(cfg.n_starts)
    if n_jobs is not None and n_jobs > 1 and cfg.n_starts > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, cfg.n_starts)) as pool:
            outcomes = list(pool.map(_run_start, [X] * cfg.n_starts, [cfg] * cfg.n_starts,
                                     starts))
    else:
        outcomes = [_run_start(X, cfg, s) for s in starts]

    summaries, failures = [], []
    best, best_start = None, None
    for s, (fit, exc) in zip(starts, outcomes):
        if exc is not None:
            failures.append((s, exc))
            summaries.append(StartSummary(s, error=f"{type(exc).__name__}: {exc}"))
            continue
        summaries.append(StartSummary(s, fit.loglik, fit.iterations, fit.converged,
                                      float(fit.theta.eigenvalues.min())))
        if best is None or fit.loglik > best.loglik:
            best, best_start = fit, s
    if best is None:
        raise AllStartsFailedError(failures)
    return MultistartResult(best, best_start, summaries)
