"""Parameters and pointwise computations of the improper Gaussian-plus-noise model.

The pseudo-density of a point ``x`` is

    psi(x) = pi_0 * delta + sum_j pi_j * phi(x; mu_j, Sigma_j)

where ``delta`` is a fixed improper constant density. Likelihoods and
posteriors are evaluated in log space; Gaussian log-densities use the cached
spectral decomposition of each covariance matrix.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import logsumexp

from ._validation import as_data_array, as_points
from .exceptions import DegenerateLikelihoodError

__all__ = [
    "DataMatrix",
    "ComponentParams",
    "MixtureParams",
    "IcdValue",
    "gaussian_log_density",
    "weighted_log_densities",
    "log_psi",
    "psi_delta",
    "log_pseudo_likelihood",
    "posterior",
    "assign",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x p`` observation matrix with optional per-column scale factors.

    ``column_scales`` records the divisors applied to each column (for
    instance by :func:`rimle.io.mad_standardize`); ``None`` means raw data.
    """

    values: np.ndarray
    column_scales: np.ndarray = None

    def __post_init__(self):
        values = as_data_array(self.values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.column_scales is not None:
            scales = np.asarray(self.column_scales, dtype=np.float64).reshape(-1)
            if scales.shape != (values.shape[1],):
                raise ValueError("column_scales must have one entry per column")
            object.__setattr__(self, "column_scales", scales)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class IcdValue:
    """Improper constant density, carried together with its logarithm.

    Build it with :meth:`from_log` for extreme values such as ``log delta = -200``
    so that no exp/log round trip is needed.
    """

    delta: float
    log_delta: float

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta!r}")
        if self.delta == 0 and self.log_delta != -math.inf and math.exp(self.log_delta) != 0:
            raise ValueError("delta = 0 requires log_delta = -inf")
        if self.delta > 0 and not math.isclose(math.exp(self.log_delta), self.delta,
                                               rel_tol=1e-12):
            raise ValueError(f"inconsistent delta={self.delta!r} and log_delta={self.log_delta!r}")

    @classmethod
    def from_log(cls, log_delta):
        log_delta = float(log_delta)
        if math.isnan(log_delta) or log_delta == math.inf:
            raise ValueError(f"log_delta must be < +inf, got {log_delta!r}")
        return cls(math.exp(log_delta), log_delta)

    @classmethod
    def from_delta(cls, delta):
        delta = float(delta)
        if not (0 <= delta < math.inf):
            raise ValueError(f"delta must be finite and >= 0, got {delta!r}")
        return cls(delta, math.log(delta) if delta > 0 else -math.inf)

    @property
    def is_zero(self):
        return self.log_delta == -math.inf


def _spectral(cov):
    evals, evecs = np.linalg.eigh(cov)
    return evals[::-1].copy(), evecs[:, ::-1].copy()


@dataclass(frozen=True, eq=False)
class ComponentParams:
    """Mean and covariance of one Gaussian component with its cached eigendecomposition.

    Eigenvalues are sorted in descending order and ``eigenvectors[:, k]`` is the
    unit eigenvector belonging to ``eigenvalues[k]``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        for name in ("mean", "covariance", "eigenvalues", "eigenvectors"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        p = self.mean.shape[0]
        if (self.mean.ndim != 1 or self.covariance.shape != (p, p)
                or self.eigenvalues.shape != (p,) or self.eigenvectors.shape != (p, p)):
            raise ValueError("inconsistent component dimensions")
        if not np.all(self.eigenvalues > 0):
            raise ValueError(f"covariance eigenvalues must be strictly positive, "
                             f"got {self.eigenvalues}")

    @classmethod
    def from_covariance(cls, mean, covariance):
        """Build a component from a symmetric positive definite covariance matrix."""
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(covariance, dtype=np.float64)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance must be {mean.size}x{mean.size}, got {cov.shape}")
        scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        evals, evecs = _spectral(cov)
        return cls(mean, cov, evals, evecs)

    @classmethod
    def from_spectral(cls, mean, eigenvalues, eigenvectors):
        """Build a component as ``V diag(eigenvalues) V^T``; eigenvalues are re-sorted."""
        evals = np.asarray(eigenvalues, dtype=np.float64).reshape(-1)
        evecs = np.asarray(eigenvectors, dtype=np.float64)
        order = np.argsort(-evals, kind="stable")
        evals, evecs = evals[order], evecs[:, order]
        cov = (evecs * evals) @ evecs.T
        cov = 0.5 * (cov + cov.T)
        return cls(np.asarray(mean, dtype=np.float64).reshape(-1), cov, evals, evecs)

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def log_det(self):
        return float(np.sum(np.log(self.eigenvalues)))


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Noise weight, Gaussian weights and Gaussian components."""

    noise_weight: float
    weights: np.ndarray
    components: tuple = field(default=())

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "noise_weight", float(self.noise_weight))
        if len(self.components) != weights.size or weights.size < 1:
            raise ValueError("need one weight per component and at least one component")
        if not 0.0 <= self.noise_weight <= 1.0 or np.any(weights < 0):
            raise ValueError("weights must be nonnegative and noise_weight in [0, 1]")
        total = self.noise_weight + math.fsum(weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {total!r})")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("all components must share the same dimension")

    @classmethod
    def from_arrays(cls, noise_weight, weights, means, covariances):
        comps = [ComponentParams.from_covariance(m, c) for m, c in zip(means, covariances)]
        return cls(noise_weight, weights, comps)

    @property
    def n_components(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def means(self):
        return np.array([c.mean for c in self.components])

    @property
    def covariances(self):
        return np.array([c.covariance for c in self.components])

    @property
    def eigenvalues(self):
        """All covariance eigenvalues as a ``G x p`` array."""
        return np.array([c.eigenvalues for c in self.components])

    def permute(self, order):
        """Return the same mixture with components (and weights) reordered."""
        order = list(order)
        if sorted(order) != list(range(self.n_components)):
            raise ValueError(f"{order} is not a permutation")
        return MixtureParams(self.noise_weight, self.weights[order],
                             [self.components[i] for i in order])


def _component_log_density(X, comp):
    proj = (X - comp.mean) @ comp.eigenvectors
    with np.errstate(over="ignore"):
        # overflow here means the density is exactly 0 at double precision
        maha = np.sum(proj * proj / comp.eigenvalues, axis=1)
    return -0.5 * (comp.dim * LOG_2PI + comp.log_det + maha)


def gaussian_log_density(x, comp):
    """Log of the Gaussian density via the spectral form of the covariance.

    Parameters
    ----------
    x : array-like, shape (p,) or (n, p)
        One point or a stack of points.
    comp : ComponentParams

    Returns
    -------
    float or ndarray of shape (n,)
    """
    X, single = as_points(x, comp.dim)
    out = _component_log_density(X, comp)
    return float(out[0]) if single else out


def _log_or_neg_inf(value):
    return math.log(value) if value > 0 else -math.inf


def weighted_log_densities(X, theta, icd):
    """Matrix of ``log(pi_0 delta)`` and ``log(pi_j phi_j(x_i))``, shape (n, G+1)."""
    X, _ = as_points(X, theta.dim)
    out = np.empty((X.shape[0], theta.n_components + 1))
    out[:, 0] = _log_or_neg_inf(theta.noise_weight) + icd.log_delta
    for j, comp in enumerate(theta.components, start=1):
        out[:, j] = _log_or_neg_inf(theta.weights[j - 1]) + _component_log_density(X, comp)
    return out


def log_psi(x, theta, icd):
    """Log pseudo-density at one point (float) or at each row of ``x`` (array)."""
    X, single = as_points(x, theta.dim)
    out = logsumexp(weighted_log_densities(X, theta, icd), axis=1)
    return float(out[0]) if single else out


def psi_delta(x, theta, icd):
    """Improper pseudo-density ``pi_0 delta + sum_j pi_j phi(x; mu_j, Sigma_j)``.

    Summed on the linear scale, so the result is never below ``pi_0 * delta``;
    use :func:`log_psi` where densities may underflow.
    """
    X, single = as_points(x, theta.dim)
    out = np.full(X.shape[0], theta.noise_weight * icd.delta)
    for w, comp in zip(theta.weights, theta.components):
        out += w * np.exp(_component_log_density(X, comp))
    return float(out[0]) if single else out


def log_pseudo_likelihood(data, theta, icd):
    """Average log pseudo-density over the rows of ``data``.

    Raises
    ------
    DegenerateLikelihoodError
        If the pseudo-density vanishes at some observation.
    """
    X = as_data_array(data)
    lp = log_psi(X, theta, icd)
    if np.any(lp == -np.inf):
        bad = int(np.flatnonzero(lp == -np.inf)[0])
        raise DegenerateLikelihoodError(f"pseudo-density is zero at observation {bad}")
    return float(np.mean(lp))


def _posterior_matrix(X, theta, icd):
    lw = weighted_log_densities(X, theta, icd)
    lp = logsumexp(lw, axis=1, keepdims=True)
    if np.any(lp == -np.inf):
        bad = int(np.flatnonzero(lp[:, 0] == -np.inf)[0])
        raise DegenerateLikelihoodError(f"pseudo-density is zero at observation {bad}")
    tau = np.exp(lw - lp)
    tau /= tau.sum(axis=1, keepdims=True)
    return tau


def posterior(x, theta, icd):
    """Pseudo-posterior probabilities; column 0 is the noise component.

    Returns an array of shape (G+1,) for a single point or (n, G+1) for a stack.
    """
    X, single = as_points(x, theta.dim)
    tau = _posterior_matrix(X, theta, icd)
    return tau[0] if single else tau


def assign(x, theta, icd):
    """Label of the largest pseudo-posterior; 0 is noise and exact ties go to the lowest index."""
    tau = posterior(x, theta, icd)
    # np.argmax returns the first maximal index.
    labels = np.argmax(np.atleast_2d(tau), axis=1)
    return int(labels[0]) if tau.ndim == 1 else labels
