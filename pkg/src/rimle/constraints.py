"""Eigenratio and noise-proportion constraints, and the constrained eigenvalue update.

The covariance update under the eigenratio bound ``gamma`` reduces to a
one-dimensional problem in a lower eigenvalue bound ``m``: every scatter
eigenvalue ``l`` is clamped to ``[m, gamma * m]`` and ``m`` minimizes

    F(m) = sum_j T_j sum_k [ log c_jk(m) + l_jk / c_jk(m) ],
    c_jk(m) = min(max(m, l_jk), gamma * m).
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import check_scalar
from .exceptions import DegenerateScatterError
from .model import posterior

__all__ = [
    "ConstraintConfig",
    "EigenvalueBundle",
    "ConstraintReport",
    "eigen_ratio",
    "noise_mass",
    "clamp_eigenvalue",
    "line_search_objective",
    "eigen_line_search",
    "in_parameter_space",
    "MEMBERSHIP_SLACK",
]

MEMBERSHIP_SLACK = 1e-10


@dataclass(frozen=True)
class ConstraintConfig:
    """Eigenratio bound ``gamma >= 1`` and noise-proportion cap ``0 < pi_max < 1``."""

    gamma: float = 100.0
    pi_max: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "gamma", check_scalar(self.gamma, "gamma", lower=1.0))
        object.__setattr__(self, "pi_max", check_scalar(
            self.pi_max, "pi_max", lower=0.0, upper=1.0,
            lower_inclusive=False, upper_inclusive=False))


@dataclass(frozen=True, eq=False)
class EigenvalueBundle:
    """Per-component weights ``T_j`` and scatter eigenvalues ``l_jk`` (shape G x p)."""

    weights: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        ev = np.array(self.eigenvalues, dtype=np.float64)
        if ev.ndim == 1:
            ev = ev.reshape(1, -1)
        if ev.ndim != 2 or ev.shape[0] != w.size:
            raise ValueError(f"eigenvalues must have shape ({w.size}, p), got {ev.shape}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(~np.isfinite(ev)) or np.any(ev < 0):
            raise ValueError("eigenvalues must be finite and nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "eigenvalues", ev)


def eigen_ratio(theta):
    """Largest over smallest covariance eigenvalue, taken across all components."""
    ev = theta.eigenvalues
    return float(ev.max() / ev.min())


def noise_mass(data, theta, icd):
    """Average noise pseudo-posterior over the rows of ``data``."""
    X = np.asarray(getattr(data, "values", data), dtype=np.float64)
    return float(np.mean(np.atleast_2d(posterior(X, theta, icd))[:, 0]))


def clamp_eigenvalue(m, gamma, l):
    """``min(max(m, l), gamma * m)``; works elementwise on arrays."""
    if np.any(np.asarray(m) <= 0):
        raise ValueError(f"lower eigenvalue bound m must be > 0, got {m!r}")
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma!r}")
    out = np.minimum(np.maximum(m, l), gamma * m)
    return float(out) if np.ndim(out) == 0 else out


def line_search_objective(m, bundle, gamma):
    """Objective ``F(m)`` of the constrained eigenvalue problem (scalar ``m``)."""
    c = clamp_eigenvalue(m, gamma, bundle.eigenvalues)
    per_comp = np.sum(np.log(c) + bundle.eigenvalues / c, axis=1)
    return float(np.dot(bundle.weights, per_comp))


def _segment_minimizer(lo, hi, l, w, gamma):
    """Minimizer of F on [lo, hi], an interval on which the clamping pattern is fixed."""
    mid = math.sqrt(lo * hi) if lo > 0 and math.isfinite(hi) else (
        hi / 2 if lo == 0 else lo * 2)
    below = l < mid
    above = l > gamma * mid
    a = np.sum(w[below]) + np.sum(w[above])
    b = np.sum(w[below] * l[below]) + np.sum(w[above] * l[above]) / gamma
    if a <= 0:
        # F is constant on this segment.
        return mid
    m = b / a
    return min(max(m, lo), hi)


def eigen_line_search(bundle, gamma):
    """Optimal lower bound ``m*`` and the clamped eigenvalues.

    ``F`` is continuously differentiable and, between consecutive breakpoints
    ``{l_jk, l_jk / gamma}``, has the form ``A log m + B / m + const`` whose
    minimizer is ``B / A``. The global minimum is found exactly by scanning
    those segments.

    If the input already satisfies ``max(l) / min(l) <= gamma`` the input
    eigenvalues are returned unchanged.

    Parameters
    ----------
    bundle : EigenvalueBundle
    gamma : float
        Eigenratio bound, ``>= 1``.

    Returns
    -------
    m_star : float
    clamped : ndarray of shape (G, p)

    Raises
    ------
    DegenerateScatterError
        If no eigenvalue with positive weight is strictly positive.
    """
    gamma = check_scalar(gamma, "gamma", lower=1.0)
    l_all = bundle.eigenvalues
    w_all = np.repeat(bundle.weights, l_all.shape[1])
    l = l_all.reshape(-1)
    active = w_all > 0
    if not np.any(active) or not np.any(l[active] > 0):
        raise DegenerateScatterError("all weighted scatter eigenvalues are zero")

    lmin, lmax = l_all.min(), l_all.max()
    if lmin > 0 and lmax <= gamma * lmin:
        # constraint inactive: any m in [lmax / gamma, lmin] leaves l unchanged
        return float(math.sqrt(lmax / gamma * lmin)), l_all.copy()

    la, wa = l[active], w_all[active]
    flat = _FlatBundle(wa, la[:, None])
    pos = la[la > 0]
    breaks = np.unique(np.concatenate([pos, pos / gamma]))
    edges = np.concatenate([[0.0], breaks, [math.inf]])
    best_m, best_f = None, math.inf
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = _segment_minimizer(lo, hi, la, wa, gamma)
        if not (m > 0 and math.isfinite(m)):
            continue
        f = line_search_objective(m, flat, gamma)
        if f < best_f:
            best_m, best_f = m, f
    return float(best_m), clamp_eigenvalue(best_m, gamma, l_all)


class _FlatBundle:
    """Positive-weight eigenvalues as a column (one per row), for repeated objective calls."""

    __slots__ = ("weights", "eigenvalues")

    def __init__(self, weights, eigenvalues):
        self.weights = weights
        self.eigenvalues = eigenvalues


@dataclass
class ConstraintReport:
    """Outcome of a parameter-space membership check.

    ``violations`` maps each violated clause name to its observed value.
    """

    ok: bool
    weight_sum: float
    noise_mass: float
    eigen_ratio: float
    violations: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok


def in_parameter_space(data, theta, icd, cfg, slack=MEMBERSHIP_SLACK):
    """Check that ``theta`` lies in the constrained parameter space.

    Clauses: weights sum to one, average noise posterior at most ``pi_max``
    and global eigenratio at most ``gamma``, each with ``slack`` tolerance.
    """
    weight_sum = theta.noise_weight + math.fsum(theta.weights)
    mass = noise_mass(data, theta, icd)
    ratio = eigen_ratio(theta)
    violations = {}
    if abs(weight_sum - 1.0) > slack or np.any(theta.weights < 0):
        violations["weights"] = weight_sum
    if mass > cfg.pi_max + slack:
        violations["noise_mass"] = mass
    if ratio > cfg.gamma * (1.0 + slack):
        violations["eigen_ratio"] = ratio
    return ConstraintReport(not violations, weight_sum, mass, ratio, violations)
