"""Diagnostics and experiments: ARI, synthetic data, log-delta scans and breakdown probes."""

from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np
from scipy.special import comb

from ._validation import as_data_array, check_labels
from .em import multistart_fit
from .io import _open
from .model import DataMatrix, IcdValue, gaussian_log_density, psi_delta

__all__ = [
    "DEFAULT_LOG_DELTA_GRID",
    "SCAN_COLUMNS",
    "BREAKDOWN_COLUMNS",
    "adjusted_rand",
    "SyntheticSpec",
    "generate_mixture",
    "ScanRow",
    "delta_scan",
    "write_scan_csv",
    "ConditionValues",
    "breakdown_condition_values",
    "breakdown_conditions",
    "default_phi_max",
    "match_components",
    "BreakdownThresholds",
    "BreakdownReport",
    "breakdown_experiment",
    "write_breakdown_csv",
]

DEFAULT_LOG_DELTA_GRID = (-200.0, -100.0, -50.0) + tuple(float(v) for v in range(-20, -2))

SCAN_COLUMNS = ("log_delta", "loglik", "noise_proportion", "ari", "iterations",
                "converged", "best_start", "error")
BREAKDOWN_COLUMNS = ("r", "magnitude", "matched_mean_shift", "min_weight", "min_eigenvalue",
                     "max_eigenvalue", "outliers_as_noise", "separation_holds",
                     "noise_capacity_holds",
                     "broke_down", "error")


def adjusted_rand(a, b):
    """Hubert-Arabie adjusted Rand index between two labelings of the same points."""
    a = check_labels(a, "a")
    b = check_labels(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.size} != {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("need at least two labelled points")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    sum_cells = comb(table, 2).sum()
    sum_rows = comb(table.sum(axis=1), 2).sum()
    sum_cols = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # both partitions trivial (all one cluster or all singletons)
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian clusters plus uniform noise in a box.

    ``components`` is a sequence of ``(weight, mean, covariance)``; the
    component weights and ``noise_fraction`` must sum to one.
    """

    n: int
    p: int
    components: tuple
    noise_fraction: float = 0.0
    noise_box: tuple = ()
    seed: int = 0

    def __post_init__(self):
        comps = []
        for weight, mean, cov in self.components:
            mean = np.asarray(mean, dtype=np.float64).reshape(-1)
            cov = np.asarray(cov, dtype=np.float64)
            if mean.shape != (self.p,) or cov.shape != (self.p, self.p):
                raise ValueError("component mean/covariance dimension mismatch")
            comps.append((float(weight), mean, cov))
        object.__setattr__(self, "components", tuple(comps))
        total = self.noise_fraction + math.fsum(w for w, _, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights and noise_fraction must sum to 1, got {total!r}")
        if not 0.0 <= self.noise_fraction < 1.0 and not (self.noise_fraction == 1.0 and not comps):
            raise ValueError("noise_fraction must be in [0, 1)")
        box = tuple((float(lo), float(hi)) for lo, hi in self.noise_box)
        object.__setattr__(self, "noise_box", box)
        if self.noise_fraction > 0 and len(box) != self.p:
            raise ValueError("noise_box needs one (low, high) pair per dimension")
        if any(lo > hi for lo, hi in box):
            raise ValueError("noise_box bounds must be ordered")

    @property
    def box_volume(self):
        return math.prod(hi - lo for lo, hi in self.noise_box)

    @classmethod
    def from_dict(cls, doc):
        comps = [(c["weight"], c["mean"], c["covariance"]) for c in doc.get("components", [])]
        return cls(n=int(doc["n"]), p=int(doc["p"]), components=comps,
                   noise_fraction=float(doc.get("noise_fraction", 0.0)),
                   noise_box=[tuple(b) for b in doc.get("noise_box", [])],
                   seed=int(doc.get("seed", 0)))

    @classmethod
    def load(cls, source):
        with _open(source, "r") as fh:
            return cls.from_dict(json.load(fh))


def generate_mixture(spec, rng=None):
    """Draw a sample from ``spec``.

    Returns
    -------
    data : DataMatrix
    labels : ndarray of int
        0 for noise points, ``j`` for points drawn from the j-th component.
    """
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    probs = np.array([spec.noise_fraction] + [w for w, _, _ in spec.components])
    labels = rng.choice(probs.size, size=spec.n, p=probs / probs.sum())
    X = np.empty((spec.n, spec.p))
    for j, (_, mean, cov) in enumerate(spec.components, start=1):
        idx = np.flatnonzero(labels == j)
        X[idx] = rng.multivariate_normal(mean, cov, size=idx.size, method="eigh")
    idx = np.flatnonzero(labels == 0)
    if idx.size:
        lo = np.array([b[0] for b in spec.noise_box])
        hi = np.array([b[1] for b in spec.noise_box])
        X[idx] = rng.uniform(lo, hi, size=(idx.size, spec.p))
    return DataMatrix(X), labels


@dataclass
class ScanRow:
    log_delta: float
    loglik: float = math.nan
    noise_proportion: float = math.nan
    ari: float = None
    iterations: int = None
    converged: bool = None
    best_start: int = None
    error: str = None
    fit: object = field(default=None, repr=False, compare=False)


def delta_scan(data, cfg, log_delta_grid=DEFAULT_LOG_DELTA_GRID, reference_labels=None,
               n_jobs=1):
    """Multistart fits over a grid of log-delta values, all with the same seeds.

    A failed grid point is recorded in its row's ``error`` field and the scan
    continues.

    Returns
    -------
    list of ScanRow
        In grid order; ``ari`` compares the fitted labels (noise included as
        label 0) with ``reference_labels`` when given.
    """
    grid = [float(v) for v in log_delta_grid]
    if not grid:
        raise ValueError("log_delta_grid is empty")
    X = as_data_array(data)
    if reference_labels is not None:
        reference_labels = check_labels(reference_labels, "reference_labels")
        if reference_labels.size != X.shape[0]:
            raise ValueError("reference_labels must have one entry per observation")
    rows = []
    for ld in grid:
        row = ScanRow(ld)
        try:
            res = multistart_fit(X, cfg.replace(icd=IcdValue.from_log(ld)), n_jobs=n_jobs)
        except Exception as exc:  # noqa: BLE001 - recorded per grid point
            row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        fit = res.best
        row.loglik = fit.loglik
        row.noise_proportion = fit.noise_proportion
        row.iterations = fit.iterations
        row.converged = fit.converged
        row.best_start = res.best_start
        row.fit = fit
        if reference_labels is not None:
            row.ari = adjusted_rand(reference_labels, fit.assignments)
        rows.append(row)
    return rows


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(rows, columns, destination):
    with _open(destination, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(getattr(row, c)) for c in columns])


def write_scan_csv(rows, destination):
    """Write scan rows with the column order of ``SCAN_COLUMNS``."""
    _write_rows(rows, SCAN_COLUMNS, destination)


@dataclass(frozen=True)
class ConditionValues:
    """Both sides of the two sufficient conditions for robustness against ``r`` added points.

    ``reduced_loglik`` is the optimal (G-1)-component log-likelihood sum and
    ``separation_bound`` the value it must stay below. ``worst_noise_mass`` is
    the worst-case noise proportion after adding ``r`` points, to be compared
    with ``pi_max``.
    """

    reduced_loglik: float
    separation_bound: float
    worst_noise_mass: float
    pi_max: float

    @property
    def separation_holds(self):
        return bool(self.reduced_loglik < self.separation_bound)

    @property
    def noise_capacity_holds(self):
        return bool(self.worst_noise_mass < self.pi_max)


def breakdown_condition_values(data, theta_star, r, icd, cfg, loglik_g_minus_1, phi_max):
    """Evaluate both robustness conditions; see :class:`ConditionValues`.

    ``loglik_g_minus_1`` is a log-likelihood *sum* over the ``n`` points
    (``n`` times the mean reported by the fitters).
    """
    if r < 0 or int(r) != r:
        raise ValueError(f"r must be a nonnegative integer, got {r!r}")
    if not phi_max > 0:
        raise ValueError("phi_max must be positive")
    X = as_data_array(data)
    n = X.shape[0]
    pi0 = theta_star.noise_weight
    inflated = (pi0 + r / n) * icd.delta
    mix = np.zeros(n)
    for w, comp in zip(theta_star.weights, theta_star.components):
        mix += w * np.exp(gaussian_log_density(X, comp))
    log_inflated = math.log(inflated) if inflated > 0 else -math.inf
    with np.errstate(divide="ignore"):
        rhs = (float(np.sum(np.log(mix + inflated)))
               + (r * log_inflated if r > 0 else 0.0)
               + (n + r) * math.log(n / (n + r))
               - r * math.log(phi_max))
        psi = psi_delta(X, theta_star, icd)
        worst_noise = (np.sum((n * pi0 + r) * icd.delta / ((n + r) * psi)) + r) / (n + r)
    return ConditionValues(float(loglik_g_minus_1), float(rhs), float(worst_noise), cfg.pi_max)


def breakdown_conditions(data, theta_star, r, icd, cfg, loglik_g_minus_1, phi_max):
    """Whether the two sufficient conditions for robustness against ``r`` added points hold.

    Returns
    -------
    (bool, bool)
        The log-likelihood separation condition and the noise-capacity
        condition. Both true guarantee a breakdown point above ``r / (n + r)``.
    """
    vals = breakdown_condition_values(data, theta_star, r, icd, cfg, loglik_g_minus_1,
                                      phi_max)
    return vals.separation_holds, vals.noise_capacity_holds


def default_phi_max(lambda_floor, p):
    """Density bound ``(2 pi lambda_floor) ** (-p / 2)``.

    A heuristic stand-in for the unknown lower bound on fitted eigenvalues;
    ``lambda_floor`` is usually the smallest eigenvalue seen across clean fits.
    """
    if not lambda_floor > 0:
        raise ValueError("lambda_floor must be positive")
    return (2.0 * math.pi * lambda_floor) ** (-p / 2.0)


def match_components(means_a, means_b):
    """Greedy nearest-mean matching; returns ``perm`` with ``a[i]`` matched to ``b[perm[i]]``."""
    a = np.asarray(means_a, dtype=np.float64)
    b = np.asarray(means_b, dtype=np.float64)
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    perm = np.full(a.shape[0], -1)
    free_a = set(range(a.shape[0]))
    free_b = set(range(b.shape[0]))
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), b.shape[0])
        if i in free_a and j in free_b:
            perm[i] = j
            free_a.discard(i)
            free_b.discard(j)
    return perm


@dataclass(frozen=True)
class BreakdownThresholds:
    """A compact parameter region; leaving it counts as breakdown."""

    shift_threshold: float
    weight_threshold: float = 1e-4
    eigenvalue_low: float = 0.0
    eigenvalue_high: float = math.inf

    @classmethod
    def from_clean_fit(cls, theta, weight_threshold=1e-4, window=1e6):
        """Shift bound of ten times the largest clean standard deviation and a
        ``[1/window, window]`` band around the clean eigenvalue range."""
        ev = theta.eigenvalues
        return cls(shift_threshold=10.0 * math.sqrt(ev.max()),
                   weight_threshold=weight_threshold,
                   eigenvalue_low=ev.min() / window,
                   eigenvalue_high=ev.max() * window)


@dataclass
class BreakdownReport:
    r: int
    magnitude: float
    clean_theta: object = field(repr=False)
    contaminated_theta: object = field(default=None, repr=False)
    matched_mean_shift: float = math.nan
    min_weight: float = math.nan
    min_eigenvalue: float = math.nan
    max_eigenvalue: float = math.nan
    outliers_as_noise: int = None
    separation_holds: bool = None
    noise_capacity_holds: bool = None
    broke_down: bool = None
    error: str = None
    outlier_labels: np.ndarray = field(default=None, repr=False)


def breakdown_experiment(data, cfg, r, magnitudes, thresholds=None, phi_max=None,
                         n_jobs=1):
    """Add ``r`` identical outliers at ``centroid + t * e_1`` for each ``t`` and refit.

    The clean and every contaminated fit use the same configuration and seeds.
    Components are matched by nearest means; a contaminated fit breaks down
    when a matched mean moves by more than ``thresholds.shift_threshold``, a
    weight falls below ``thresholds.weight_threshold`` or an eigenvalue leaves
    ``[eigenvalue_low, eigenvalue_high]``.

    The robustness conditions are evaluated on the clean fit with the
    (G-1)-component multistart fit as reference (pure noise when ``G = 1``)
    and ``phi_max`` defaulting to :func:`default_phi_max` of the smallest
    eigenvalue over all clean starts.

    Returns
    -------
    list of BreakdownReport
        One per magnitude, in input order.
    """
    X = as_data_array(data)
    n, p = X.shape
    if r < 0 or int(r) != r:
        raise ValueError(f"r must be a nonnegative integer, got {r!r}")
    magnitudes = [float(t) for t in magnitudes]
    if not magnitudes:
        return []
    clean_res = multistart_fit(X, cfg, n_jobs=n_jobs)
    clean = clean_res.best.theta
    if thresholds is None:
        thresholds = BreakdownThresholds.from_clean_fit(clean)
    if phi_max is None:
        floor = min(s.min_eigenvalue for s in clean_res.starts if s.error is None)
        phi_max = default_phi_max(floor, p)
    if cfg.n_components > 1:
        reduced = multistart_fit(X, cfg.replace(n_components=cfg.n_components - 1),
                                 n_jobs=n_jobs)
        loglik_reduced = n * reduced.best.loglik
    else:
        loglik_reduced = n * cfg.icd.log_delta
    separation, capacity = breakdown_conditions(X, clean, r, cfg.icd, cfg, loglik_reduced, phi_max)

    centroid = X.mean(axis=0)
    reports = []
    for t in magnitudes:
        report = BreakdownReport(int(r), t, clean, separation_holds=separation,
                                 noise_capacity_holds=capacity)
        outlier = centroid.copy()
        outlier[0] += t
        Xc = np.vstack([X, np.tile(outlier, (int(r), 1))])
        try:
            fit = multistart_fit(Xc, cfg, n_jobs=n_jobs).best
        except Exception as exc:  # noqa: BLE001 - recorded per magnitude
            report.error = f"{type(exc).__name__}: {exc}"
            reports.append(report)
            continue
        theta = fit.theta
        perm = match_components(clean.means, theta.means)
        shift = float(np.max(np.linalg.norm(clean.means - theta.means[perm], axis=1)))
        ev = theta.eigenvalues
        report.contaminated_theta = theta
        report.matched_mean_shift = shift
        report.min_weight = float(theta.weights.min())
        report.min_eigenvalue = float(ev.min())
        report.max_eigenvalue = float(ev.max())
        report.outlier_labels = fit.assignments[n:]
        report.outliers_as_noise = int(np.sum(report.outlier_labels == 0))
        report.broke_down = bool(
            shift > thresholds.shift_threshold
            or report.min_weight < thresholds.weight_threshold
            or report.min_eigenvalue < thresholds.eigenvalue_low
            or report.max_eigenvalue > thresholds.eigenvalue_high)
        reports.append(report)
    return reports


def write_breakdown_csv(reports, destination):
    """Write breakdown reports with the column order of ``BREAKDOWN_COLUMNS``."""
    _write_rows(reports, BREAKDOWN_COLUMNS, destination)
