"""scikit-learn compatible estimator wrapping the multistart EM fit."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .constraints import ConstraintConfig, in_parameter_space
from .em import (
    DEFAULT_GAMMA,
    DEFAULT_MAX_ITER,
    DEFAULT_MIN_COMPONENT_MASS,
    DEFAULT_N_STARTS,
    DEFAULT_PI_MAX,
    DEFAULT_TOL,
    EmConfig,
    multistart_fit,
)
from .model import IcdValue, assign, log_psi, posterior

__all__ = ["RIMLE"]


class RIMLE(ClusterMixin, BaseEstimator):
    """Robust improper maximum likelihood clustering.

    Fits ``n_components`` Gaussian clusters plus a noise component of fixed
    improper density ``delta`` by constrained EM from several random starts.
    Label 0 denotes noise; clusters are labelled ``1..n_components``.

    Parameters
    ----------
    n_components : int, default=2
        Number of Gaussian clusters.
    log_delta : float, default=None
        Natural log of the improper constant density. Exactly one of
        ``log_delta`` and ``delta`` must be given.
    delta : float, default=None
        The improper constant density itself; ``0`` gives the plain
        (constrained) Gaussian mixture MLE.
    gamma : float, default=100
        Bound on the ratio of the largest to the smallest covariance
        eigenvalue over all components.
    pi_max : float, default=0.5
        Cap on the estimated noise proportion.
    tol : float, default=1e-8
        Convergence threshold on the change of the mean log pseudo-likelihood.
    max_iter : int, default=1000
    n_starts : int, default=30
    random_state : int, default=0
        Base seed of the starts.
    min_component_mass : float, default=1e-10
    n_jobs : int, default=1
        Number of processes used to run the starts.

    Attributes
    ----------
    theta_ : MixtureParams
    icd_ : IcdValue
    noise_weight_ : float
    weights_ : ndarray of shape (n_components,)
    means_ : ndarray of shape (n_components, n_features)
    covariances_ : ndarray of shape (n_components, n_features, n_features)
    labels_ : ndarray of shape (n_samples,)
    loglik_ : float
        Mean log pseudo-likelihood of the training data at the fit.
    n_iter_ : int
    converged_ : bool
    noise_proportion_ : float
    fit_result_ : FitResult
    start_summaries_ : list of StartSummary
    """

    def __init__(self, n_components=2, *, log_delta=None, delta=None, gamma=DEFAULT_GAMMA,
                 pi_max=DEFAULT_PI_MAX, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 n_starts=DEFAULT_N_STARTS, random_state=0,
                 min_component_mass=DEFAULT_MIN_COMPONENT_MASS, n_jobs=1):
        self.n_components = n_components
        self.log_delta = log_delta
        self.delta = delta
        self.gamma = gamma
        self.pi_max = pi_max
        self.tol = tol
        self.max_iter = max_iter
        self.n_starts = n_starts
        self.random_state = random_state
        self.min_component_mass = min_component_mass
        self.n_jobs = n_jobs

    def _icd(self):
        if (self.log_delta is None) == (self.delta is None):
            raise ValueError("exactly one of log_delta and delta must be set")
        if self.log_delta is not None:
            return IcdValue.from_log(self.log_delta)
        return IcdValue.from_delta(self.delta)

    def make_config(self):
        """The :class:`EmConfig` corresponding to the current hyper-parameters."""
        return EmConfig(
            icd=self._icd(),
            n_components=self.n_components,
            constraints=ConstraintConfig(self.gamma, self.pi_max),
            tol=self.tol,
            max_iter=self.max_iter,
            n_starts=self.n_starts,
            seed=self.random_state if self.random_state is not None else 0,
            min_component_mass=self.min_component_mass,
        )

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64, ensure_min_samples=2)
        cfg = self.make_config()
        result = multistart_fit(X, cfg, n_jobs=self.n_jobs)
        fit = result.best
        self.icd_ = cfg.icd
        self.theta_ = fit.theta
        self.noise_weight_ = fit.theta.noise_weight
        self.weights_ = np.array(fit.theta.weights)
        self.means_ = fit.theta.means
        self.covariances_ = fit.theta.covariances
        self.labels_ = fit.assignments
        self.loglik_ = fit.loglik
        self.n_iter_ = fit.iterations
        self.converged_ = fit.converged
        self.noise_proportion_ = fit.noise_proportion
        self.fit_result_ = fit
        self.start_summaries_ = result.starts
        return self

    def predict(self, X):
        """Label of the largest pseudo-posterior (0 = noise)."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return np.atleast_1d(assign(X, self.theta_, self.icd_))

    def predict_proba(self, X):
        """Pseudo-posterior probabilities, noise in column 0."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return np.atleast_2d(posterior(X, self.theta_, self.icd_))

    def score_samples(self, X):
        """Log pseudo-density of each sample."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return np.atleast_1d(log_psi(X, self.theta_, self.icd_))

    def score(self, X, y=None):
        """Mean log pseudo-likelihood of ``X``."""
        return float(np.mean(self.score_samples(X)))

    def constraint_report(self, X):
        """Membership of the fitted parameters in the constrained parameter space for ``X``."""
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return in_parameter_space(X, self.theta_, self.icd_,
                                  ConstraintConfig(self.gamma, self.pi_max))
