"""End-to-end acceptance criteria 1 to 10.

Each test prints a single ``criterion N: PASS|FAIL ...`` line. Fits produced
by criteria 1, 4, 6, 7 and 9 are collected and re-checked for constraint
membership by criterion 5, which therefore runs last.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from rimle.constraints import (
    ConstraintConfig,
    EigenvalueBundle,
    eigen_line_search,
    in_parameter_space,
    line_search_objective,
    noise_mass,
)
from rimle.em import EmConfig, em_fit, initialize, m_step_covariances, m_step_moments, Responsibilities
from rimle.evaluation import (
    DEFAULT_LOG_DELTA_GRID,
    SyntheticSpec,
    adjusted_rand,
    breakdown_conditions,
    breakdown_experiment,
    default_phi_max,
    delta_scan,
    generate_mixture,
)
from rimle.em import multistart_fit
from rimle.io import mad_standardize, write_matrix
from rimle.model import IcdValue, MixtureParams

from oracles import grid_minimum, q1, textbook_gmm_fit, textbook_gmm_step

pytestmark = pytest.mark.acceptance

# (description, data, theta, icd, constraints) of every fit made below
FITS = []


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed=None):
        timing = "" if elapsed is None else f" [{elapsed:.1f}s]"
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} - {detail}{timing}")
        assert ok, detail
    return emit


def record(description, X, theta, cfg):
    FITS.append((description, np.asarray(X), theta, cfg.icd, cfg.constraints))


def noisy_two_clusters(seed, n=500):
    box = [(-5.0, 11.0), (-5.0, 5.0)]
    spec = SyntheticSpec(n=n, p=2,
                         components=[(0.45, [0, 0], np.eye(2)), (0.45, [6, 0], np.eye(2))],
                         noise_fraction=0.1, noise_box=box, seed=seed)
    return spec


def test_c01_monotone_em(report):
    t0 = time.perf_counter()
    worst = math.inf
    n_iters = 0
    for seed in range(50):
        spec = noisy_two_clusters(seed)
        data, _ = generate_mixture(spec)
        cfg = EmConfig(IcdValue.from_log(math.log(0.1 / spec.box_volume)), 2, ConstraintConfig())
        for start in range(3):
            theta0 = initialize(data, cfg, np.random.default_rng([seed, start]))
            fit = em_fit(data, cfg, theta0)
            steps = np.diff(fit.trajectory)
            n_iters += steps.size
            if steps.size:
                worst = min(worst, float(steps.min()))
            record(f"c1 seed {seed} start {start}", data.values, fit.theta, cfg)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-9 and elapsed < 60
    report(1, ok, f"{n_iters} EM steps on 150 runs, smallest increase {worst:.3e}", elapsed)


def test_c02_line_search_oracle(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(2)
    worst_rel, worst_ratio = 0.0, 0.0
    for i in range(100):
        G, p = int(gen.integers(1, 4)), int(gen.integers(1, 5))
        gamma = float([1.0, 2.0, 10.0, 100.0][i % 4])
        bundle = EigenvalueBundle(gen.uniform(0.1, 10.0, G),
                                  np.exp(gen.uniform(math.log(1e-2), 0.0, (G, p))))
        m_star, clamped = eigen_line_search(bundle, gamma)
        f_star = line_search_objective(m_star, bundle, gamma)
        _, f_grid = grid_minimum(bundle, gamma)
        worst_rel = max(worst_rel, (f_star - f_grid) / abs(f_grid))
        worst_ratio = max(worst_ratio, float(clamped.max() / clamped.min()) / gamma)
    elapsed = time.perf_counter() - t0
    ok = worst_rel <= 1e-5 and worst_ratio <= 1 + 1e-12 and elapsed < 120
    report(2, ok, f"max relative excess over grid minimum {worst_rel:.2e}, "
                  f"max ratio/gamma {worst_ratio:.15f}", elapsed)


def test_c03_m_step_optimality(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(3)
    losses = 0
    for _ in range(20):
        G, p = int(gen.integers(1, 4)), int(gen.integers(1, 4))
        gamma = float(gen.choice([1.5, 3.0, 10.0]))
        X = gen.normal(size=(80, p)) * np.exp(gen.uniform(-1.5, 1.5, p))
        tau = gen.dirichlet(np.ones(G + 1), size=80)
        resp = Responsibilities.from_matrix(tau)
        cfg = EmConfig(IcdValue.from_log(-5.0), G, ConstraintConfig(gamma, 0.5))
        moments = m_step_moments(X, resp)
        comps = m_step_covariances(moments, resp, cfg)
        means = [m.mean for m in moments]
        best = q1(X, tau[:, 1:], means, [c.covariance for c in comps])
        lo = min(m.eigenvalues.min() for m in moments)
        hi = max(m.eigenvalues.max() for m in moments)
        for _ in range(1000):
            m = math.exp(gen.uniform(math.log(lo / gamma), math.log(hi)))
            covs = [(mom.eigenvectors * (m * np.exp(gen.uniform(0, math.log(gamma), p))))
                    @ mom.eigenvectors.T for mom in moments]
            if q1(X, tau[:, 1:], means, covs) > best + 1e-9 * abs(best):
                losses += 1
    elapsed = time.perf_counter() - t0
    report(3, losses == 0 and elapsed < 60,
           f"{losses} of 20000 feasible perturbations beat the M-step", elapsed)


def test_c04_zero_delta_reduction(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(4)
    X = np.vstack([gen.normal([0, 0], 1.0, (200, 2)),
                   gen.multivariate_normal([12, 4], [[2.0, 0.6], [0.6, 1.0]], 200)])
    cfg = EmConfig(IcdValue.from_delta(0.0), 2, ConstraintConfig(1e6, 0.5))
    w0 = np.array([0.3, 0.7])
    m0 = np.array([[1.0, -1.0], [10.0, 5.0]])
    c0 = np.array([np.eye(2) * 3.0, [[2.0, 0.4], [0.4, 4.0]]])
    theta0 = MixtureParams.from_arrays(0.0, w0, m0, c0)
    one = em_fit(X, cfg.replace(max_iter=1), theta0)
    w1, m1, c1 = textbook_gmm_step(X, w0, m0, c0)
    rel = max(np.max(np.abs(one.theta.weights - w1) / np.abs(w1)),
              np.max(np.abs(one.theta.means - m1) / np.abs(m1)),
              np.max(np.abs(one.theta.covariances - c1) / np.abs(c1)))
    full = em_fit(X, cfg, theta0)
    *_, ll_ref = textbook_gmm_fit(X, w0, m0, c0)
    record("c4 full fit", X, full.theta, cfg)
    elapsed = time.perf_counter() - t0
    gap = abs(full.loglik - ll_ref)
    ok = rel <= 1e-6 and gap <= 1e-6 and elapsed < 30
    report(4, ok, f"one-step max relative difference {rel:.2e}, final l_n gap {gap:.2e}",
           elapsed)


def test_c06_recovery(report):
    t0 = time.perf_counter()
    D = 16.0
    box = [(-6.0, D + 6.0), (-6.0, D + 6.0)]
    spec = SyntheticSpec(n=3000, p=2,
                         components=[(0.3, [0, 0], np.eye(2)), (0.3, [D, 0], np.eye(2)),
                                     (0.3, [0, D], np.eye(2))],
                         noise_fraction=0.1, noise_box=box, seed=6)
    raw, truth = generate_mixture(spec)
    data = mad_standardize(raw)
    scales = data.column_scales
    means = np.array([c[1] for c in spec.components]) / scales
    separation = min(np.linalg.norm(means[i] - means[j])
                     for i in range(3) for j in range(i + 1, 3))
    volume = spec.box_volume / float(np.prod(scales))
    cfg = EmConfig(IcdValue.from_log(math.log(0.1 / volume)), 3, ConstraintConfig(),
                   n_starts=20)
    fit = multistart_fit(data, cfg).best
    record("c6 best fit", data.values, fit.theta, cfg)
    keep = (truth != 0) & (fit.assignments != 0)
    ari = adjusted_rand(truth[keep], fit.assignments[keep])
    elapsed = time.perf_counter() - t0
    ok = separation >= 8 and ari >= 0.9 and elapsed < 180
    report(6, ok, f"ARI {ari:.4f} on {keep.sum()} points jointly non-noise, "
                  f"min separation {separation:.2f} MAD units", elapsed)


def test_c07_breakdown_contrast(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(7)
    X = np.vstack([gen.normal([0, 0], 1.0, (100, 2)), gen.normal([20, 0], 1.0, (100, 2))])
    cfg = EmConfig(IcdValue.from_log(-20.0), 2, ConstraintConfig(), n_starts=10)
    clean = multistart_fit(X, cfg)
    record("c7 clean rimle", X, clean.best.theta, cfg)
    reduced = multistart_fit(X, cfg.replace(n_components=1))
    floor = min(s.min_eigenvalue for s in clean.starts if s.error is None)
    conditions = breakdown_conditions(X, clean.best.theta, 10, cfg.icd, cfg,
                                      200 * reduced.best.loglik, default_phi_max(floor, 2))
    (robust,) = breakdown_experiment(X, cfg, 10, [1e6])
    mle_cfg = cfg.replace(icd=IcdValue.from_delta(0.0))
    (mle,) = breakdown_experiment(X, mle_cfg, 10, [1e6])
    Xc = np.vstack([X, np.tile(X.mean(axis=0) + [1e6, 0.0], (10, 1))])
    record("c7 contaminated rimle", Xc, robust.contaminated_theta, cfg)
    record("c7 contaminated mle", Xc, mle.contaminated_theta, mle_cfg)
    elapsed = time.perf_counter() - t0
    ok = (robust.broke_down is False and robust.outliers_as_noise == 10
          and conditions == (True, True) and mle.broke_down is True and elapsed < 60)
    report(7, ok, f"RIMLE broke_down={robust.broke_down} outliers as noise "
                  f"{robust.outliers_as_noise}/10 conditions={conditions}; "
                  f"MLE broke_down={mle.broke_down}", elapsed)


def test_c08_ari_calibration(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(8)
    labels = gen.integers(0, 5, 1000)
    perm = gen.permutation(5)
    exact = adjusted_rand(labels, labels) == 1.0 and \
        abs(adjusted_rand(labels, perm[labels]) - 1.0) < 1e-12
    worst = max(abs(adjusted_rand(gen.integers(0, 5, 10000), gen.integers(0, 5, 10000)))
                for _ in range(20))
    elapsed = time.perf_counter() - t0
    report(8, exact and worst < 0.02 and elapsed < 30,
           f"identical/permuted = 1: {exact}; max |ARI| over 20 random pairs {worst:.4f}",
           elapsed)


def test_c09_soft_delta_monotonicity(report):
    t0 = time.perf_counter()
    spec = SyntheticSpec(n=400, p=2,
                         components=[(0.45, [0, 0], np.eye(2) * 0.04),
                                     (0.45, [3, 0], np.eye(2) * 0.04)],
                         noise_fraction=0.1, noise_box=[(-5, 8), (-6, 6)], seed=9)
    data, _ = generate_mixture(spec)
    cfg = EmConfig(IcdValue.from_log(-5.0), 2, ConstraintConfig(), n_starts=10)
    rows = delta_scan(data, cfg, DEFAULT_LOG_DELTA_GRID)
    failed = [r.log_delta for r in rows if r.error]
    for r in rows:
        if r.fit is not None:
            record(f"c9 log delta {r.log_delta}", data.values, r.fit.theta,
                   cfg.replace(icd=IcdValue.from_log(r.log_delta)))
    props = np.array([r.noise_proportion for r in rows])
    drops = np.diff(props) < 0
    worst_window = max(int(drops[i:i + 9].sum()) for i in range(len(drops) - 8))
    elapsed = time.perf_counter() - t0
    ok = not failed and worst_window <= 1
    report(9, ok, f"noise proportion {props[0]:.4f} -> {props[-1]:.4f}; "
                  f"{int(drops.sum())} decreases, at most {worst_window} per 10 grid points",
           elapsed)


def test_c10_cli_reproducibility(report, tmp_path):
    t0 = time.perf_counter()
    data, _ = generate_mixture(noisy_two_clusters(10, n=300))
    write_matrix(data, tmp_path / "data.csv")
    base = [sys.executable, "-m", "rimle"]
    commands = {
        "fit": ["fit", "--input", str(tmp_path / "data.csv"), "--g", "2", "--log-delta", "-6",
                "--starts", "5", "--seed", "42"],
        "scan": ["scan", "--input", str(tmp_path / "data.csv"), "--g", "2", "--starts", "3",
                 "--seed", "42"],
    }
    outputs = {}
    for name, args in commands.items():
        for run in range(2):
            out = tmp_path / f"{name}{run}.out"
            subprocess.run(base + args + ["--output", str(out)], check=True)
            outputs[name, run] = out.read_bytes()
    same = {name: outputs[name, 0] == outputs[name, 1] for name in commands}
    elapsed = time.perf_counter() - t0
    report(10, all(same.values()), f"bitwise identical across two runs: {same}", elapsed)


def test_c05_constraint_satisfaction(report):
    # after all other criteria (file order), so FITS is populated
    if not FITS:
        pytest.skip("run together with the other acceptance criteria")
    bad = []
    for description, X, theta, icd, constraints in FITS:
        rep = in_parameter_space(X, theta, icd, constraints, slack=1e-10)
        mass = noise_mass(X, theta, icd)
        if not rep.ok or mass > constraints.pi_max + 1e-10:
            bad.append(f"{description}: {sorted(rep.violations)}")
    detail = f"{len(FITS) - len(bad)}/{len(FITS)} fits inside the constrained parameter space"
    if bad:
        detail += "; failing: " + "; ".join(bad[:5])
    report(5, not bad, detail)
