"""End-to-end acceptance checks.

Each test prints a single ``CRITERION k PASS|FAIL`` line with the measured
quantities, then asserts. Run with ``pytest -v tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import Quadratic, as_lists, random_dataset
from ranktransfer.data import (
    ar1_covariance,
    erc,
    generate_scenario,
    perturb_coefficients,
    simulate_cohort,
    target_coefficients,
)
from ranktransfer.experiments import (
    SCENARIOS,
    ExperimentConfig,
    coverage_study,
    run_scenario,
    run_splitting_eval,
)
from ranktransfer.fabs import fabs_solve, subgradient_violation
from ranktransfer.inference import clime_inverse, variance_sandwich
from ranktransfer.kernels import (
    SPRLoss,
    c_index,
    default_sigma,
    pr_objective,
    spr_gradient,
    spr_hessian,
    spr_objective,
)
from ranktransfer.metrics import rmse
from ranktransfer.transfer import Method, estimate_many
from ranktransfer._validation import unit_normalize


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


# -- 1: kernels against loop oracles and finite differences -----------------

def test_criterion_1_kernel_correctness(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = {k: 0.0 for k in ("pr", "spr", "c_index", "gradient", "hessian", "sandwich")}
    fd_grad = fd_hess = 0.0
    for _ in range(50):
        n, p = int(rng.integers(4, 26)), int(rng.integers(1, 7))
        d = random_dataset(rng, n, p)
        b = rng.standard_normal(p)
        sig = default_sigma(n)
        lists = as_lists(d)
        worst["pr"] = max(worst["pr"], _rel(pr_objective(b, d), oracles.pr_objective(b, *lists)))
        worst["spr"] = max(worst["spr"],
                           _rel(spr_objective(b, d), oracles.spr_objective(b, *lists, sig)))
        worst["c_index"] = max(worst["c_index"],
                               _rel(c_index(b, d), oracles.c_index(b, *lists)))
        g = spr_gradient(b, d)
        worst["gradient"] = max(worst["gradient"], _rel(g, oracles.spr_gradient(b, *lists, sig)))
        H = spr_hessian(b, d)
        worst["hessian"] = max(worst["hessian"], _rel(H, oracles.spr_hessian(b, *lists, sig)))
        worst["sandwich"] = max(worst["sandwich"], _rel(
            variance_sandwich(d, b), oracles.variance_sandwich(b, *lists, sig)))

        h = 1e-5 * sig
        eye = np.eye(p)
        g_fd = np.array([(spr_objective(b + h * e, d) - spr_objective(b - h * e, d)) / (2 * h)
                         for e in eye])
        # spr_hessian is the negated second derivative
        H_fd = -np.array([(spr_gradient(b + h * e, d) - spr_gradient(b - h * e, d)) / (2 * h)
                          for e in eye])
        if np.any(g):
            fd_grad = max(fd_grad, _rel(g_fd, g))
        if np.any(H):
            fd_hess = max(fd_hess, _rel(H_fd, H))
    elapsed = time.perf_counter() - start
    ok = (max(worst.values()) <= 1e-10 and fd_grad <= 1e-5 and fd_hess <= 1e-4
          and elapsed < 10)
    detail = ", ".join(f"{k} rel {v:.1e}" for k, v in worst.items())
    report(1, ok, f"{detail}; finite-difference gradient {fd_grad:.1e}, "
                  f"Hessian {fd_hess:.1e}; {elapsed:.1f} s")
    assert ok


# -- 2: sigma -> 0 limit -----------------------------------------------------

def test_criterion_2_smoothing_limit(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    done = 0
    while done < 20:
        d = random_dataset(rng, int(rng.integers(5, 26)), int(rng.integers(1, 7)))
        b = rng.standard_normal(d.p)
        s = d.X @ b
        if len(np.unique(s)) < d.n or len(np.unique(d.time)) < d.n:
            continue
        worst = max(worst, abs(spr_objective(b, d, sigma=1e-6) - pr_objective(b, d)))
        done += 1
    ok = worst <= 1e-6
    report(2, ok, f"max |SPR - PR| at sigma 1e-6 over 20 instances = {worst:.2e}")
    assert ok


# -- 3: Fabs certificate and closed-form lasso -------------------------------

def test_criterion_3_optimizer_certificate(report):
    eps = 0.01
    start = time.perf_counter()
    beta0 = target_coefficients(10, block=1)
    d = simulate_cohort(beta0, 60, ar1_covariance(10), 3.0, seed=2)
    loss = SPRLoss([d])
    path = fabs_solve(loss, 10, step_eps=eps)
    lip = max(np.max(np.abs(spr_hessian(pt.beta, d))) for pt in path.points)
    cert = max(subgradient_violation(loss.value_and_grad(pt.beta)[1], pt.beta, pt.lam)
               for pt in path.points[1:])

    rng = np.random.default_rng(5)
    diag = rng.uniform(0.5, 2.0, 5)
    c = 2 * rng.standard_normal(5)
    qpath = fabs_solve(Quadratic(np.diag(diag), c), 5, step_eps=eps, lambda_min_ratio=0.01)
    closed = max(
        np.max(np.abs(pt.beta - np.sign(c) * np.maximum(np.abs(c) - pt.lam, 0) / diag))
        for pt in qpath.points[1:]
    )
    elapsed = time.perf_counter() - start
    ok = cert <= 2 * eps * lip and closed <= 2 * eps and elapsed < 30
    report(3, ok, f"{len(path)} path points, worst violation {cert:.4f} "
                  f"(tolerance 2 eps L = {2 * eps * lip:.4f}); quadratic vs closed form "
                  f"{closed:.4f} (tolerance {2 * eps}); {elapsed:.1f} s")
    assert ok


# -- 4 and 5: S1 Monte Carlo -------------------------------------------------

@pytest.fixture(scope="module")
def s1_study():
    spec = SCENARIOS["S1"]
    methods = list(Method)
    c_idx = {m: [] for m in methods}
    err = {m: [] for m in methods}
    exact = []
    start = time.perf_counter()
    for seed in range(100):
        sd = generate_scenario(spec, seed)
        fits = estimate_many(methods, sd.target, sd.sources, oracle_set=sd.informative_set,
                             detection_seed=seed)
        for m in methods:
            beta = fits[m].beta_hat
            c_idx[m].append(c_index(beta, sd.test) if np.any(beta) else 0.0)
            err[m].append(rmse(unit_normalize(beta), sd.beta0) if np.any(beta)
                          else rmse(beta, sd.beta0))
        exact.append(fits[Method.AUTO_TRANS].source_set == sd.informative_set)
    return ({m: float(np.mean(v)) for m, v in c_idx.items()},
            {m: float(np.mean(v)) for m, v in err.items()},
            float(np.mean(exact)), time.perf_counter() - start)


def test_criterion_4_transfer_gain(report, s1_study):
    c, e, _, elapsed = s1_study
    M = Method
    pairs = [(M.ORACLE_TRANS, M.AUTO_TRANS, c[M.ORACLE_TRANS] >= c[M.AUTO_TRANS]),
             (M.AUTO_TRANS, M.TARGET_ONLY, c[M.AUTO_TRANS] > c[M.TARGET_ONLY]),
             (M.TARGET_ONLY, M.NAIVE_POOLED, c[M.TARGET_ONLY] > c[M.NAIVE_POOLED]),
             (M.ORACLE_TRANS, M.TARGET_ONLY, c[M.ORACLE_TRANS] > c[M.TARGET_ONLY])]
    failed = [f"{a.value}>{b.value}" for a, b, held in pairs if not held]
    rmse_ok = (e[M.ORACLE_TRANS] < e[M.ORACLE_POOLED]) and (e[M.AUTO_TRANS] < e[M.TARGET_ONLY])
    ok = len(failed) <= 1 and rmse_ok
    cs = ", ".join(f"{m.value} {v:.4f}" for m, v in c.items())
    es = ", ".join(f"{m.value} {v:.4f}" for m, v in e.items())
    report(4, ok, f"mean C-index {cs}; failed orderings {failed or 'none'}; "
                  f"mean normalized RMSE {es}; {elapsed:.0f} s for 100 reps")
    assert ok


def test_criterion_5_detection_consistency(report, s1_study):
    _, _, exact_rate, _ = s1_study
    spec = SCENARIOS["S7-3"]
    recalls = []
    for seed in range(50):
        sd = generate_scenario(spec, seed)
        fit = estimate_many([Method.AUTO_TRANS], sd.target, sd.sources,
                            detection_seed=seed)[Method.AUTO_TRANS]
        hits = len(set(fit.source_set) & set(sd.informative_set))
        recalls.append(hits / len(sd.informative_set))
    recall = float(np.mean(recalls))
    ok = exact_rate >= 0.9 and recall >= 0.9
    report(5, ok, f"S1 exact detection rate {exact_rate:.2f} (need >= 0.90); "
                  f"S7-3 mean recall {recall:.3f} over 50 reps (need >= 0.9)")
    assert ok


# -- 6: CLIME ----------------------------------------------------------------

def test_criterion_6_clime(report):
    p = 10
    beta0 = target_coefficients(p, block=1)
    cov = ar1_covariance(p)
    worst_ratio = worst_gap = 0.0
    for seed in range(20):
        d = simulate_cohort(beta0, 200, cov, 3.0, seed=seed)
        H = spr_hessian(beta0, d)
        Hinv = np.linalg.inv(H)
        gamma = 1e-4 * np.max(np.abs(H))
        est = clime_inverse(H, gamma)
        worst_gap = max(worst_gap, est.feasibility_gap / gamma)
        bound = 10 * gamma * np.linalg.norm(Hinv, np.inf)
        worst_ratio = max(worst_ratio, np.max(np.abs(est.theta - Hinv)) / bound)
    ok = worst_gap <= 1 + 1e-6 and worst_ratio <= 1
    report(6, ok, f"20 SPR Hessians (p=10): max feasibility gap / gamma {worst_gap:.4f}, "
                  f"max ||Theta - H^-1||_max / (10 gamma ||H^-1||_inf) {worst_ratio:.2e}")
    assert ok


# -- 7: coverage and normality ----------------------------------------------

def test_criterion_7_coverage_and_normality(report):
    start = time.perf_counter()
    cov = coverage_study(p=20, n0=300, replications=200)
    z = coverage_study(p=10, n0=500, replications=500, base_seed=10_000)["z"].ravel()
    z = z[np.isfinite(z)]
    ks = stats.kstest(z, "norm").statistic
    sig, noise = cov["coverage_signal"], cov["coverage_noise"]
    ok = 0.90 <= sig <= 0.98 and 0.90 <= noise <= 0.98 and ks <= 0.1
    report(7, ok, f"coverage signal {sig:.3f}, noise {noise:.3f} (p=20, n0=300, 200 reps); "
                  f"KS {ks:.4f} over {z.size} pooled z (p=10, n0=500, 500 reps); "
                  f"{time.perf_counter() - start:.0f} s")
    assert ok


# -- 8: ERC calibration -------------------------------------------------------

def test_criterion_8_erc_calibration(report):
    spec = SCENARIOS["S1"]
    beta0 = target_coefficients(spec.p, spec.support_block, spec.levels)
    helpful, unhelpful = [], []
    for seed in range(200):
        # same coefficient streams as the scenario generator
        _, _, _, *source_ss = np.random.SeedSequence(seed).spawn(3 + spec.K)
        for k, ss in enumerate(source_ss):
            pp = spec.helpful if k < spec.n_informative else spec.unhelpful
            bk = perturb_coefficients(beta0, pp.d1, pp.d2, pp.r, pp.u, ss.spawn(4)[0])
            (helpful if k < spec.n_informative else unhelpful).append(erc(beta0, bk))
    h, u = float(np.mean(helpful)), float(np.mean(unhelpful))
    ok = abs(h - 0.834) <= 0.05 and abs(u - 0.418) <= 0.05
    report(8, ok, f"mean ERC helpful {h:.3f} (target 0.834), unhelpful {u:.3f} "
                  f"(target 0.418) over 200 seeds")
    assert ok


def test_erc_stream_matches_generator():
    sd = generate_scenario(SCENARIOS["S1"], 3)
    spec = SCENARIOS["S1"]
    _, _, _, *source_ss = np.random.SeedSequence(3).spawn(3 + spec.K)
    pp = spec.helpful
    bk = perturb_coefficients(sd.beta0, pp.d1, pp.d2, pp.r, pp.u, source_ss[0].spawn(4)[0])
    assert np.array_equal(bk, sd.source_betas[0])


# -- 9: determinism -----------------------------------------------------------

def test_criterion_9_determinism(report, tmp_path):
    def scenario_bytes(sub):
        cfg = ExperimentConfig(scenario="S1", replications=3, output_dir=str(tmp_path / sub))
        run_scenario(cfg)
        return (tmp_path / sub / "results.csv").read_bytes()

    def split_bytes(sub):
        sd = generate_scenario(SCENARIOS["S7-3"], 0)
        run_splitting_eval(sd.target, sd.sources[:3], repetitions=2,
                           methods=["TargetOnly", "AutoTrans"], output_dir=tmp_path / sub)
        return (tmp_path / sub / "results.csv").read_bytes()

    same_sim = scenario_bytes("a") == scenario_bytes("b")
    same_split = split_bytes("c") == split_bytes("d")
    ok = same_sim and same_split
    report(9, ok, f"simulation results.csv identical: {same_sim}; "
                  f"splitting results.csv identical: {same_split}")
    assert ok
