import numpy as np
import pytest

from pmu_gsa.config import parse_config
from pmu_gsa.identify import Category
from pmu_gsa.metrics import TrialRecord, aggregate, estimation_error, pmd_pfd, rmse, run_montecarlo

N, A, P, M = Category.NO_ATTACK, Category.POSITIVE, Category.EXACTLY_PI, Category.NEGATIVE
BASE = {"feeder": "ieee34", "placement": {"pmus": [800, 816, 820, 836, 854, 858]}, "seed": 3}


def record(j, psi_pi, cats, theta_hat_pi=None, **kw):
    return TrialRecord(j, np.pi * np.asarray(psi_pi, dtype=float), dict(zip(range(2, 2 + len(cats)), cats)),
                       None if theta_hat_pi is None else np.pi * np.asarray(theta_hat_pi, dtype=float), **kw)


def test_miss_and_false_indicators():
    r = record(0, [0, 0.5, 0, 0, -0.5], [N, A, A, N])
    np.testing.assert_array_equal(r.attacked, [True, False, False, True])
    np.testing.assert_array_equal(r.alpha, [1, 0, 0, 1])
    np.testing.assert_array_equal(r.beta, [0, 1, 1, 0])


def test_pmd_pfd_all_correct():
    recs = [record(j, [0, 0.5, 0, 0, 0], [A, N, N, N]) for j in range(5)]
    assert pmd_pfd(recs) == (0.0, 0.0)


def test_pfd_single_false_flag():
    recs = [record(j, [0, 0.5, 0, 0, 0], [A, N, N, N]) for j in range(100)]
    recs[17] = record(17, [0, 0.5, 0, 0, 0], [A, N, M, N])
    pmd, pfd = pmd_pfd(recs)
    assert pmd == 0 and pfd == 1 / 300


def test_pmd_saturates():
    recs = [record(j, [0, 0.5, -0.2, 0, 0], [N, N, N, N]) for j in range(7)]
    assert pmd_pfd(recs)[0] == 1.0


def test_undefined_denominators():
    assert pmd_pfd([record(0, [0, 0, 0], [N, N])])[0] is None
    assert pmd_pfd([record(0, [0, 1, 0.5], [P, A])])[1] is None
    assert estimation_error([record(0, [0, 0, 0], [N, N], [0, 0, 0])]) is None


def test_estimation_error_wrap_and_pinned():
    assert estimation_error([record(0, [0, 0.9, 0], [A, N], [0, -0.9, 0])]) == pytest.approx(0.2 * np.pi)
    assert estimation_error([record(0, [0, 1.0, 0], [P, N], [0, 1.0, 0])]) == 0
    assert estimation_error([record(0, [0, 4.9, 0], [A, N], [0, 0.9, 0])]) == pytest.approx(0, abs=1e-12)
    # unattacked PMUs do not enter the average
    assert estimation_error([record(0, [0, 0.5, 0], [A, N], [0, 0.6, 0.3])]) == pytest.approx(0.1 * np.pi)


def test_failed_trials_excluded():
    good = record(0, [0, 0.5], [A], [0, 0.5])
    bad = record(1, [0, 0.5], [], error="EstimationError: boom")
    agg = aggregate([good, bad])
    assert agg.n_trials == 1 and agg.n_failed == 1 and agg.pmd == 0


def test_rmse_zero_and_known():
    v = np.array([[1.0, 0.9 * np.exp(-2.1j), 0], [0.95 * np.exp(-0.05j), 0, 0]])
    recs = [record(j, [0, 0], [N], v_true=v, v_est=v.copy()) for j in range(3)]
    r = rmse(recs)
    assert np.nanmax(r.delta_v) == 0 and np.nanmax(r.delta_theta) == 0
    assert np.isnan(r.delta_v[0, 2])
    est = v * np.array([[1.02, 1, 1], [1, 1, 1]]) * np.exp(1j * np.array([[0, 0.01, 0], [0, 0, 0]]))
    recs = [record(0, [0, 0], [N], v_true=v, v_est=est), record(1, [0, 0], [N], v_true=v, v_est=v)]
    r = rmse(recs)
    assert r.delta_v[0, 0] == pytest.approx(np.sqrt(0.02 ** 2 / 2))
    assert r.delta_theta[0, 1] == pytest.approx(np.sqrt(0.01 ** 2 / 2))
    vmax, tmax = r.max_per_phase
    assert vmax[0] == pytest.approx(r.delta_v[0, 0])


def test_metrics_invariant_to_order():
    rng = np.random.default_rng(0)
    cats = [A, N, M, P]
    recs = [record(j, [0, 0.5, 0, -0.3, 1.0], list(rng.choice(cats, 4)), [0, *rng.uniform(-1, 1, 4)])
            for j in range(20)]
    shuffled = [recs[k] for k in rng.permutation(20)]
    assert pmd_pfd(recs) == pmd_pfd(shuffled)
    assert estimation_error(recs) == estimation_error(shuffled)


def test_montecarlo_no_attack_identification_only():
    cfg = parse_config({**BASE, "psi": [0] * 6})
    recs, agg = run_montecarlo(cfg, 30, correct=False)
    assert agg.pmd is None and agg.pfd == 0.0
    assert [r.trial for r in recs] == list(range(30))


def test_montecarlo_deterministic_and_parallel_consistent():
    cfg = parse_config({**BASE, "psi": [0, 0, 0.5, 0, 0, 0], "pso": {"swarm_size": 10, "max_iters": 30}})
    r1, a1 = run_montecarlo(cfg, 3)
    r2, a2 = run_montecarlo(cfg, 3)
    assert a1 == a2
    r3, a3 = run_montecarlo(cfg, 3, jobs=2)
    assert a1 == a3
    np.testing.assert_array_equal(r1[2].theta_hat, r3[2].theta_hat)


def test_correction_improves_every_bus():
    cfg = parse_config({**BASE, "psi": [0, 0, -0.5, 0.2, -0.1, 4.9]})
    recs, agg = run_montecarlo(cfg, 3)
    assert agg.pmd == 0 and agg.epsilon < 0.05
    ok = ~np.isnan(agg.rmse_corrected.delta_theta)
    assert np.all(agg.rmse_corrected.delta_theta[ok] <= agg.rmse_spoofed.delta_theta[ok])


def test_epsilon_shrinks_with_noise():
    cfg = parse_config({**BASE, "psi": [0, 0, 0.5, 0, 0, 0], "pso": {"swarm_size": 20, "max_iters": 80}})
    eps_full = run_montecarlo(cfg, 8)[1].epsilon
    half = cfg.replace(noise=cfg.noise.scaled(0.5))
    eps_half = run_montecarlo(half, 8)[1].epsilon
    assert eps_half <= eps_full
