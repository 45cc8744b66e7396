import math

import numpy as np
import pytest

from nmattn import DenseMatrix, SparsityMode, prune_dense
from nmattn.codec import PruneMask
from nmattn.theory import (
    CostModelParams,
    QualityParams,
    empirical_quality,
    erf,
    erfinv,
    mc_quality_nm,
    mc_quality_topk,
    memory_access_counts,
    mse_performer_bound,
    mse_sm12,
    nm_fixed_crossover_density,
    performer_feature_count,
    performer_nm_crossover,
    performer_speedup,
    performer_unity_crossover,
    quality_fixed,
    quality_nm,
    quality_topk,
    speedup_fixed,
    speedup_nm,
    speedup_topk_bound,
    topk_equal_efficiency_density,
    topk_unity_density,
)

M12 = SparsityMode.ONE_OF_TWO
M24 = SparsityMode.TWO_OF_FOUR


# ---------------------------------------------------------------------------
# erf / erfinv


def test_erf_anchors():
    assert erf(0.0) == 0.0
    assert abs(erf(6.0) - 1.0) <= 1e-7
    assert abs(erf(0.5) - 0.5204998778130465) < 1e-15


def test_erfinv_anchors_and_domain():
    assert erfinv(0.0) == 0.0
    for bad in (-1.0, 1.0, -1.5, 2.0):
        with pytest.raises(ValueError, match="domain"):
            erfinv(bad)


def test_erfinv_roundtrip():
    for x in np.linspace(-3.0, 3.0, 601):
        assert abs(erfinv(erf(float(x))) - x) <= 1e-6


def test_erfinv_fuzz_against_scipy():
    sp = pytest.importorskip("scipy.special")
    ys = np.concatenate(
        [np.linspace(-0.999, 0.999, 4001), 1 - np.logspace(-15, -3, 100),
         -(1 - np.logspace(-15, -3, 100))]
    )
    for y in ys:
        ref = float(sp.erfinv(y))
        assert abs(erfinv(float(y)) - ref) <= 1e-10 * max(1.0, abs(ref))


# ---------------------------------------------------------------------------
# quality closed forms


def test_quality_topk_at_zero_exponent_equals_density():
    for s in (0.02, 0.25, 0.5, 0.9):
        assert quality_topk(s, 0.0) == pytest.approx(s, abs=1e-12)


def test_quality_topk_half_density_closed_form():
    assert quality_topk(0.5, 1.0) == pytest.approx((1 + erf(1 / math.sqrt(2))) / 2, abs=1e-15)


def test_quality_topk_monotone_in_both_arguments():
    grid_s = np.linspace(0.02, 0.98, 25)
    grid_ps = np.linspace(0.0, 8.0, 25)
    for ps in grid_ps:
        vals = [quality_topk(float(s), float(ps)) for s in grid_s]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        # open interval mathematically; erf saturation caps it at 1.0 in float
        assert all(0 < v <= 1 for v in vals)
    for s in grid_s:
        vals = [quality_topk(float(s), float(ps)) for ps in grid_ps]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_quality_fixed_is_identity():
    assert quality_fixed(0.5) == 0.5
    assert quality_fixed(0.63) == 0.63
    assert quality_fixed(1.0) == 1.0
    with pytest.raises(ValueError):
        quality_fixed(0.0)


def test_quality_nm_anchors():
    assert quality_nm(0.0).value == 0.5
    q1 = quality_nm(1.0)
    assert q1.value == pytest.approx(0.76025, abs=1e-4)
    assert not q1.is_lower_bound
    q7 = quality_nm(7.0, M24)
    assert q7.value == pytest.approx(0.9999996, abs=5e-7)
    assert q7.is_lower_bound


def test_topk_at_equal_density_dominates_nm():
    for ps in np.linspace(0.0, 10.0, 41):
        assert quality_topk(0.5, float(ps)) >= quality_nm(float(ps)).value - 1e-12


# ---------------------------------------------------------------------------
# empirical quality


def test_empirical_quality_single_row():
    a = DenseMatrix([[0.6, 0.4]])
    mask = PruneMask(np.array([[True, False]]))
    assert empirical_quality(a, mask, 1.0) == pytest.approx(0.6, abs=1e-15)


def test_empirical_quality_full_mask_is_one(rng):
    a = DenseMatrix(np.abs(rng.standard_normal((5, 8))))
    mask = PruneMask(np.ones((5, 8), dtype=bool))
    assert empirical_quality(a, mask, 2.0) == 1.0


def test_empirical_quality_errors(rng):
    a = DenseMatrix(np.abs(rng.standard_normal((3, 4))))
    mask = PruneMask(np.ones((3, 4), dtype=bool))
    with pytest.raises(ValueError, match="p must be > 0"):
        empirical_quality(a, mask, 0.0)
    with pytest.raises(ValueError, match="shape"):
        empirical_quality(a, PruneMask(np.ones((3, 6), dtype=bool)), 1.0)
    with pytest.raises(ValueError, match="zero row"):
        empirical_quality(DenseMatrix(np.zeros((2, 4))), PruneMask(np.ones((2, 4), dtype=bool)), 1.0)
    with pytest.raises(ValueError, match="nonnegative"):
        empirical_quality(DenseMatrix([[-1.0, 2.0]]), PruneMask(np.ones((1, 2), dtype=bool)), 1.0)


def test_empirical_quality_converges_to_closed_form(rng):
    n = 1024
    scores = rng.standard_normal((n, n))
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    a = DenseMatrix(e / e.sum(axis=1, keepdims=True))
    _, mask = prune_dense(a, M12)
    measured = empirical_quality(a, mask, 1.0)
    assert measured == pytest.approx(quality_nm(1.0).value, abs=0.02)


# ---------------------------------------------------------------------------
# Monte-Carlo validators


def test_mc_quality_nm_is_seeded_deterministic():
    a = mc_quality_nm(1.0, 1.0, M12, 100_000, seed=42)
    b = mc_quality_nm(1.0, 1.0, M12, 100_000, seed=42)
    assert a == b
    c = mc_quality_nm(1.0, 1.0, M12, 100_000, seed=43)
    assert c.value != a.value


def test_mc_quality_nm_against_closed_form():
    est = mc_quality_nm(1.0, 1.0, M12, 10**6, seed=7)
    assert est.within(quality_nm(1.0).value, 3.0)
    zero = mc_quality_nm(0.0, 1.0, M12, 10**6, seed=7)
    assert zero.value == pytest.approx(0.5, abs=0.003)


def test_mc_quality_two_of_four_sits_above_bound():
    est = mc_quality_nm(1.0, 1.0, M24, 10**6, seed=11)
    assert est.value >= quality_nm(1.0).value


def test_mc_quality_nm_rejects_small_samples():
    with pytest.raises(ValueError, match="samples"):
        mc_quality_nm(1.0, 1.0, M12, 999)


def test_mc_quality_topk_matches_closed_form():
    est = mc_quality_topk(0.02, 1.0, 10**7, seed=5)
    assert abs(est.value - quality_topk(0.02, 1.0)) <= 1e-3
    assert est.within(quality_topk(0.02, 1.0), 4.0)


# ---------------------------------------------------------------------------
# speedup models


def test_topk_bound_plug_in_values():
    assert speedup_topk_bound(CostModelParams(d=64, T=128, s=0.0)) == 2.5
    s1 = topk_unity_density(64, 128)
    assert s1 == pytest.approx(384 / 8512, abs=1e-12)
    assert speedup_topk_bound(CostModelParams(d=64, T=128, s=s1)) == pytest.approx(1.0, abs=1e-12)


def test_topk_bound_monotone_decreasing():
    vals = [speedup_topk_bound(CostModelParams(d=64, T=128, s=float(s)))
            for s in np.linspace(0.0, 1.0, 21)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_fixed_speedup_values():
    assert speedup_fixed(CostModelParams(d=64, T=128, s=1.0)).asymptotic == pytest.approx(1.0, abs=1e-12)
    est = speedup_fixed(CostModelParams(d=64, T=128, s=0.63))
    assert est.asymptotic == pytest.approx(1.499, abs=1e-3)


def test_fixed_finite_approaches_asymptotic():
    est = speedup_fixed(CostModelParams(n=10**6, d=64, T=128, s=0.37))
    assert est.finite == pytest.approx(est.asymptotic, rel=1e-3)


def test_nm_speedup_exact_rational():
    est = speedup_nm(CostModelParams(d=64, T=128))
    assert est.asymptotic == 10240 / 6848
    big_t = speedup_nm(CostModelParams(d=64, T=10**9)).asymptotic
    assert big_t == pytest.approx(48 / 25, rel=1e-6)
    finite = speedup_nm(CostModelParams(n=10**6, d=64, T=128)).finite
    assert finite == pytest.approx(est.asymptotic, rel=1e-3)


def test_nm_fixed_crossover_near_063():
    s_star = nm_fixed_crossover_density(64, 128)
    assert s_star == pytest.approx(0.63, abs=0.01)
    fixed = speedup_fixed(CostModelParams(d=64, T=128, s=s_star)).asymptotic
    assert fixed == pytest.approx(speedup_nm(CostModelParams(d=64, T=128)).asymptotic, abs=1e-9)


def test_topk_equal_efficiency_density_near_002():
    s_eq = topk_equal_efficiency_density(64, 128)
    assert s_eq == pytest.approx(0.02, abs=0.002)
    bound = speedup_topk_bound(CostModelParams(d=64, T=128, s=s_eq))
    assert bound == pytest.approx(speedup_nm(CostModelParams(d=64, T=128)).asymptotic, abs=1e-9)


# ---------------------------------------------------------------------------
# memory access table


def test_memory_access_full_plug_in():
    counts = memory_access_counts("full", 1024, 64, 128)
    assert counts.qk == 1024 * 1024 * 2
    assert counts.softmax == 2 * 1024 * 1024
    assert counts.av == 1024 * 64 * (2 * 1024 / 128 + 1)


def test_memory_access_topk_density_one():
    n, d, T = 512, 64, 128
    counts = memory_access_counts("topk", n, d, T, 1.0)
    assert counts.av == n * d * (n + n / T + 1)
    assert counts.softmax == 2 * n * n


def test_memory_access_ratio_reproduces_topk_bound():
    n, d, T, s = 10**9, 64, 128, 0.3
    full = memory_access_counts("full", n, d, T)
    topk = memory_access_counts("topk", n, d, T, s)
    bound = speedup_topk_bound(CostModelParams(d=d, T=T, s=s))
    assert full.total / topk.total == pytest.approx(bound, rel=1e-6)


def test_memory_access_unknown_kind():
    with pytest.raises(ValueError, match="kind"):
        memory_access_counts("dense", 8, 8, 8)


# ---------------------------------------------------------------------------
# Performer comparison


def test_performer_feature_count():
    assert performer_feature_count(64) == 266


def test_performer_crossings_match_anchors():
    n1 = performer_unity_crossover(64, 128, 266)
    assert 600 <= n1 <= 750
    assert performer_speedup(n1, 64, 128, 266) > 1.0
    assert performer_speedup(n1 - 1, 64, 128, 266) <= 1.0
    n2 = performer_nm_crossover(64, 128, 266)
    assert 900 <= n2 <= 1100
    nm_there = speedup_nm(CostModelParams(n=n2, d=64, T=128)).finite
    assert performer_speedup(n2, 64, 128, 266) >= nm_there


def test_performer_speedup_grows_without_bound():
    prev = 0.0
    for n in (10**3, 10**4, 10**5, 10**6):
        cur = performer_speedup(n, 64, 128, 266)
        assert cur > prev
        prev = cur
    assert prev > 100


# ---------------------------------------------------------------------------
# MSE comparison


def test_mse_sm12_at_unit_kernel_is_half():
    assert mse_sm12(1.0, 1.0, 64) == 0.5


def test_mse_sm12_vanishes_at_extremes():
    assert mse_sm12(1e-12, 1.0, 64) <= 1e-24
    assert mse_sm12(math.exp(40.0), 1.0, 64) == 0.0  # erf saturates, damping wins


def test_mse_performer_bound_limits():
    assert mse_performer_bound(1.0, 1.0, 1.0, 10**12, 64) == pytest.approx(0.0, abs=1e-11)
    sm = math.exp(3.0)
    ours = mse_sm12(sm, 1.0, 64)
    theirs = mse_performer_bound(sm, 1.0, 1.0, 266, 64)
    assert theirs > ours  # growth in SM^4 vs erf-damped


def test_mse_performer_bound_regression_pin():
    # frozen first-run evaluation at m=266, d=64, unit norms, sm=1
    assert mse_performer_bound(1.0, 1.0, 1.0, 266, 64) == pytest.approx(
        0.0009542718328994881, abs=1e-18
    )


def test_mse_sm12_matches_monte_carlo(rng):
    d = 16
    q = rng.standard_normal(d)
    q *= 1.2 / np.linalg.norm(q)
    k = rng.standard_normal(d)
    k *= 1.0 / np.linalg.norm(k)
    sm = math.exp(float(q @ k) / math.sqrt(d))
    closed = mse_sm12(sm, float(np.linalg.norm(q)), d)
    draws = rng.standard_normal((10**6, d))
    hits = (draws @ q > float(q @ k)).mean()
    mc = sm * sm * hits
    se = sm * sm * math.sqrt(hits * (1 - hits) / 10**6)
    assert abs(closed - mc) <= 4 * se


# ---------------------------------------------------------------------------
# parameter bundles


def test_quality_params_validation():
    p = QualityParams(p=2.0, sigma=1.5, mu=0.3, s=0.25)
    assert p.p_sigma == 3.0
    with pytest.raises(ValueError):
        QualityParams(p=-1.0)
    with pytest.raises(ValueError):
        QualityParams(sigma=0.0)
    with pytest.raises(ValueError):
        QualityParams(s=0.0)


def test_cost_model_params_validation():
    with pytest.raises(ValueError):
        CostModelParams(n=0)
    with pytest.raises(ValueError):
        CostModelParams(s=1.5)
    with pytest.raises(ValueError):
        CostModelParams(m=0)
    assert CostModelParams(d=64, T=128).features == 266


def test_task_exponent_anchor_documented():
    from nmattn.theory import DEFAULT_TASK_EXPONENT

    assert DEFAULT_TASK_EXPONENT == 6.5
    # a usable argument for the quality models, not just documentation
    assert 0 < quality_nm(DEFAULT_TASK_EXPONENT).value <= 1
