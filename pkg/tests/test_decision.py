import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shmvoi.decision import (
    NO_REPAIR, CostModel, batch_cv, default_w_grid, discount, expected_lcc_preposterior, expected_lcc_prior,
    lcc_perfect, lcc_preposterior, lcc_prior, optimize_w, paired_difference, repair_time, repair_times,
    risk_cumulative, sample_key, voi, vppi,
)
from shmvoi.errors import AnalysisError, ConfigurationError, DomainError
from shmvoi.reliability import accumulate, hazard_from_pf

W = default_w_grid()


def random_curves(n, T=50, seed=0):
    """Per-sample accumulated failure curves with heterogeneous growth."""
    rng = np.random.default_rng(seed)
    rate = 10 ** rng.uniform(-7, -3, size=(n, 1))
    growth = rng.uniform(0.05, 0.25, size=(n, 1))
    p = np.minimum(rate * np.exp(growth * np.arange(1, T + 1)), 0.5)
    return accumulate(p)


# ------------------------------------------------------------------ basics


def test_discount():
    assert discount(0.0) == 1.0
    assert discount(35, 0.02) == pytest.approx(0.5000, abs=1e-4)
    np.testing.assert_array_equal(discount(np.arange(10), 0.0), np.ones(10))
    with pytest.raises(DomainError):
        discount(-1.0)


def test_cost_model_validation():
    assert CostModel.from_ratio(1e-3).c_R == pytest.approx(1e4)
    assert CostModel(c_F=0.0).ratio == np.inf
    for kw in ({"c_R": 0.0}, {"c_F": -1.0}, {"r": 1.0}, {"r": -0.1}, {"T": 0}):
        with pytest.raises(ConfigurationError):
            CostModel(**kw)


def test_w_grid():
    assert W.size == 201 and W[-1] == np.inf
    assert W[0] == pytest.approx(1e-6) and W[-2] == pytest.approx(1e-1)
    assert np.all(np.diff(W[:-1]) > 0)


def test_repair_time_rule():
    assert repair_time(np.zeros(5), 1e-6) is None
    assert repair_time(np.array([0.001, 0.01, 0.1]), 0.05) == 2
    assert repair_time(np.array([0.2, 0.3]), 0.1) == 0
    assert repair_time(np.array([0.001, 0.01, 0.1]), np.inf) is None
    assert repair_time(np.array([0.001, 0.01]), 0.01) == 1  # equality triggers


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(1e-6, 1.0))
def test_repair_times_match_scalar_rule(h, w):
    h = np.asarray(h)
    first = next((i for i, v in enumerate(h) if v >= w), None)
    assert repair_time(h, w) == first


def test_risk_two_year_hand_value():
    pf = accumulate(np.array([[0.1, 0.1]]))
    cost = CostModel(c_F=1e7, c_R=1.0, r=0.0, T=2)
    out = expected_lcc_prior(pf, hazard_from_pf(pf[0]), cost, np.inf)
    assert out.t_repair is None
    assert out.risk == pytest.approx(1e7 * (0.1 + 0.09), rel=1e-14)
    assert out.repair == 0.0


def test_zero_failure_cost_leaves_repair_only():
    pf = random_curves(20, seed=1)
    cost = CostModel(c_F=0.0, c_R=5e3)
    table = lcc_prior(pf, hazard_from_pf(pf.mean(0)), cost, W)
    for o in table.outcomes:
        assert o.risk == 0.0
        expect = 0.0 if o.t_repair is None else 5e3 * 1.02 ** (-o.t_repair)
        assert o.total == pytest.approx(expect)


def test_risk_telescoping():
    pf = random_curves(10, seed=2)
    cum = risk_cumulative(pf, CostModel(c_F=1e7, c_R=1.0, r=0.0))
    np.testing.assert_allclose(cum[:, -1], 1e7 * pf[:, -1], rtol=1e-12)
    assert np.all(cum[:, 0] == 0)
    disc = risk_cumulative(pf, CostModel(c_F=1e7, c_R=1.0, r=0.02))
    inc = np.diff(pf, axis=1, prepend=0.0)
    np.testing.assert_allclose(disc[:, -1], 1e7 * (inc * 1.02 ** -np.arange(1, 51)).sum(1), rtol=1e-12)


def test_costs_stop_at_repair():
    pf = random_curves(5, seed=3)
    h = hazard_from_pf(pf.mean(0))
    cost = CostModel.from_ratio(1e-3)
    w = float(h[20])
    o = expected_lcc_prior(pf, h, cost, w)
    t = o.t_repair
    assert t == repair_time(h, w)
    cum = risk_cumulative(pf, cost)
    assert o.risk == pytest.approx(cum[:, t].mean(), rel=1e-12)
    assert o.repair == pytest.approx(cost.c_R * 1.02 ** -t, rel=1e-12)
    assert o.total == o.repair + o.risk


# ------------------------------------------------------------------ optimisation


def test_optimize_w_tie_rule_and_argmin():
    class Out:
        def __init__(self, total):
            self.total = total

    grid = np.array([1.0, 2.0, 3.0])
    w, _ = optimize_w(lambda w: Out(5.0), grid)
    assert w == 3.0
    w, o = optimize_w(lambda w: Out((w - 2.0) ** 2), grid)
    assert w == 2.0 and o.total == 0.0
    with pytest.raises(ConfigurationError):
        optimize_w(lambda w: Out(0.0), [])


def test_cost_table_best_agrees_with_optimize_w():
    pf = random_curves(50, seed=4)
    h = hazard_from_pf(pf.mean(0))
    cost = CostModel.from_ratio(1e-3)
    table = lcc_prior(pf, h, cost, W)
    w, o = optimize_w(lambda w: expected_lcc_prior(pf, h, cost, w), W)
    assert table.best().w == w
    assert table.best().total == pytest.approx(o.total, rel=1e-14)


def test_optimal_total_decreases_with_repair_cost():
    pf = random_curves(100, seed=5)
    h = hazard_from_pf(pf.mean(0))
    totals = [lcc_prior(pf, h, CostModel.from_ratio(r), W).best().total for r in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(totals) <= 1e-9)


# ------------------------------------------------------------------ preposterior, VoI, VPPI


def test_uninformative_preposterior_equals_prior():
    pf = random_curves(40, seed=6)
    h = hazard_from_pf(pf.mean(0))
    cost = CostModel.from_ratio(1e-3)
    key = sample_key(pf)
    H = np.broadcast_to(h, pf.shape)
    pri = lcc_prior(pf, h, cost, W, key)
    pre = lcc_preposterior(pf, H, cost, W, key)
    np.testing.assert_allclose(pre.totals, pri.totals, rtol=1e-14)
    assert voi(pri.best(), pre.best()).value == pytest.approx(0.0, abs=1e-9)


def test_perfect_data_matches_perfect_information():
    pf = random_curves(40, seed=7)
    cost = CostModel.from_ratio(1e-2)
    own = hazard_from_pf(pf)
    pre = lcc_preposterior(pf, own, cost, W)
    perfect = lcc_perfect(pf, cost, W)
    # per-sample optima can only beat one common threshold
    assert perfect.total <= pre.best().total + 1e-9
    for j, w in enumerate(W):
        single = expected_lcc_preposterior(pf, own, cost, w)
        assert single.total == pytest.approx(pre.outcomes[j].total, rel=1e-14)


def test_point_mass_prior_has_zero_vppi():
    pf = np.repeat(random_curves(1, seed=8), 30, axis=0)
    cost = CostModel.from_ratio(1e-3)
    key = sample_key(pf)
    best = lcc_prior(pf, hazard_from_pf(pf.mean(0)), cost, W, key).best()
    v = vppi(best, pf, cost, W, key)
    assert v.value == pytest.approx(0.0, abs=1e-9)
    assert v.std_error == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=5)
@given(st.sampled_from([1e-1, 1e-2, 1e-3, 1e-4]), st.floats(0.0, 0.05), st.integers(0, 2**31))
def test_information_never_hurts(ratio, r, seed):
    pf = random_curves(200, seed=seed)
    cost = CostModel.from_ratio(ratio, r=r)
    key = sample_key(pf)
    rng = np.random.default_rng(seed + 1)
    # noisy forecast hazards: the truth hazard times a lognormal error
    H = hazard_from_pf(pf) * np.exp(0.5 * rng.standard_normal(pf.shape))
    H = np.clip(H, 0, 1)
    pri = lcc_prior(pf, hazard_from_pf(pf.mean(0)), cost, W, key).best()
    pre = lcc_preposterior(pf, H, cost, W, key).best()
    v = voi(pri, pre)
    vp = vppi(pri, pf, cost, W, key)
    assert vp.value >= -1e-9
    assert v.value >= -2 * v.std_error
    combined = np.hypot(v.std_error, vp.std_error)
    assert vp.value >= v.value - 2 * combined


def test_sample_set_mismatch_is_rejected():
    pf = random_curves(20, seed=9)
    cost = CostModel.from_ratio(1e-3)
    a = lcc_prior(pf, hazard_from_pf(pf.mean(0)), cost, W, "a").best()
    b = lcc_prior(pf, hazard_from_pf(pf.mean(0)), cost, W, "b").best()
    with pytest.raises(AnalysisError, match="same parameter samples"):
        paired_difference(a, b)
    c = lcc_prior(pf[:10], hazard_from_pf(pf.mean(0)), cost, W, "a").best()
    with pytest.raises(AnalysisError):
        voi(a, c)


def test_missing_posterior_hazard_names_sample_and_year():
    pf = random_curves(4, seed=10)
    H = hazard_from_pf(pf)
    H[2, 7] = np.nan
    with pytest.raises(AnalysisError, match="sample 2, year 8"):
        lcc_preposterior(pf, H, CostModel(), W)
    with pytest.raises(AnalysisError, match="does not match"):
        lcc_preposterior(pf, H[:, :10], CostModel(), W)


def test_batch_cv():
    x = np.arange(100, dtype=float)
    se, cv = batch_cv(x)
    means = x.reshape(10, 10).mean(1)
    assert se == pytest.approx(means.std(ddof=1) / np.sqrt(10))
    assert cv == pytest.approx(se / x.mean())
    assert np.isnan(batch_cv(np.ones(3))[0])
    assert batch_cv(np.zeros(20)) == (0.0, 0.0)


def test_sample_key():
    a = np.arange(6.0).reshape(3, 2)
    assert sample_key(a) == sample_key(a.copy())
    assert sample_key(a) != sample_key(a.reshape(2, 3))
    assert sample_key(a) != sample_key(a + 1e-12)


def test_no_repair_sentinel():
    t = repair_times(np.array([[0.0, 0.1]]), np.array([0.5, np.inf]))
    assert np.all(t == NO_REPAIR)
