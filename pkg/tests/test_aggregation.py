import numpy as np
import pytest

from pathwealth.aggregation import (
    check_best_final_vs_time_average,
    laissez_faire,
    minimax_weights,
    run_aggregate,
    tracking_report,
    verify_mixture,
)
from pathwealth.errors import BoundViolation, DimensionMismatch, EmptyScenarioSet, InvalidParams
from pathwealth.paths import CadlagPath, Partition, discretize
from pathwealth.scenarios import generate
from pathwealth.strategies import (
    Cash,
    LaissezFaire,
    MarketIndex,
    PortfolioOfPortfolio,
    SimpleAverage,
    SingleStock,
    Softmax,
    log_wealth_curve,
)


def grid_of(path):
    return discretize(path, Partition(path.times))


class TestLaissezFaire:
    def test_single_child_is_the_child(self):
        g = grid_of(generate("jump_diffusion", {"d": 2, "steps": 100}, 1))
        assert np.array_equal(laissez_faire([Softmax()], [1.0]).allocations(g), Softmax().allocations(g))

    def test_best_stock_formula(self):
        p = generate("step", {"d": 3, "n_jumps": 20}, 2)
        g = grid_of(p)
        b = np.array([0.2, 0.3, 0.5])
        A = laissez_faire([SingleStock(i + 1) for i in range(3)], b).allocations(g)
        rel = g.values[:-1] / g.values[0]
        expected = b * rel / (rel @ b)[:, None]
        assert np.allclose(A, expected, rtol=1e-13)

    def test_identical_children(self):
        g = grid_of(generate("gbm", {"d": 2, "steps": 100}, 3))
        A = laissez_faire([MarketIndex(), MarketIndex()], [0.9, 0.1]).allocations(g)
        assert np.allclose(A, MarketIndex().allocations(g), rtol=1e-14)

    def test_weights_validated(self):
        with pytest.raises(DimensionMismatch):
            laissez_faire([Cash(), Softmax()], [1.0])
        with pytest.raises(InvalidParams):
            laissez_faire([Cash(), Softmax()], [0.3, 0.3])

    def test_boundary_weight_allowed(self):
        g = grid_of(generate("gbm", {"d": 2, "steps": 50}, 3))
        A = laissez_faire([SingleStock(1), SingleStock(2)], [1.0, 0.0]).allocations(g)
        assert np.array_equal(A, SingleStock(1).allocations(g))


class TestMixture:
    def test_step_paths_exact(self):
        rng = np.random.default_rng(0)
        for seed in range(20):
            d, m = int(rng.integers(1, 5)), int(rng.integers(1, 6))
            p = generate("step", {"d": d, "n_jumps": 50}, seed)
            kids = [[SingleStock(1), MarketIndex(), Softmax(), SimpleAverage(1, 0.5), Cash()][k] for k in range(m)]
            b = rng.dirichlet(np.ones(m))
            run = run_aggregate(laissez_faire(kids, b), grid_of(p))
            assert verify_mixture(run.w_hat, run.child_wealths, b) <= 1e-12

    def test_m1_zero(self):
        w = np.array([1.0, 1.2, 0.9])
        assert verify_mixture(w, w[None, :], [1.0]) == 0.0

    def test_best_stock_numbers(self):
        p = CadlagPath([0.0, 1.0], [[100.0, 100.0], [110.0, 90.0]])
        run = run_aggregate(laissez_faire([SingleStock(1), SingleStock(2)], [0.5, 0.5]), grid_of(p))
        assert run.w_hat[-1] == pytest.approx(1.0, rel=1e-15)

    def test_composition_flattens(self):
        p = generate("jump_diffusion", {"d": 3, "steps": 300}, 4)
        g = grid_of(p)
        a, b, c, d = SingleStock(1), MarketIndex(), Softmax(), SimpleAverage(2, 0.5)
        nested = LaissezFaire([LaissezFaire([a, b], [0.3, 0.7]), LaissezFaire([c, d], [0.6, 0.4])], [0.4, 0.6])
        flat = LaissezFaire([a, b, c, d], [0.12, 0.28, 0.36, 0.24])
        wn = np.exp(log_wealth_curve(nested.allocations(g), g))
        wf = np.exp(log_wealth_curve(flat.allocations(g), g))
        assert np.max(np.abs(wn / wf - 1)) <= 1e-10


class TestTracking:
    def test_uniform_bound_is_m(self):
        w = np.array([[1.0, 1.1], [1.0, 0.9], [1.0, 1.3]])
        b = np.full(3, 1 / 3)
        rep = tracking_report(w, b @ w, b)
        assert rep.bound == pytest.approx(3.0)

    def test_numbers(self):
        w = np.array([[1.0, 1.1], [1.0, 0.9]])
        rep = tracking_report(w, np.array([1.0, 1.0]), [0.5, 0.5])
        assert rep.ratio[-1] == pytest.approx(1.1) and rep.ratio[-1] <= 2

    def test_identical(self):
        w = np.array([[1.0, 1.5, 0.7]] * 2)
        assert np.all(tracking_report(w, w[0], [0.5, 0.5]).ratio == 1.0)

    def test_violation_raises(self):
        with pytest.raises(BoundViolation):
            tracking_report(np.array([[1.0, 2.0]]), np.array([1.0, 2.5]), [1.0])

    def test_requires_interior(self):
        with pytest.raises(InvalidParams):
            tracking_report(np.ones((2, 3)), np.ones(3), [1.0, 0.0])

    def test_decay_with_horizon(self):
        b = np.array([0.25, 0.75])
        kids = [SingleStock(1), SingleStock(2)]
        rates = []
        for T in (1.0, 10.0, 100.0):
            p = generate("gbm", {"d": 2, "T": T, "steps": 2000, "sigma": 0.4, "mu": [0.1, -0.1]}, 5)
            run = run_aggregate(laissez_faire(kids, b), grid_of(p))
            rep = tracking_report(run.child_wealths, run.w_hat, b, T)
            assert rep.rate <= np.log(1 / b.min()) / T + 1e-12
            rates.append(np.log(1 / b.min()) / T)
        assert rates[0] > rates[1] > rates[2]


class TestMinimax:
    def test_single_scenario(self):
        res = minimax_weights(None, wealths=np.array([[1.0, 3.0, 2.0]]))
        assert res.value == pytest.approx(1.0)
        assert res.b == pytest.approx([0.0, 1.0, 0.0], abs=1e-9)

    def test_symmetric_swap(self):
        w = 1.7
        res = minimax_weights(None, wealths=np.array([[w, 1 / w], [1 / w, w]]))
        assert res.b == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(3)
        W = np.exp(rng.normal(0, 0.5, size=(5, 3)))
        res = minimax_weights(None, wealths=W)
        a = W / W.max(axis=1, keepdims=True)
        ticks = np.linspace(0, 1, 1001)
        B1, B2 = np.meshgrid(ticks, ticks, indexing="ij")
        mask = B1 + B2 <= 1 + 1e-12
        B = np.stack([B1[mask], B2[mask], 1 - B1[mask] - B2[mask]], axis=1)
        oracle = np.max(1 / (a @ B.T), axis=0).min()
        assert abs(res.value - oracle) <= 1e-3 and res.value <= oracle + 1e-12
        assert 1.0 <= res.value <= 3.0

    def test_from_paths(self):
        paths = [generate("gbm", {"d": 2, "steps": 200, "sigma": 0.5}, s) for s in range(4)]
        res = minimax_weights([SingleStock(1), SingleStock(2)], paths)
        assert 1.0 <= res.value <= 2.0 and res.b.sum() == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(EmptyScenarioSet):
            minimax_weights([Cash()], [])


class TestBestFinalVsTimeAverage:
    @pytest.mark.parametrize("b2", [0.0, 0.3, 1.0])
    def test_identity(self, b2):
        p = generate("jump_diffusion", {"d": 2, "steps": 400, "T": 1.0}, 6)
        _, err = check_best_final_vs_time_average(MarketIndex(), 0.6, b2, p, Partition(p.times))
        assert err <= 1e-12

    def test_b2_zero_is_stopped_child(self):
        p = generate("gbm", {"d": 2, "steps": 100}, 1)
        g = grid_of(p)
        agg, _ = check_best_final_vs_time_average(MarketIndex(), 0.5, 0.0, p, Partition(p.times))
        w = np.exp(log_wealth_curve(agg.allocations(g), g))
        child = np.exp(log_wealth_curve(MarketIndex().allocations(g), g))
        k = int(np.searchsorted(g.times, 0.5, side="right") - 1)
        assert np.allclose(w[: k + 1], child[: k + 1], rtol=1e-13)
        assert np.allclose(w[k:], child[k], rtol=1e-13)

    def test_b2_one_is_time_average(self):
        p = generate("gbm", {"d": 2, "steps": 100}, 1)
        g = grid_of(p)
        agg, _ = check_best_final_vs_time_average(MarketIndex(), 0.5, 1.0, p, Partition(p.times))
        w = np.exp(log_wealth_curve(agg.allocations(g), g))
        pop = np.exp(log_wealth_curve(PortfolioOfPortfolio(MarketIndex(), 0.5).allocations(g), g))
        assert np.allclose(w, pop, rtol=1e-13)

    def test_constant_path(self):
        p = CadlagPath(np.linspace(0, 1, 11), np.full((11, 2), 5.0))
        agg, _ = check_best_final_vs_time_average(Softmax(), 0.5, 0.4, p)
        g = grid_of(p)
        assert np.all(log_wealth_curve(agg.allocations(g), g) == 0)
