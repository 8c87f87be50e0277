import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathwealth.errors import DimensionMismatch, IndexOutOfRange, InvalidHorizon, InvalidParams, StateCorrupt, UnknownKind
from pathwealth.paths import CadlagPath, Grid, Partition, discretize, sample_ladder, stop, stop_left
from pathwealth.scenarios import generate
from pathwealth.strategies import (
    Cash,
    ConvexCombination,
    ExponentialAverage,
    LaissezFaire,
    MarketIndex,
    PortfolioOfPortfolio,
    SimpleAverage,
    SingleStock,
    Softmax,
    Truncated,
    check_allocation,
    evaluate,
    from_spec,
    make_single_stock,
)


def const(x, T=10.0):
    return CadlagPath.constant_path(x, T)


def builtins(d=2, T=0.8):
    return [
        Cash(),
        SingleStock(1),
        SingleStock(d),
        MarketIndex(),
        SimpleAverage(1, T),
        ExponentialAverage(d, 1.7),
        Softmax(),
        PortfolioOfPortfolio(MarketIndex(), T),
        PortfolioOfPortfolio(SimpleAverage(1, 0.5), T),
        ConvexCombination([SingleStock(1), Softmax()], [0.3, 0.5]),
        LaissezFaire([SingleStock(1), MarketIndex(), Softmax()], [0.2, 0.3, 0.5]),
        Truncated(MarketIndex(), 0.5),
    ]


class TestExamples:
    def test_cash(self):
        assert np.array_equal(evaluate(Cash(), 0.5, const([1.0, 2.0])), [0.0, 0.0])

    def test_single_stock(self):
        s = make_single_stock(1, d=2)
        p = generate("step", {"d": 2, "n_jumps": 5}, seed=1)
        for t in (0.0, 0.3, 1.0):
            assert np.array_equal(evaluate(s, t, stop(p, t)), [1.0, 0.0])

    def test_single_stock_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            make_single_stock(3, d=2)
        with pytest.raises(IndexOutOfRange):
            evaluate(SingleStock(3), 0.0, const([1.0, 2.0]))

    @pytest.mark.parametrize("x,w", [((100, 100), (0.5, 0.5)), ((110, 90), (0.55, 0.45)), ((7,), (1.0,))])
    def test_market_index(self, x, w):
        a = evaluate(MarketIndex(), 1.0, const(list(map(float, x))))
        assert np.allclose(a, w, rtol=0, atol=1e-15)
        assert a.sum() == pytest.approx(1.0, abs=1e-15)

    def test_simple_average(self):
        s = SimpleAverage(1, 2.0)
        p = const([50.0, 60.0])
        assert evaluate(s, 0.0, stop(p, 0.0))[0] == 1.0
        assert evaluate(s, 1.0, stop(p, 1.0))[0] == pytest.approx(0.5)
        assert evaluate(s, 2.0, stop(p, 2.0))[0] == 0.0
        assert evaluate(s, 3.0, stop(p, 3.0))[0] == 0.0
        with pytest.raises(InvalidHorizon):
            SimpleAverage(1, 0.0)

    def test_exponential_average(self):
        s = ExponentialAverage(1, 0.7)
        p = const([50.0])
        assert evaluate(s, 0.0, stop(p, 0.0))[0] == 1.0
        for t in (0.5, 2.0, 5.0):
            assert evaluate(s, t, stop(p, t))[0] == pytest.approx(np.exp(-0.7 * t), rel=1e-12)
        assert evaluate(ExponentialAverage(1, 500.0), 1.0, stop(p, 1.0))[0] < 1e-100
        with pytest.raises(InvalidParams):
            ExponentialAverage(1, 0.0)

    def test_portfolio_of_portfolio(self):
        p = generate("step", {"d": 2, "n_jumps": 8}, seed=2)
        child = MarketIndex()
        s = PortfolioOfPortfolio(child, 0.5)
        assert np.allclose(evaluate(s, 0.0, stop(p, 0.0)), evaluate(child, 0.0, stop(p, 0.0)))
        assert np.all(evaluate(s, 0.7, stop(p, 0.7)) == 0.0)
        assert np.all(evaluate(PortfolioOfPortfolio(Cash(), 0.5), 0.3, stop(p, 0.3)) == 0.0)

    def test_softmax(self):
        assert np.allclose(evaluate(Softmax(), 0.0, const([1.0, 2.0, 3.0])), 1 / 3)
        assert evaluate(Softmax(), 0.5, const([4.0]))[0] == 1.0
        r = np.log(2.0)
        p = CadlagPath([0.0, 0.5, 1.0], [[100.0, 100.0], [100.0 * (1 + r), 100.0], [100.0 * (1 + r), 100.0]])
        assert np.allclose(evaluate(Softmax(), 0.5, stop(p, 0.5)), [2 / 3, 1 / 3], rtol=1e-14)
        # left evaluation does not see the jump at 0.5
        assert np.allclose(evaluate(Softmax(), 0.5, stop_left(p, 0.5)), [0.5, 0.5])

    def test_convex_combination(self):
        p = generate("step", {"d": 2, "n_jumps": 4}, seed=3)
        t = 0.6
        pre = stop(p, t)
        a, b = MarketIndex(), SingleStock(2)
        assert np.array_equal(evaluate(ConvexCombination([a, b], [0.0, 1.0]), t, pre), evaluate(b, t, pre))
        assert np.all(evaluate(ConvexCombination([a, b], [0.0, 0.0]), t, pre) == 0.0)
        e = ConvexCombination([SingleStock(1), SingleStock(2)], [0.5, 0.5])
        assert np.array_equal(evaluate(e, t, pre), [0.5, 0.5])
        with pytest.raises(DimensionMismatch):
            ConvexCombination([a, b], [1.0])
        with pytest.raises(InvalidParams):
            ConvexCombination([a, b], [0.7, 0.7])

    def test_eval_rejects_unstopped_prefix(self):
        p = generate("step", {"d": 1, "n_jumps": 4}, seed=3)
        with pytest.raises(StateCorrupt):
            evaluate(MarketIndex(), 0.5, p)


class TestProperties:
    def test_valid_allocations_on_many_probes(self):
        # 100 paths x 100 cells = 10^4 (t, path) probes per strategy
        grids = []
        for seed in range(50):
            grids.append(discretize(generate("jump_diffusion", {"d": 3, "steps": 100, "T": 1.0, "sigma": 0.6}, seed), Partition.uniform(1.0, 100)))
            grids.append(discretize(generate("gbm", {"d": 3, "steps": 100, "sigma": 1.0}, seed), Partition.uniform(1.0, 100)))
        for s in builtins(3):
            for g in grids:
                A = s.allocations(g)
                assert A.shape == (g.steps, 3)
                assert check_allocation(A), s

    @pytest.mark.parametrize("s", builtins(2), ids=lambda s: s.kind)
    def test_causality_divergent_futures(self, s):
        base = generate("step", {"d": 2, "n_jumps": 20, "grid": 64}, seed=11)
        t = 0.5
        other = CadlagPath(
            np.concatenate([stop(base, t).times, [0.7, 0.9]]),
            np.vstack([stop(base, t).values, [[1.0, 500.0], [300.0, 2.0]]]),
        )
        for tau in (0.25, 0.5):
            assert np.array_equal(evaluate(s, tau, stop(base, tau)), evaluate(s, tau, stop(other, tau)))
        p = Partition.uniform(1.0, 64)
        A1, A2 = s.allocations(discretize(base, p)), s.allocations(discretize(other, p))
        k = 32  # cells ending at or before t
        assert np.array_equal(A1[:k], A2[:k])

    @pytest.mark.parametrize("s", builtins(2), ids=lambda s: s.kind)
    def test_incremental_matches_scratch(self, s):
        path = generate("step", {"d": 2, "n_jumps": 25, "grid": 50, "T": 1.0}, seed=4)
        part = Partition.uniform(1.0, 50)
        A = s.allocations(discretize(path, part))
        for i in range(part.times.size - 1):
            t = part.times[i + 1]
            scratch = evaluate(s, t, stop_left(path, t))
            assert np.allclose(A[i], scratch, rtol=0, atol=1e-12), (i, A[i], scratch)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.lists(st.floats(0, 1), min_size=2, max_size=2),
           st.floats(0, 1), st.integers(0, 100))
    def test_convex_combination_affine(self, b, c, alpha, seed):
        b = np.array(b) / max(1.0, sum(b))
        c = np.array(c) / max(1.0, sum(c))
        kids = [MarketIndex(), Softmax()]
        g = discretize(generate("gbm", {"d": 2, "steps": 40, "sigma": 0.5}, seed), Partition.uniform(1.0, 40))
        mix = ConvexCombination(kids, alpha * b + (1 - alpha) * c).allocations(g)
        sep = alpha * ConvexCombination(kids, b).allocations(g) + (1 - alpha) * ConvexCombination(kids, c).allocations(g)
        assert np.allclose(mix, sep, rtol=0, atol=1e-14)

    def test_softmax_refinement_on_sampled_path(self):
        # left-Riemann sums of dx/x stabilise as the sampling ladder refines
        p = generate("gbm", {"d": 2, "sigma": 0.3, "steps": 2**16}, seed=9)
        ladder = sample_ladder(p.times, 8)
        finals = [Softmax().allocations(discretize(p, lv))[-1] for lv in ladder]
        gaps = [np.abs(a - b).max() for a, b in zip(finals, finals[1:])]
        assert gaps[-1] < 1e-3
        assert gaps[-1] < gaps[0]


class TestSpecs:
    def test_round_trip(self):
        for s in builtins(2):
            t = from_spec(s.to_spec())
            g = discretize(generate("gbm", {"d": 2, "steps": 30}, 1), Partition.uniform(1.0, 30))
            assert np.array_equal(s.allocations(g), t.allocations(g))

    def test_nested_laissez_faire_form(self):
        spec = {"kind": "laissez_faire", "b": [0.5, 0.5],
                "children": [{"kind": "single_stock", "params": {"i": 1}},
                             {"kind": "convex_combination", "params": {"strategies": [{"kind": "market_index"}], "b": [0.5]}}]}
        s = from_spec(spec)
        assert isinstance(s, LaissezFaire) and isinstance(s.children[1], ConvexCombination)

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind):
            from_spec({"kind": "moonshot"})
