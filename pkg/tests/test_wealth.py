import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathwealth.errors import OmegaViolation, Ruin, UnknownKind
from pathwealth.paths import CadlagPath, OmegaConstraint, Partition, RefinementLadder, dyadic_ladder
from pathwealth.scenarios import generate
from pathwealth.strategies import (
    Cash,
    ExponentialAverage,
    MarketIndex,
    PortfolioOfPortfolio,
    SimpleAverage,
    SingleStock,
    Softmax,
    Strategy,
)
from pathwealth.wealth import (
    closed_form_wealth,
    exp_weighted_integral,
    implementation,
    ito_decomposition,
    time_integral,
    verify_self_financing,
    wealth_discrete,
    wealth_limit,
)


class Leveraged(Strategy):
    kind = "leveraged"

    def allocations(self, grid):
        return np.full((grid.steps, grid.dim), 3.0)


def jump_path(lo=100.0, hi=110.0, t=0.5):
    return CadlagPath([0.0, t, 1.0], [[lo], [hi], [hi]])


class TestDiscrete:
    def test_cash(self):
        p = generate("gbm", {"d": 2, "steps": 100}, 1)
        c = wealth_discrete(Cash(), p, Partition(p.times), xi=2.5)
        assert np.all(c.values == 2.5)

    def test_single_stock_jump(self):
        c = wealth_discrete(SingleStock(1), jump_path(), Partition([0.0, 0.5, 1.0]))
        assert c.final == pytest.approx(1.1, rel=1e-15)

    def test_large_drop_without_leverage(self):
        c = wealth_discrete(SingleStock(1), jump_path(100.0, 40.0), Partition([0.0, 0.5, 1.0]))
        assert c.final == pytest.approx(0.4, rel=1e-15)

    def test_ruin_reports_time(self):
        with pytest.raises(Ruin) as e:
            wealth_discrete(Leveraged(), jump_path(100.0, 60.0), Partition([0.0, 0.5, 1.0]))
        assert e.value.time == 0.5 and e.value.factor <= 0

    def test_long_products_do_not_underflow(self):
        p = generate("adversarial_zigzag", {"steps": 200_000, "amplitude": 0.01}, 0)
        c = wealth_discrete(SimpleAverage(1, 0.5), p, Partition(p.times))
        assert np.isfinite(c.log_values).all()

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 1000.0), st.integers(0, 1000))
    def test_initial_value_scaling(self, xi, seed):
        p = generate("jump_diffusion", {"d": 2, "steps": 50}, seed)
        part = Partition(p.times)
        for s in (Softmax(), PortfolioOfPortfolio(MarketIndex(), 0.5)):
            a = wealth_discrete(s, p, part, xi).values
            b = wealth_discrete(s, p, part, 1.0).values
            assert np.allclose(a, xi * b, rtol=1e-15, atol=0)


class TestLimit:
    def test_market_index_level_exact_on_step_path(self):
        p = generate("step", {"d": 3, "n_jumps": 30}, 2)
        c = wealth_limit(MarketIndex(), p)
        assert c.final == pytest.approx(p.values[-1].sum() / p.values[0].sum(), rel=1e-13)
        assert max(c.deviations) <= 1e-13 and c.converged

    def test_simple_average_oracle(self):
        p = generate("gbm", {"d": 1, "steps": 4096, "sigma": 0.3}, 3)
        c = wealth_limit(SimpleAverage(1, 0.6), p)
        assert c.final == pytest.approx(closed_form_wealth("simple_average", {"i": 1, "T": 0.6}, p, 1.0), rel=1e-3)

    def test_two_ladders_agree(self):
        t = np.linspace(0, 1, 6)
        v = np.array([[100, 80], [120, 90], [95, 85], [130, 70], [110, 95], [105, 100]], float)
        p = CadlagPath(t, v, "linear")
        a = wealth_limit(Softmax(), p, dyadic_ladder(1.0, base_cells=20, max_levels=8))
        b = wealth_limit(Softmax(), p, dyadic_ladder(1.0, base_cells=30, max_levels=8))
        tol = abs(a.final - b.final) / a.final
        assert tol <= 2 * max(a.deviations[-1], b.deviations[-1])

    def test_non_convergent_flag(self):
        p = CadlagPath([0.0, 1.0], [[1.0], [2.0]], "linear")
        ladder = RefinementLadder((Partition.uniform(1.0, 2), Partition.uniform(1.0, 4)))
        c = wealth_limit(SimpleAverage(1, 1.0), p, ladder)
        assert c.non_convergent
        assert "level_deviation" in c.to_csv().splitlines()[0]


class TestClosedForms:
    def test_single_stock_doubling(self):
        p = CadlagPath([0.0, 0.5], [[10.0], [20.0]], "linear")
        assert closed_form_wealth("single_stock", {"i": 1}, p, 0.5) == 2.0

    def test_market_index(self):
        p = CadlagPath([0.0, 1.0], [[100.0, 100.0], [110.0, 90.0]])
        v = closed_form_wealth("market_index", {}, p, 1.0)
        assert v == 1.0 and v <= 1.1

    def test_exponential_constant(self):
        p = CadlagPath.constant_path([3.0])
        assert np.allclose(closed_form_wealth("exponential_average", {"i": 1, "lam": 2.0}, p, [0.0, 1.0, 5.0]), 1.0)

    def test_unknown(self):
        with pytest.raises(UnknownKind):
            closed_form_wealth("softmax", {}, CadlagPath.constant_path([1.0]), 1.0)

    def test_integrals_against_quadrature(self):
        from scipy.integrate import quad

        p = CadlagPath([0.0, 0.3, 1.0, 2.0], [[1.0], [3.0], [2.0], [2.5]], "linear")
        f = lambda s: float(p(s)[0])
        assert time_integral(p, 0, 0.1, 1.7) == pytest.approx(quad(f, 0.1, 1.7, points=[0.3, 1.0])[0], rel=1e-12)
        for lam in (1e-4, 0.5, 20.0):
            ref = lam * quad(lambda s: f(s) * np.exp(-lam * s), 0, 1.7, points=[0.3, 1.0], epsabs=0, epsrel=1e-13)[0]
            assert exp_weighted_integral(p, 0, lam, 1.7) == pytest.approx(ref, rel=1e-11)


class TestImplementation:
    def test_cash(self):
        p = generate("gbm", {"d": 2, "steps": 20}, 0)
        c = wealth_discrete(Cash(), p, Partition(p.times), 3.0)
        impl = implementation(Cash(), c, p)
        assert np.all(impl.phi == 0) and np.all(impl.psi == 3.0)

    def test_single_stock_shares(self):
        p = generate("gbm", {"d": 2, "steps": 20, "x0": 100.0}, 0)
        impl = implementation(SingleStock(1), wealth_discrete(SingleStock(1), p, Partition(p.times)), p)
        assert impl.phi[0, 0] == pytest.approx(0.01) and impl.psi[0] == 0.0

    def test_market_index_buy_and_hold(self):
        p = generate("jump_diffusion", {"d": 3, "steps": 200}, 5)
        impl = implementation(MarketIndex(), wealth_discrete(MarketIndex(), p, Partition(p.times)), p)
        assert np.allclose(impl.phi, 1.0 / p.values[0].sum(), rtol=1e-12)
        assert np.allclose(impl.psi, 0.0, atol=1e-15)
        assert impl.value_residual <= 1e-12 and impl.rebalancing_residual <= 1e-12


class TestSelfFinancing:
    def test_cash_zero_residuals(self):
        p = generate("gbm", {"d": 2, "steps": 50}, 0)
        r = verify_self_financing(Cash(), p, Partition(p.times))
        assert r.rebalancing_residual == 0 and r.ppde_residual == 0 and r.horizontal_residual == 0

    def test_market_index_step_path(self):
        p = generate("step", {"d": 2, "n_jumps": 20}, 1)
        r = verify_self_financing(MarketIndex(), p, Partition(p.times))
        assert r.rebalancing_residual <= 1e-12 and r.ok()

    def test_softmax_ppde_residual_scales(self):
        p = generate("gbm", {"d": 2, "steps": 512, "sigma": 0.5}, 2)
        out = []
        for eps in (1e-3, 1e-5):
            r = verify_self_financing(Softmax(), p, Partition(p.times), eps=eps, probes=20)
            out.append(r.ppde_residual)
            assert r.ok()
            # the bump enters linearly, so the residual is bounded by eps and mesh
            assert r.ppde_residual <= eps + r.mesh


class TestIto:
    def test_cash(self):
        d = ito_decomposition(Cash(), generate("gbm", {"d": 2, "steps": 64}, 0))
        assert np.all(d.drift == 0) and np.all(d.qv == 0) and np.all(d.jumps == 0)

    def test_single_jump_exact(self):
        r = 0.25
        p = CadlagPath([0.0, 0.5, 1.0], [[100.0], [100.0 * (1 + r)], [100.0 * (1 + r)]])
        d = ito_decomposition(SingleStock(1), p)
        assert d.jumps[-1] == pytest.approx(np.log1p(r) - r + r * r / 2, rel=1e-14)
        assert d.residual <= 1e-14 and d.bound_holds

    def test_continuous_jump_series_decays(self):
        p = generate("gbm", {"d": 1, "steps": 2**16, "sigma": 0.4}, 4)
        vals = []
        for stride in (256, 64, 16, 4, 1):
            part = Partition(p.times[::stride])
            vals.append(abs(ito_decomposition(Softmax(), p, RefinementLadder((part,))).jumps[-1]))
        # the series is a sum of third-order terms, O(mesh^(1/2)) or better
        assert vals[-1] < vals[0] / 10 and vals[-1] < 1e-5

    def test_omega_violation(self):
        p = CadlagPath([0.0, 0.5, 1.0], [[100.0], [40.0], [40.0]])
        with pytest.raises(OmegaViolation):
            ito_decomposition(SingleStock(1), p, omega=OmegaConstraint(0.5, 0.5))
