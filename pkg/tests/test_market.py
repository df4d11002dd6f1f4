"""Forward clearing: closed form, QP oracle, and bilateral realization."""

import numpy as np
import pytest

from p2pmarket.errors import EmptyMarketError, UnbalancedError
from p2pmarket.graph import Role, build_bipartite
from p2pmarket.market import (
    LOWER_BOUND,
    SIGN,
    UPPER_BOUND,
    ClearingResult,
    CostParams,
    PowerBounds,
    clear_market,
    clearing_price,
    optimal_trade,
    qp_oracle,
    realize_bilateral,
)

S, B = Role.SELLER, Role.BUYER


def two_prosumer():
    params = [CostParams(1, 20), CostParams(1, 24)]
    bounds = [PowerBounds.for_seller(2), PowerBounds.for_buyer(-3)]
    return params, bounds, [S, B]


class TestClearingPrice:
    def test_common_intercept(self):
        params = [CostParams(a, 21.0) for a in (0.5, 1.0, 3.0)]
        assert clearing_price(params) == pytest.approx(21.0)

    def test_equal_curvature_mean(self):
        assert clearing_price([CostParams(1, 20), CostParams(1, 24)]) == pytest.approx(22.0)

    def test_hand_evaluated(self):
        # (20/1 + 21/2 + 24/1) / (1 + 1/2 + 1) = 54.5 / 2.5
        params = [CostParams(1, 20), CostParams(2, 21), CostParams(1, 24)]
        assert clearing_price(params) == pytest.approx(21.8)

    def test_empty(self):
        with pytest.raises(EmptyMarketError):
            clearing_price([])

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            CostParams(0, 20)
        with pytest.raises(ValueError):
            CostParams(1, -1)


class TestOptimalTrade:
    def test_marginal_prosumer(self):
        assert optimal_trade(CostParams(2, 21), 21.0) == 0.0

    def test_seller_side(self):
        assert optimal_trade(CostParams(1, 20), 22.0) == pytest.approx(1.0)

    def test_buyer_side(self):
        assert optimal_trade(CostParams(1, 24), 22.0) == pytest.approx(-1.0)


class TestClearMarket:
    def test_two_prosumer_feasible(self):
        result = clear_market(*two_prosumer())
        assert result.lambda_star == pytest.approx(22.0)
        assert result.trades[0] == pytest.approx(1.0)
        assert result.trades[1] == pytest.approx(-1.0)
        assert result.feasible
        assert result.violations == []

    def test_binding_cap_reported_not_repaired(self):
        params, _, roles = two_prosumer()
        bounds = [PowerBounds.for_seller(0.5), PowerBounds.for_buyer(-3)]
        result = clear_market(params, bounds, roles)
        assert not result.feasible
        assert result.violations == [(0, UPPER_BOUND)]
        # trade is not clipped
        assert result.trades[0] == pytest.approx(1.0)

    def test_single_role_class_cannot_clear(self):
        params = [CostParams(1, 20), CostParams(1, 21)]
        bounds = [PowerBounds.for_seller(2), PowerBounds.for_seller(2)]
        result = clear_market(params, bounds, [S, S])
        assert result.lambda_star == pytest.approx(20.5)
        assert not result.feasible
        assert (1, SIGN) in result.violations

    def test_zero_trade_is_sign_violation(self):
        params = [CostParams(1, 21), CostParams(1, 21)]
        bounds = [PowerBounds.for_seller(2), PowerBounds.for_buyer(-2)]
        result = clear_market(params, bounds, [S, B])
        assert not result.feasible
        assert set(result.violations) == {(0, SIGN), (1, SIGN)}

    def test_buyer_floor_violation(self):
        params = [CostParams(1, 20), CostParams(1, 24)]
        bounds = [PowerBounds.for_seller(2), PowerBounds.for_buyer(-0.5)]
        result = clear_market(params, bounds, [S, B])
        assert result.violations == [(1, LOWER_BOUND)]

    def test_length_mismatch(self):
        params, bounds, roles = two_prosumer()
        with pytest.raises(ValueError):
            clear_market(params, bounds[:1], roles)


class TestQpOracle:
    def test_interior_matches_closed_form(self):
        params = [CostParams(1, 20), CostParams(2, 21), CostParams(1, 24)]
        bounds = [PowerBounds.for_seller(10), PowerBounds.for_seller(10),
                  PowerBounds.for_buyer(-10)]
        roles = [S, S, B]
        oracle = qp_oracle(params, bounds, roles)
        assert oracle.lambda_star == pytest.approx(21.8, abs=1e-6)
        analytic = clear_market(params, bounds, roles)
        for i in analytic.trades:
            assert oracle.trades[i] == pytest.approx(analytic.trades[i], abs=1e-6)

    def test_all_intercepts_equal_zero_trades(self):
        params = [CostParams(1, 21), CostParams(2, 21), CostParams(1, 21)]
        bounds = [PowerBounds.for_seller(2), PowerBounds.for_buyer(-2),
                  PowerBounds.for_buyer(-2)]
        oracle = qp_oracle(params, bounds, [S, B, B])
        for t in oracle.trades.values():
            assert t == pytest.approx(0.0, abs=1e-7)

    def test_binding_cap_clips(self):
        # hand solution: balance forces p = (x, -x); objective 2x^2 - 4x is
        # minimized at x=1, the cap 0.5 binds, buyer stays interior so the
        # multiplier equals the buyer's marginal cost 2*1*(-0.5) + 24 = 23
        params, _, roles = two_prosumer()
        bounds = [PowerBounds.for_seller(0.5), PowerBounds.for_buyer(-3)]
        oracle = qp_oracle(params, bounds, roles)
        assert oracle.trades[0] == pytest.approx(0.5, abs=1e-7)
        assert oracle.trades[1] == pytest.approx(-0.5, abs=1e-7)
        assert oracle.lambda_star == pytest.approx(23.0, abs=1e-6)
        # differs from the interior-only analytic solution
        analytic = clear_market(params, bounds, roles)
        assert abs(analytic.trades[0] - oracle.trades[0]) > 0.4

    def test_balance_always_holds(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n_s, n_b = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            params = [CostParams(rng.uniform(0.5, 3), rng.uniform(15, 25))
                      for _ in range(n_s + n_b)]
            bounds = [PowerBounds.for_seller(rng.uniform(0.5, 3)) for _ in range(n_s)]
            bounds += [PowerBounds.for_buyer(-rng.uniform(0.5, 3)) for _ in range(n_b)]
            roles = [S] * n_s + [B] * n_b
            oracle = qp_oracle(params, bounds, roles)
            assert abs(sum(oracle.trades.values())) < 1e-9


class TestRealizeBilateral:
    def test_forced_single_pair(self):
        g = build_bipartite([0], [1])
        flows = realize_bilateral({0: 1.0, 1: -1.0}, g)
        assert flows[(0, 1)] == pytest.approx(1.0)
        assert flows[(1, 0)] == pytest.approx(-1.0)

    def test_proportional_split_equal_buyers(self):
        g = build_bipartite([0], [1, 2])
        flows = realize_bilateral({0: 2.0, 1: -1.0, 2: -1.0}, g)
        assert flows[(0, 1)] == pytest.approx(1.0)
        assert flows[(0, 2)] == pytest.approx(1.0)

    def test_row_sums_reproduce_trades(self):
        g = build_bipartite([0, 1], [2, 3, 4])
        trades = {0: 1.5, 1: 0.5, 2: -0.6, 3: -0.9, 4: -0.5}
        flows = realize_bilateral(trades, g)
        for i in range(5):
            row = sum(v for (a, _), v in flows.items() if a == i)
            assert row == pytest.approx(trades[i], abs=1e-12)
        # antisymmetry
        for (i, j), v in flows.items():
            assert flows[(j, i)] == pytest.approx(-v, abs=0)

    def test_unbalanced_rejected(self):
        g = build_bipartite([0], [1])
        with pytest.raises(UnbalancedError):
            realize_bilateral({0: 1.0, 1: -0.5}, g)

    def test_all_zero(self):
        g = build_bipartite([0], [1])
        assert realize_bilateral({0: 0.0, 1: 0.0}, g) == {}


class TestInvariants:
    def test_balance_identity_10k_random_sets(self):
        # algebraic consequence of the closed form; the residual is float
        # roundoff only
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(10_000):
            n = int(rng.integers(1, 12))
            params = [CostParams(rng.uniform(0.05, 10), rng.uniform(1, 100))
                      for _ in range(n)]
            lam = clearing_price(params)
            total = sum(optimal_trade(p, lam) for p in params)
            worst = max(worst, abs(total))
        assert worst < 1e-9

    def test_oracle_equivalence_when_strictly_feasible(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 25:
            n_s, n_b = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            params = [CostParams(rng.uniform(0.5, 2), rng.uniform(19, 21)) for _ in range(n_s)]
            params += [CostParams(rng.uniform(0.5, 2), rng.uniform(22, 24)) for _ in range(n_b)]
            bounds = [PowerBounds.for_seller(rng.uniform(1, 6)) for _ in range(n_s)]
            bounds += [PowerBounds.for_buyer(-rng.uniform(1, 6)) for _ in range(n_b)]
            roles = [S] * n_s + [B] * n_b
            analytic = clear_market(params, bounds, roles)
            if not analytic.feasible:
                continue
            checked += 1
            oracle = qp_oracle(params, bounds, roles)
            assert oracle.lambda_star == pytest.approx(analytic.lambda_star, abs=1e-6)
            for i in analytic.trades:
                assert oracle.trades[i] == pytest.approx(analytic.trades[i], abs=1e-6)

    def test_monotonicity_in_intercept(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            params = [CostParams(rng.uniform(0.2, 4), rng.uniform(5, 40)) for _ in range(n)]
            base = clearing_price(params)
            j = int(rng.integers(n))
            bumped = list(params)
            bumped[j] = CostParams(params[j].a, params[j].b + 0.5)
            assert clearing_price(bumped) > base

    def test_scale_covariance(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 8))
            params = [CostParams(rng.uniform(0.2, 4), rng.uniform(5, 40)) for _ in range(n)]
            c = rng.uniform(0.1, 10)
            scaled = [CostParams(c * p.a, c * p.b) for p in params]
            assert clearing_price(scaled) == pytest.approx(c * clearing_price(params), rel=1e-12)

    def test_feasible_result_balances(self):
        result = clear_market(*two_prosumer())
        assert isinstance(result, ClearingResult)
        assert abs(sum(result.trades.values())) < 1e-9
