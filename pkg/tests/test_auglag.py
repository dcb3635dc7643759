import numpy as np
import pytest

from alrank.auglag import ALState, al_value, combined_lambdas, dual_update
from alrank.gbdt import history_csv
from alrank.lambdas import LambdaPair


def _state(bounds, mu=10.0, scales=None):
    scales = scales if scales is not None else [1.0] * len(bounds)
    return ALState.create(bounds, mu, scales)


class TestALValue:
    def test_no_constraints(self):
        state = _state([])
        assert al_value(1.25, [], state) == 1.25

    def test_penalties_vanish_at_rest(self):
        state = _state([0.9])
        state.alpha = np.array([0.4])
        state.prev_alpha = np.array([0.4])
        assert al_value(2.0, [0.9], state) == 2.0

    def test_hand_evaluated_value(self):
        # 1.0 + 0.7*(0.95-0.9) - (0.7-0.2)^2/(2*10) = 1.0225
        state = _state([0.9], mu=10.0)
        state.alpha = np.array([0.7])
        state.prev_alpha = np.array([0.2])
        assert al_value(1.0, [0.95], state) == pytest.approx(1.0225, abs=1e-15)

    def test_length_mismatch(self):
        state = _state([0.9, 0.8])
        with pytest.raises(ValueError):
            al_value(1.0, [0.9], state)


class TestDualUpdate:
    def test_boundary_stays_zero(self):
        state = _state([0.9])
        assert dual_update(state, [0.9]).tolist() == [0.0]

    def test_clips_at_zero(self):
        state = _state([0.9], mu=10.0)
        state.alpha = np.array([0.5])
        # max(0, 10*(0.8-0.9) + 0.5) = max(0, -0.5) = 0
        assert dual_update(state, [0.8]).tolist() == [0.0]

    def test_direct_formula(self):
        state = _state([0.9], mu=10.0)
        state.alpha = np.array([0.2])
        # 10*(0.95-0.9) + 0.2 = 0.7
        assert dual_update(state, [0.95]).tolist() == pytest.approx([0.7])

    def test_prev_alpha_shifts(self):
        state = _state([0.9], mu=10.0)
        dual_update(state, [1.1])
        first = state.alpha.copy()
        dual_update(state, [1.1])
        assert state.prev_alpha.tolist() == first.tolist()
        assert len(state.history) == 2

    def test_nonnegative_always(self):
        rng = np.random.default_rng(53)
        state = _state([0.9, 0.7, 0.5], mu=10.0)
        for _ in range(200):
            dual_update(state, rng.uniform(0.0, 2.0, 3))
            assert np.all(state.alpha >= 0.0)

    def test_increases_while_violated(self):
        rng = np.random.default_rng(59)
        for _ in range(100):
            state = _state([0.9], mu=10.0)
            state.alpha = np.array([rng.uniform(0.0, 2.0)])
            before = state.alpha[0]
            cost = rng.uniform(0.9 + 1e-9, 2.0)
            after = dual_update(state, [cost])[0]
            assert after > before

    def test_fixed_point_at_zero(self):
        # satisfied constraint with small enough previous dual -> exactly 0
        state = _state([0.9], mu=10.0)
        state.alpha = np.array([0.3])
        cost = 0.8  # mu*(b - cost) = 1.0 >= alpha
        assert dual_update(state, [cost])[0] == 0.0


class TestCombinedLambdas:
    def test_zero_alpha_reduces_to_primal(self):
        state = _state([0.9])
        primal = LambdaPair(np.array([0.2, -0.2]), np.array([0.1, 0.1]))
        sub = LambdaPair(np.array([5.0, -5.0]), np.array([9.0, 9.0]))
        out = combined_lambdas(primal, [sub], state)
        assert np.array_equal(out.lam, primal.lam)
        assert np.array_equal(out.hess, primal.hess)

    def test_linear_combination(self):
        state = _state([0.9])
        state.alpha = np.array([1.0])
        primal = LambdaPair(np.array([0.2, -0.2]), np.zeros(2))
        sub = LambdaPair(np.array([-0.1, 0.1]), np.zeros(2))
        out = combined_lambdas(primal, [sub], state)
        assert out.lam.tolist() == pytest.approx([0.1, -0.1], abs=1e-15)

    def test_length_mismatch(self):
        state = _state([0.9, 0.8])
        primal = LambdaPair(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            combined_lambdas(primal, [primal], state)


class TestALStateCreate:
    def test_validation(self):
        with pytest.raises(ValueError):
            ALState.create([0.0], 10.0, [1.0])
        with pytest.raises(ValueError):
            ALState.create([0.9], 0.0, [1.0])
        with pytest.raises(ValueError):
            ALState.create([0.9], 10.0, [0.0])
        with pytest.raises(ValueError):
            ALState.create([0.9, 0.8], 10.0, [1.0])

    def test_feasible_dual_start(self):
        state = ALState.create([0.9, 0.5], 10.0, [2.0, 3.0])
        assert state.alpha.tolist() == [0.0, 0.0]
        assert state.n_constraints == 2


class TestHistoryCsv:
    def test_header_and_rows(self):
        rows = [
            {"iteration": 1, "alpha": (0.0, 0.5), "cost_pm": 1.5,
             "sub_costs": (0.95, 1.02)},
            {"iteration": 2, "alpha": (0.1, 0.6), "cost_pm": 1.4,
             "sub_costs": (0.93, 1.01)},
        ]
        text = history_csv(rows, n_subs=2, with_alpha=True)
        lines = text.strip().split("\n")
        assert lines[0] == "iteration,alpha_1,alpha_2,cost_pm,cost_1,cost_2"
        assert lines[1].startswith("1,0.0,0.5,1.5,")
        assert len(lines) == 3

    def test_unconstrained_header(self):
        rows = [{"iteration": 1, "alpha": (), "cost_pm": 1.5, "sub_costs": ()}]
        text = history_csv(rows, n_subs=0, with_alpha=False)
        assert text.splitlines()[0] == "iteration,cost_pm"
