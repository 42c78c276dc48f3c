import numpy as np
import pytest

from fkgen import (FiniteStateModel, PathFunctional, iid_toy, potential_eval,
                   transition_density, validate_model)
from fkgen.exceptions import EpochRangeError, ModelContractError, ModelEvaluationError
from fkgen.fixtures import load_model
from fkgen.model import GENERAL, PAIRWISE, TERMINAL

from .models import GaussianAR


class TestFiniteStateModel:
    def test_shared_matrices_need_horizon(self):
        with pytest.raises(ModelContractError):
            FiniteStateModel([0.5, 0.5], np.full((2, 2), 0.5), [1.0, 1.0])

    def test_stacks_infer_horizon(self):
        trans = np.full((3, 2, 2), 0.5)
        model = FiniteStateModel([0.5, 0.5], trans, [1.0, 0.5])
        assert model.horizon == 3
        assert not model.time_homogeneous

    def test_stack_disagreement(self):
        with pytest.raises(ModelContractError):
            FiniteStateModel([0.5, 0.5], np.full((3, 2, 2), 0.5), np.ones((3, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ModelContractError):
            FiniteStateModel([0.5, 0.5], np.full((3, 3), 1 / 3), [1.0, 1.0], horizon=2)

    def test_epoch_range(self, three_state):
        with pytest.raises(EpochRangeError):
            three_state.transition_matrix(0)
        with pytest.raises(EpochRangeError):
            potential_eval(three_state, 5, np.array([0]))
        with pytest.raises(EpochRangeError):
            transition_density(three_state, 0, np.array([0]), np.array([0]))

    def test_with_horizon_truncates_stack(self):
        trans = np.stack([np.eye(2) * 0.5 + 0.25] * 4)
        model = FiniteStateModel([0.5, 0.5], trans, [1.0, 0.5])
        short = model.with_horizon(2)
        assert short.horizon == 2
        np.testing.assert_array_equal(short.transition_matrix(2), trans[1])
        with pytest.raises(EpochRangeError):
            model.with_horizon(5)

    def test_samplers_follow_laws(self, three_state):
        rng = np.random.default_rng(0)
        x = three_state.sample_initial(200_000, rng)
        np.testing.assert_allclose(np.bincount(x, minlength=3) / x.size, three_state.initial,
                                   atol=5e-3)
        y = three_state.sample_mutation(1, np.zeros(200_000, dtype=int), rng)
        np.testing.assert_allclose(np.bincount(y, minlength=3) / y.size,
                                   three_state.transition_matrix(1)[0], atol=5e-3)

    def test_iid_toy(self):
        toy = iid_toy(3)
        np.testing.assert_array_equal(toy.transition_matrix(2), np.full((2, 2), 0.5))
        np.testing.assert_array_equal(toy.potential_vector(3), [1.0, 1.0])


class TestValidation:
    def test_fixture_passes(self, three_state):
        assert validate_model(three_state).passed

    def test_corrupted_row_sum(self):
        report = validate_model(load_model("corrupted_row_sum"))
        assert not report.passed
        assert any(v.kind == "row sum" for v in report.violations)

    def test_potential_out_of_range(self):
        model = FiniteStateModel([0.5, 0.5], np.full((2, 2), 0.5), [1.0, 1.5], horizon=1)
        kinds = {v.kind for v in validate_model(model).violations}
        assert "G" in kinds

    def test_zero_transition_breaks_positivity(self):
        model = FiniteStateModel([0.5, 0.5], [[1.0, 0.0], [0.5, 0.5]], [1.0, 1.0], horizon=1)
        assert any(v.kind == "H" for v in validate_model(model).violations)
        with pytest.raises(ModelContractError):
            transition_density(model, 1, np.array([0]), np.array([1]))

    def test_continuous_model_probe(self):
        assert validate_model(GaussianAR(horizon=3), probe_count=50).passed

    def test_raising_callback_is_wrapped(self):
        class Broken(GaussianAR):
            def potential(self, n, x):
                raise RuntimeError("boom")

        with pytest.raises(ModelEvaluationError) as info:
            validate_model(Broken(horizon=2))
        assert info.value.epoch == 0


class TestPathFunctional:
    def test_kinds(self):
        f = lambda x: np.asarray(x, dtype=float)  # noqa: E731
        assert PathFunctional.homogeneous(f, 3).kind == TERMINAL
        assert PathFunctional.pairwise(f, [lambda a, b: a * b] * 2).kind == PAIRWISE
        assert PathFunctional.general(lambda p: p[0], 2).kind == GENERAL
        with pytest.raises(ValueError):
            PathFunctional("other")
        with pytest.raises(ValueError):
            PathFunctional.additive([])

    def test_evaluate_and_scale(self):
        f = lambda x: np.asarray(x, dtype=float)  # noqa: E731
        F = PathFunctional.homogeneous(f, 2, normalized=True)
        path = [np.array([1, 0]), np.array([2, 1]), np.array([3, 1])]
        np.testing.assert_allclose(F.evaluate(path), [2.0, 2 / 3])
        np.testing.assert_allclose(F.evaluate(path, apply_scale=False), [6.0, 2.0])
        with pytest.raises(ValueError):
            F.evaluate(path[:2])

    def test_pairwise_increment(self):
        F = PathFunctional.pairwise(lambda x: 0 * x, [lambda a, b: b - a] * 2)
        path = [np.array([0]), np.array([2]), np.array([5])]
        assert F.evaluate(path)[0] == 5
        assert F.increment(2, np.array([1]), np.array([4]))[0] == 3

    def test_truncated(self):
        F = PathFunctional.homogeneous(lambda x: x, 4, normalized=True)
        T = F.truncated(2)
        assert T.horizon == 2 and T.normalized
        with pytest.raises(TypeError):
            PathFunctional.general(lambda p: p[0], 2).truncated(1)

    def test_oscillation(self, three_state):
        v = three_state.values
        assert PathFunctional.homogeneous(lambda x: v[x], 4, osc_bound=1).check_oscillation(
            three_state)
        assert not PathFunctional.homogeneous(lambda x: 3 * v[x], 4,
                                              osc_bound=1).check_oscillation(three_state)
