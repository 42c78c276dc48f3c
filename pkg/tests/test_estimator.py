import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fkgen import BackwardSmoother, ModelContractError, PathFunctional
from fkgen.fixtures import load_model
from fkgen.smoother import forward_smooth, smoothed_estimate
from fkgen.particles import genealogical_estimate, run_filter


@pytest.fixture
def F(three_state):
    v = three_state.values
    return PathFunctional.homogeneous(lambda x: v[x], three_state.horizon)


class TestBackwardSmoother:
    def test_params(self):
        est = BackwardSmoother(n_particles=7, epsilon=0.5)
        assert est.get_params() == {"n_particles": 7, "epsilon": 0.5, "compress": False,
                                    "random_state": None}
        est.set_params(compress=True)
        assert clone(est).compress is True

    def test_not_fitted(self, F):
        with pytest.raises(NotFittedError):
            BackwardSmoother().predict(F)

    def test_fit_matches_functional_api(self, three_state, F):
        est = BackwardSmoother(n_particles=25, random_state=3).fit(three_state, F)
        history = run_filter(three_state, 25, random_state=3)
        expected = smoothed_estimate(forward_smooth(history, three_state, F))
        assert est.trace_[-1] == pytest.approx(expected, abs=1e-14)
        assert est.predict(F) == pytest.approx(expected, abs=1e-13)
        assert est.genealogical(F) == genealogical_estimate(history, F)
        assert est.normalizer_ == pytest.approx(history[-1].normalizer)
        np.testing.assert_allclose(est.transform(F), est.state_.values)

    def test_predict_many(self, three_state, F):
        est = BackwardSmoother(n_particles=10, random_state=0).fit(three_state)
        out = est.predict([F, F])
        assert out.shape == (2,) and out[0] == out[1]

    def test_trace_truncations(self, three_state, F):
        est = BackwardSmoother(n_particles=10, random_state=0).fit(three_state, F)
        assert len(est.trace_) == three_state.horizon + 1

    def test_sample_paths(self, three_state):
        est = BackwardSmoother(n_particles=10, random_state=0).fit(three_state)
        assert est.sample_paths(5, random_state=1).shape == (5, three_state.horizon + 1)

    def test_validation(self, three_state, F):
        with pytest.raises(ValueError):
            BackwardSmoother(n_particles=0).fit(three_state)
        with pytest.raises(ValueError):
            BackwardSmoother(epsilon="often").fit(three_state)
        with pytest.raises(ModelContractError):
            BackwardSmoother().fit(load_model("corrupted_row_sum"))
        with pytest.raises(TypeError):
            BackwardSmoother().fit(object())
        with pytest.raises(TypeError):
            BackwardSmoother(random_state=0).fit(
                three_state, PathFunctional.general(lambda p: p[0], three_state.horizon))
        est = BackwardSmoother(n_particles=5, random_state=0).fit(three_state)
        with pytest.raises(ValueError):
            est.predict(PathFunctional.homogeneous(lambda x: x, 2))
