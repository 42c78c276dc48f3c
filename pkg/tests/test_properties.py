import numpy as np
from hypothesis import given, settings, strategies as st

from fkgen import FiniteStateModel, PathFunctional, run_filter
from fkgen import oracle
from fkgen.particles import categorical_draw
from fkgen.smoother import forward_smooth, particle_path_measure, smoothed_estimate
from fkgen.stats import khintchine_constant, variance_growth_fit


@st.composite
def finite_models(draw, max_states=3, max_horizon=3):
    d = draw(st.integers(1, max_states))
    n = draw(st.integers(0, max_horizon))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    trans = rng.dirichlet(np.ones(d), size=(max(n, 1), d)) * 0.9 + 0.1 / d
    pots = rng.uniform(0.05, 1.0, size=(n + 1, d))
    return FiniteStateModel(rng.dirichlet(np.ones(d)), trans[:n] if n else trans[0], pots,
                            horizon=n, values=rng.normal(size=d))


def _functional(model, pairwise):
    v = model.values
    n = model.horizon
    if pairwise:
        return PathFunctional.pairwise(lambda x: v[x], [lambda a, b: v[a] * v[b] - v[b]] * n)
    return PathFunctional.homogeneous(lambda x: v[x] ** 2, n)


class TestOracleProperties:
    @settings(max_examples=40, deadline=None)
    @given(finite_models(), st.booleans())
    def test_recursion_equals_enumeration(self, model, pairwise):
        F = _functional(model, pairwise)
        assert np.isclose(oracle.exact_smoothed_additive(model, F),
                          oracle.exact_expectation(model, F), rtol=1e-12, atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(finite_models(), st.booleans())
    def test_semigroup_identity(self, model, pairwise):
        assert max(oracle.semigroup_identity_gaps(model, _functional(model, pairwise))) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(finite_models(max_horizon=4))
    def test_backward_decomposition(self, model):
        assert oracle.backward_decomposition_gap(model) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(finite_models())
    def test_clt_variance_nonnegative(self, model):
        F = _functional(model, False)
        assert oracle.clt_variance(model, F) >= -1e-12
        assert oracle.clt_variance(model, F, estimator="genealogical") >= -1e-12


class TestParticleProperties:
    @settings(max_examples=30, deadline=None)
    @given(finite_models(max_horizon=2), st.integers(1, 3), st.integers(0, 10**6),
           st.booleans())
    def test_forward_recursion_equals_path_enumeration(self, model, N, seed, pairwise):
        history = run_filter(model, N, random_state=seed)
        F = _functional(model, pairwise)
        paths, masses = particle_path_measure(history, model)
        states = [history[p].positions[paths[:, p]] for p in range(model.horizon + 1)]
        assert np.isclose(smoothed_estimate(forward_smooth(history, model, F)),
                          masses @ F.evaluate(states), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(masses.sum(), 1.0)

    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=20).filter(lambda w: sum(w) > 0),
           st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=1, max_size=20))
    def test_categorical_draw_hits_positive_weight(self, weights, u):
        w = np.array(weights)
        idx = categorical_draw(w, np.array(u))
        assert np.all(w[idx] > 0)


class TestStatsProperties:
    @given(st.floats(0.5, 3.0), st.floats(0.1, 10.0))
    def test_growth_fit_planted(self, power, c):
        n = np.array([4.0, 9.0, 19.0, 39.0])
        assert abs(variance_growth_fit(n, c * n**power).exponent - power) < 1e-9

    @given(st.integers(1, 9))
    def test_khintchine_monotone(self, r):
        assert khintchine_constant(r) <= khintchine_constant(r + 1)
