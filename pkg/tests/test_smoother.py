import numpy as np
import pytest

from fkgen import (ForwardSmoother, PathFunctional, SmootherState, backward_matrix,
                   forward_smooth, forward_update, init_smoother, run_filter,
                   sample_backward_path, smoothed_estimate, smoothed_estimate_batch)
from fkgen.exceptions import EnumerationCapError, HistoryError
from fkgen.smoother import particle_path_measure, sample_backward_paths

from .models import GaussianAR


def _brute_backward(prev, cur, model):
    N = prev.size
    W = np.empty((N, N))
    for j in range(N):
        for i in range(N):
            W[j, i] = (model.potential(cur.epoch - 1, prev.positions[[i]])[0]
                       * model.transition_density(cur.epoch, prev.positions[[i]],
                                                  cur.positions[[j]])[0])
    return W / W.sum(axis=1, keepdims=True)


@pytest.fixture
def history(three_state):
    return run_filter(three_state, 12, random_state=21)


@pytest.fixture
def funcs(three_state):
    v = three_state.values
    n = three_state.horizon
    return {
        "terminal": PathFunctional.homogeneous(lambda x: v[x], n),
        "pairwise": PathFunctional.pairwise(lambda x: v[x], [lambda a, b: (v[b] - v[a]) ** 2] * n),
    }


class TestBackwardMatrix:
    @pytest.mark.parametrize("compress", [False, True])
    @pytest.mark.parametrize("log_space", [False, True])
    def test_matches_brute_force(self, history, three_state, compress, log_space):
        for n in range(1, history.horizon + 1):
            W = backward_matrix(history[n - 1], history[n], three_state, compress, log_space)
            np.testing.assert_allclose(W.dense(), _brute_backward(history[n - 1], history[n],
                                                                  three_state),
                                       rtol=0, atol=1e-14)

    def test_rows_stochastic(self, history, three_state):
        W = backward_matrix(history[0], history[1], three_state).dense()
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-14)

    def test_non_consecutive(self, history, three_state):
        with pytest.raises(HistoryError):
            backward_matrix(history[0], history[2], three_state)

    def test_log_space_fallback_on_underflow(self):
        class Tiny(GaussianAR):
            def transition_density(self, n, x, y):
                return super().transition_density(n, x, y) * 1e-300

            def log_transition_density(self, n, x, y):
                return np.log(super().transition_density(n, x, y)) + np.log(1e-300)

        plain, tiny = GaussianAR(horizon=2), Tiny(horizon=2)
        h = run_filter(plain, 10, random_state=0)
        np.testing.assert_allclose(backward_matrix(h[0], h[1], tiny).dense(),
                                   backward_matrix(h[0], h[1], plain).dense(), atol=1e-12)


class TestForwardRecursion:
    @pytest.mark.parametrize("kind", ["terminal", "pairwise"])
    def test_matches_enumeration(self, history, three_state, funcs, kind):
        F = funcs[kind]
        small = run_filter(three_state.with_horizon(3), 4, random_state=8)
        G = PathFunctional(F.kind, F.terms[:4])
        paths, masses = particle_path_measure(small, three_state)
        states = [small[p].positions[paths[:, p]] for p in range(4)]
        state = forward_smooth(small, three_state, G)
        assert smoothed_estimate(state) == pytest.approx(float(masses @ G.evaluate(states)),
                                                         abs=1e-13)

    @pytest.mark.parametrize("kind", ["terminal", "pairwise"])
    def test_batch_equals_online(self, history, three_state, funcs, kind):
        F = funcs[kind]
        for compress in (False, True):
            online = smoothed_estimate(forward_smooth(history, three_state, F, compress))
            batch = smoothed_estimate_batch(history, three_state, F, compress)
            assert online == pytest.approx(batch, abs=1e-13)

    def test_compress_agrees(self, history, three_state, funcs):
        a = forward_smooth(history, three_state, funcs["pairwise"], compress=False)
        b = forward_smooth(history, three_state, funcs["pairwise"], compress=True)
        np.testing.assert_allclose(a.values, b.values, atol=1e-13)

    def test_general_functional_enumerated(self, three_state):
        small = run_filter(three_state.with_horizon(2), 3, random_state=1)
        v = three_state.values
        F = PathFunctional.general(lambda path: v[path[0]] * v[path[2]], 2)
        paths, masses = particle_path_measure(small, three_state)
        expected = sum(m * v[small[0].positions[p[0]]] * v[small[2].positions[p[2]]]
                       for p, m in zip(paths, masses))
        assert smoothed_estimate_batch(small, three_state, F) == pytest.approx(expected, abs=1e-14)
        with pytest.raises(TypeError):
            ForwardSmoother(three_state, F)

    def test_enumeration_cap(self, history, three_state):
        with pytest.raises(EnumerationCapError):
            particle_path_measure(history, three_state, cap=100)

    def test_constant_functional(self, history, three_state):
        F = PathFunctional.homogeneous(lambda x: np.ones(len(x)), history.horizon,
                                       normalized=True)
        assert smoothed_estimate(forward_smooth(history, three_state, F)) == pytest.approx(1.0)

    def test_horizon_zero_is_filter(self, three_state):
        h = run_filter(three_state.with_horizon(0), 9, random_state=3)
        v = three_state.values
        F = PathFunctional.homogeneous(lambda x: v[x], 0)
        assert smoothed_estimate(forward_smooth(h, three_state, F)) == pytest.approx(
            v[h[0].positions].mean())

    def test_update_epoch_check(self, history, three_state, funcs):
        state = init_smoother(history[0], funcs["terminal"])
        W = backward_matrix(history[1], history[2], three_state)
        with pytest.raises(HistoryError):
            forward_update(state, W)

    def test_continuous_model(self):
        model = GaussianAR(horizon=3)
        h = run_filter(model, 15, random_state=4)
        F = PathFunctional.homogeneous(lambda x: np.asarray(x) ** 2, 3)
        assert smoothed_estimate(forward_smooth(h, model, F)) == pytest.approx(
            smoothed_estimate_batch(h, model, F), abs=1e-12)


class TestState:
    def test_json_roundtrip(self, history, three_state, funcs, tmp_path):
        state = forward_smooth(history, three_state, funcs["terminal"])
        state.to_json(tmp_path / "s.json", extra={"seed": 21})
        back = SmootherState.from_json(tmp_path / "s.json")
        assert back.epoch == state.epoch
        np.testing.assert_array_equal(back.values, state.values)


class TestPathSampling:
    def test_frequencies_match_path_measure(self, three_state):
        small = run_filter(three_state.with_horizon(2), 3, random_state=2)
        paths, masses = particle_path_measure(small, three_state)
        drawn = sample_backward_paths(small, three_state, 60_000, np.random.default_rng(0))
        codes = drawn @ np.array([9, 3, 1])
        freq = np.bincount(codes, minlength=27) / len(codes)
        expected = np.zeros(27)
        expected[paths @ np.array([9, 3, 1])] = masses
        np.testing.assert_allclose(freq, expected, atol=0.01)

    def test_single_path_states(self, history, three_state):
        path = sample_backward_path(history, three_state, np.random.default_rng(0))
        assert len(path) == history.horizon + 1
