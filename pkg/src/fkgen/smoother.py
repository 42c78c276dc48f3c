"""Backward-kernel smoothing on top of a particle history.

The particle backward kernel at epoch ``n`` moves particle ``j`` of cloud
``n`` to particle ``i`` of cloud ``n-1`` with probability

    W[j, i] = G_{n-1}(xi_{n-1}^i) H_n(xi_{n-1}^i, xi_n^j) / sum_i' (same with i')

Additive functionals are propagated forward with one ``N x N`` matrix-vector
product per epoch, so the smoothed estimate is available on-the-fly.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import EnumerationCapError, HistoryError, ModelContractError
from .model import GENERAL, PAIRWISE, TERMINAL
from .particles import categorical_draw

# below this a linear-scale row normalizer is recomputed in log space
_TINY = 1e-280


@dataclass
class BackwardWeightMatrix:
    """Row-stochastic backward weights between two consecutive clouds.

    ``weights`` is indexed by (distinct current state, distinct previous state)
    when the clouds were compressed, and by particle indices otherwise; in the
    compressed layout a column already carries the multiplicity of its state.
    :meth:`dense` always returns the ``N x N`` particle matrix.
    """

    epoch: int
    weights: np.ndarray
    prev_positions: np.ndarray
    cur_positions: np.ndarray
    prev_rep: np.ndarray
    prev_inverse: np.ndarray
    prev_counts: np.ndarray
    cur_rep: np.ndarray
    cur_inverse: np.ndarray
    compressed: bool = False

    def dense(self):
        w = self.weights[self.cur_inverse][:, self.prev_inverse]
        return w / self.prev_counts[self.prev_inverse][None, :]

    def row(self, j):
        return self.dense()[j] if self.compressed else self.weights[j]


def _group(positions, compress):
    n = len(positions)
    if not compress:
        idx = np.arange(n)
        return idx, idx, np.ones(n)
    arr = np.asarray(positions)
    axis = 0 if arr.ndim > 1 else None
    _, rep, inverse, counts = np.unique(arr, return_index=True, return_inverse=True,
                                        return_counts=True, axis=axis)
    return rep, inverse.reshape(-1), counts.astype(float)


def _pair_grid(prev_u, cur_u):
    """All (prev, cur) pairs, cur-major: row ``j`` holds every prev state."""
    n_prev, n_cur = len(prev_u), len(cur_u)
    return prev_u[np.tile(np.arange(n_prev), n_cur)], cur_u[np.repeat(np.arange(n_cur), n_prev)]


def _normalize_rows(model, n, g, counts, prev_u, cur_u, log_space):
    xs, ys = _pair_grid(prev_u, cur_u)
    shape = (len(cur_u), len(prev_u))
    if not log_space:
        h = np.asarray(model.transition_density(n, xs, ys), dtype=float).reshape(shape)
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ModelContractError(f"transition density negative or non-finite at epoch {n}")
        w = h * (g * counts)[None, :]
        total = w.sum(axis=1)
        if np.all(total > _TINY) and np.all(np.isfinite(total)):
            return w / total[:, None]
    logh = np.asarray(model.log_transition_density(n, xs, ys), dtype=float).reshape(shape)
    with np.errstate(divide="ignore"):
        logw = logh + np.log(g * counts)[None, :]
    lse = logsumexp(logw, axis=1)
    if not np.all(np.isfinite(lse)):
        bad = int(np.flatnonzero(~np.isfinite(lse))[0])
        raise ModelContractError(f"backward row {bad} at epoch {n} has zero normalizer")
    return np.exp(logw - lse[:, None])


def backward_matrix(prev_cloud, cur_cloud, model, compress=False, log_space=False):
    """Backward weights from ``cur_cloud`` (epoch n) onto ``prev_cloud`` (n-1).

    Dense mode evaluates the transition density exactly ``N**2`` times. With
    ``compress`` particles sharing a state are merged first, which gives the
    same matrix up to rounding and is the fast path for finite state spaces.
    Rows are normalized in log space when ``log_space`` is set or when the
    linear-scale normalizers under- or overflow.
    """
    n = cur_cloud.epoch
    if prev_cloud.epoch != n - 1:
        raise HistoryError(f"clouds at epochs {prev_cloud.epoch} and {n} are not consecutive")
    if prev_cloud.size != cur_cloud.size:
        raise HistoryError("consecutive clouds differ in size")
    prev_rep, prev_inv, prev_counts = _group(prev_cloud.positions, compress)
    cur_rep, cur_inv, _ = _group(cur_cloud.positions, compress)
    prev_u = prev_cloud.positions[prev_rep]
    cur_u = cur_cloud.positions[cur_rep]
    g = np.asarray(model.potential(n - 1, prev_u), dtype=float)
    weights = _normalize_rows(model, n, g, prev_counts, prev_u, cur_u, log_space)
    return BackwardWeightMatrix(n, weights, prev_cloud.positions, cur_cloud.positions,
                                prev_rep, prev_inv, prev_counts, cur_rep, cur_inv, compress)


@dataclass
class SmootherState:
    """Values ``F_n^N(xi_n^j)`` carried by the forward-only recursion."""

    epoch: int
    values: np.ndarray
    functional: object = None

    def to_json(self, path, extra=None):
        payload = {"epoch": self.epoch, "values": np.asarray(self.values).tolist()}
        if extra:
            payload.update(extra)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path, functional=None):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(payload["epoch"], np.asarray(payload["values"], dtype=float), functional)


def init_smoother(cloud, F):
    """Start the recursion: ``F_0^N = f_0``."""
    _require_additive(F)
    return SmootherState(cloud.epoch, F.initial_values(cloud.positions).astype(float), F)


def _require_additive(F):
    if F.kind == GENERAL:
        raise TypeError("no forward recursion exists for general path functionals")


def forward_update(state, W, F=None):
    """One step of ``F_n^N = f_n + M_{n, eta_{n-1}^N}(F_{n-1}^N)``.

    Terminal-additive terms add ``f_n(xi_n^j)`` after averaging; pairwise
    terms ``f_n(xi_{n-1}^i, xi_n^j)`` are averaged together with the
    previous values.
    """
    F = F or state.functional
    _require_additive(F)
    if W.epoch != state.epoch + 1:
        raise HistoryError(f"state at epoch {state.epoch} cannot take weights of epoch {W.epoch}")
    n = W.epoch
    prev_vals = np.asarray(state.values, dtype=float)[W.prev_rep]
    cur_u = W.cur_positions[W.cur_rep]
    if F.kind == TERMINAL:
        new_u = F.increment(n, None, cur_u) + W.weights @ prev_vals
    else:
        prev_u = W.prev_positions[W.prev_rep]
        xs, ys = _pair_grid(prev_u, cur_u)
        f = F.increment(n, xs, ys).reshape(W.weights.shape)
        new_u = (W.weights * (f + prev_vals[None, :])).sum(axis=1)
    return SmootherState(n, new_u[W.cur_inverse], F)


def smoothed_estimate(state, cloud=None, normalized=None):
    """``Q_n^N(F_n) = eta_n^N(F_n^N)``, divided by ``n + 1`` when normalized."""
    if cloud is not None and cloud.epoch != state.epoch:
        raise HistoryError("state and cloud epochs differ")
    if normalized is None:
        normalized = state.functional is not None and state.functional.normalized
    est = float(np.mean(state.values))
    return est / (state.epoch + 1) if normalized else est


class ForwardSmoother:
    """Streaming smoother: keeps only the previous cloud and the state.

    Parameters
    ----------
    model : FeynmanKacModel
    functional : PathFunctional
        Additive functional; its horizon bounds how many epochs can be fed.
    compress : bool
        Merge particles sharing a state before forming the backward weights.
    """

    def __init__(self, model, functional, compress=False, log_space=False):
        _require_additive(functional)
        self.model = model
        self.functional = functional
        self.compress = compress
        self.log_space = log_space
        self.prev_cloud = None
        self.state = None

    def start(self, cloud):
        self.prev_cloud = cloud
        self.state = init_smoother(cloud, self.functional)
        return self.state

    def step(self, cloud):
        W = backward_matrix(self.prev_cloud, cloud, self.model, self.compress, self.log_space)
        self.state = forward_update(self.state, W, self.functional)
        self.prev_cloud = cloud
        return self.state

    def feed(self, cloud):
        return self.start(cloud) if self.state is None else self.step(cloud)

    def estimate(self, normalized=None):
        """Smoothed estimate of the functional truncated at the current epoch."""
        if normalized is None:
            normalized = self.functional.normalized
        return smoothed_estimate(self.state, normalized=normalized)


def forward_smooth(history, model, F, compress=False):
    """Run the forward-only recursion over a stored history; returns the state."""
    if F.horizon != history.horizon:
        raise ValueError("functional and history horizons differ")
    sm = ForwardSmoother(model, F, compress)
    for cloud in history.clouds:
        sm.feed(cloud)
    return sm.state


def sample_backward_paths(history, model, size, rng, compress=False):
    """Draw ``size`` index paths from the particle path measure.

    The terminal index is uniform on the last cloud; each earlier index is
    drawn from the backward-weight row of its successor. Returns an integer
    array of shape ``(size, horizon + 1)``, epoch 0 first.
    """
    n, N = history.horizon, history.N
    out = np.empty((size, n + 1), dtype=np.int64)
    out[:, n] = rng.integers(N, size=size)
    for q in range(n, 0, -1):
        W = backward_matrix(history[q - 1], history[q], model, compress).dense()
        rows = W[out[:, q]]
        cum = np.cumsum(rows, axis=1)
        u = rng.random(size) * cum[:, -1]
        out[:, q - 1] = np.minimum((cum <= u[:, None]).sum(axis=1), N - 1)
    return out


def sample_backward_path(history, model, rng):
    """One path ``(x_0, ..., x_n)`` of states drawn from ``Q_n^N``.

    Only the rows actually visited are computed, so the cost is ``O(N n)``.
    """
    n, N = history.horizon, history.N
    j = int(rng.integers(N))
    idx = [j]
    for q in range(n, 0, -1):
        prev, cur = history[q - 1], history[q]
        g = np.asarray(model.potential(q - 1, prev.positions), dtype=float)
        ys = cur.positions[np.full(N, j)]
        w = g * np.asarray(model.transition_density(q, prev.positions, ys), dtype=float)
        if not w.sum() > 0:
            raise ModelContractError(f"backward row {j} at epoch {q} has zero normalizer")
        j = int(categorical_draw(w, rng.random(1))[0])
        idx.append(j)
    idx.reverse()
    return [history[p].positions[i] for p, i in enumerate(idx)]


def particle_path_measure(history, model, cap=10**6):
    """Enumerate every index path of ``Q_n^N`` with its mass.

    Returns ``(paths, masses)`` with ``paths`` of shape ``(N**(n+1), n+1)``.
    """
    n, N = history.horizon, history.N
    if float(N) ** (n + 1) > cap:
        raise EnumerationCapError(f"{N}**{n + 1} index paths exceed cap {cap}")
    paths = np.arange(N)[:, None]
    masses = np.full(N, 1.0 / N)
    for q in range(n, 0, -1):
        W = backward_matrix(history[q - 1], history[q], model).dense()
        k = len(paths)
        last = paths[:, 0]
        paths = np.hstack([np.tile(np.arange(N), k)[:, None], np.repeat(paths, N, axis=0)])
        masses = np.repeat(masses, N) * W[np.repeat(last, N), np.tile(np.arange(N), k)]
    return paths, masses


def smoothed_estimate_batch(history, model, F, compress=False, cap=10**6):
    """``Q_n^N(F)`` computed after the run from the stored history.

    Additive functionals push the terminal mass backwards through the weight
    matrices; general functionals are enumerated over all index paths (tiny
    sizes only).
    """
    if F.horizon != history.horizon:
        raise ValueError("functional and history horizons differ")
    n = history.horizon
    if F.kind == GENERAL:
        paths, masses = particle_path_measure(history, model, cap)
        states = [history[p].positions[paths[:, p]] for p in range(n + 1)]
        return float(masses @ F.evaluate(states))
    mats = [None] + [backward_matrix(history[q - 1], history[q], model, compress).dense()
                     for q in range(1, n + 1)]
    mass = np.full(history.N, 1.0 / history.N)
    total = 0.0
    for p in range(n, 0, -1):
        W = mats[p]
        if F.kind == TERMINAL:
            total += mass @ F.increment(p, None, history[p].positions)
        elif F.kind == PAIRWISE:
            N = history.N
            xs = history[p - 1].positions[np.tile(np.arange(N), N)]
            ys = history[p].positions[np.repeat(np.arange(N), N)]
            f = F.increment(p, xs, ys).reshape(N, N)
            total += mass @ (W * f).sum(axis=1)
        mass = mass @ W
    total += mass @ F.initial_values(history[0].positions)
    return float(total) * F.scale
