"""Replicate-vectorized particle runs for finite-state models with ``epsilon = 0``.

A block of replicates is advanced together as ``(B, N)`` integer arrays. Each
replicate consumes exactly the uniforms the scalar path draws from its
``(seed, replicate, epoch)`` stream, so both engines produce the same
clouds. Smoothed values are carried per state rather than per particle:
with ``epsilon = 0`` the backward weights of a particle only depend on its
state, so ``F_n^N`` is a function on ``{0..d-1}`` for each replicate.
"""

import numpy as np

from .model import FiniteStateModel, PAIRWISE, TERMINAL

BLOCK_ELEMENTS = 200_000


def supports(scenario):
    """True when the scenario can use the vectorized engine."""
    eps = scenario.selection.epsilon
    zero = eps == "zero" or (not isinstance(eps, str) and float(eps) == 0.0)
    return (isinstance(scenario.model, FiniteStateModel) and zero
            and scenario.functional.is_additive)


def _term_table(F, p, d):
    states = np.arange(d)
    if p == 0:
        return np.asarray(F.initial_values(states), dtype=float)
    if F.kind == TERMINAL:
        return np.asarray(F.increment(p, None, states), dtype=float)
    a, b = np.meshgrid(states, states, indexing="ij")
    return np.asarray(F.increment(p, a.ravel(), b.ravel()), dtype=float).reshape(d, d)


def _counts(pos, d):
    B = pos.shape[0]
    flat = (pos + d * np.arange(B)[:, None]).ravel()
    return np.bincount(flat, minlength=B * d).reshape(B, d).astype(float)


def _estimate(pos, values, d, N, F, p):
    est = (_counts(pos, d) * values).sum(axis=1) / N
    return est / (p + 1) if F.normalized else est


def simulate_block(scenario, estimators, replicates, pool, trace_epochs=()):
    """Run the replicates listed in ``replicates``; returns ``{name: (B,) array}``.

    Epochs in ``trace_epochs`` add ``"smoothed@p"`` entries holding the
    smoothed estimate of the functional truncated at ``p``.
    """
    model = scenario.model
    F = scenario.functional
    N, n_max, d = scenario.N, scenario.horizon, model.n_states
    B = len(replicates)
    wants = set(estimators)
    trace_epochs = sorted(set(trace_epochs))
    smooth = bool(wants & {"smoothed", "gamma_smoothed"}) or bool(trace_epochs)
    traced = {}
    cum0 = np.cumsum(model.initial)

    u = np.stack([pool.uniforms(r, 0, N) for r in replicates])
    pos = np.minimum(np.searchsorted(cum0, u * cum0[-1], side="right"), d - 1)
    log_norm = np.zeros(B)
    tables = [_term_table(F, p, d) for p in range(n_max + 1)]
    if smooth:
        values = np.broadcast_to(tables[0], (B, d)).copy()
    if "genealogical" in wants:
        lines = tables[0][pos]
    if 0 in trace_epochs:
        traced[0] = _estimate(pos, values, d, N, F, 0)

    for n in range(1, n_max + 1):
        G = model.potential_vector(n - 1)
        M = model.transition_matrix(n)
        cumM = np.cumsum(M, axis=1)
        g = G[pos]
        cum = np.cumsum(g, axis=1)
        parents = np.empty((B, N), dtype=np.int64)
        mut_u = np.empty((B, N))
        for k, r in enumerate(replicates):
            draws = pool.uniforms(r, n, 2 * N)
            parents[k] = np.minimum(
                np.searchsorted(cum[k], draws[:N] * cum[k, -1], side="right"), N - 1)
            mut_u[k] = draws[N:]
            log_norm[k] += np.log(g[k].sum() / N)
        selected = np.take_along_axis(pos, parents, axis=1)
        rows = cumM[selected]
        new_pos = np.minimum((rows <= (mut_u * rows[..., -1])[..., None]).sum(axis=2), d - 1)

        if smooth:
            a = _counts(pos, d) * G[None, :]
            den = a @ M
            num = (a * values) @ M
            if F.kind == PAIRWISE:
                num = num + a @ (M * tables[n])
                base = 0.0
            else:
                base = tables[n][None, :]
            with np.errstate(invalid="ignore", divide="ignore"):
                values = np.where(den > 0, base + num / np.where(den > 0, den, 1.0), 0.0)
        if "genealogical" in wants:
            lines = np.take_along_axis(lines, parents, axis=1)
            if F.kind == PAIRWISE:
                lines = lines + tables[n][selected, new_pos]
            else:
                lines = lines + tables[n][new_pos]
        pos = new_pos
        if n in trace_epochs:
            traced[n] = _estimate(pos, values, d, N, F, n)

    out = {f"smoothed@{p}": traced[p] for p in trace_epochs}
    normalizer = np.exp(log_norm)
    if smooth:
        est = _estimate(pos, values, d, N, F, n_max)
    for name in estimators:
        if name == "normalizer":
            out[name] = normalizer
        elif name == "smoothed":
            out[name] = est
        elif name == "gamma_smoothed":
            out[name] = normalizer * est
        elif name == "genealogical":
            out[name] = lines.mean(axis=1) * F.scale
        elif name == "filter":
            vals = np.asarray(scenario.filter_function(np.arange(d)), dtype=float)
            out[name] = vals[pos].mean(axis=1)
        else:
            raise ValueError(f"unknown estimator {name!r}")
    return out


