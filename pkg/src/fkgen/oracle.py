"""Exact Feynman-Kac computations on finite state spaces.

Everything here works on :class:`~fkgen.model.FiniteStateModel` instances with
the counting reference measure, so ``H_n(x, y) = M_n[x, y]`` and every
measure is a vector. These routines are the ground truth the particle
estimators are tested against.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (ConvergenceError, EnumerationCapError, ModelContractError,
                         EpochRangeError)
from .model import TERMINAL

ENUMERATION_CAP = 10**6
IDENTITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# kernels and flows


def transfer_matrix(fsm, n):
    """``Q_n(x, y) = G_{n-1}(x) M_n(x, y)`` for ``n >= 1``."""
    return fsm.potential_vector(n - 1)[:, None] * fsm.transition_matrix(n)


def semigroup(fsm, p, n):
    """``Q_{p,n} = Q_{p+1} ... Q_n`` (identity when ``p == n``)."""
    if p > n:
        raise EpochRangeError(f"semigroup needs p <= n, got ({p}, {n})")
    out = np.eye(fsm.n_states)
    for q in range(p + 1, n + 1):
        out = out @ transfer_matrix(fsm, q)
    return out


def forward_ones(fsm, n):
    """``[Q_{q,n}(1) for q in 0..n]`` by the backward recursion ``Q_q Q_{q,n}(1)``."""
    out = [np.ones(fsm.n_states)]
    for q in range(n, 0, -1):
        out.append(transfer_matrix(fsm, q) @ out[-1])
    return out[::-1]


def boltzmann_gibbs(eta, G):
    """``Psi_G(eta)``."""
    w = eta * G
    return w / w.sum()


def phi(fsm, n, eta):
    """One flow step ``Phi_n(eta) = Psi_{G_{n-1}}(eta) M_n``."""
    return boltzmann_gibbs(eta, fsm.potential_vector(n - 1)) @ fsm.transition_matrix(n)


def phi_between(fsm, p, q, eta):
    """``Phi_{p,q}(eta) = eta Q_{p,q} / eta Q_{p,q}(1)``."""
    m = eta @ semigroup(fsm, p, q)
    return m / m.sum()


@dataclass
class Flow:
    """Unnormalized marginals ``gamma_n``, normalized ``eta_n`` and ``Z_n = gamma_n(1)``."""

    gamma: list
    eta: list
    Z: np.ndarray


def exact_flow(fsm, horizon=None):
    """``gamma_n = gamma_{n-1} Q_n`` with ``gamma_0 = eta_0``.

    The normalizers are cross-checked against the product formula
    ``gamma_n(1) = prod_{p<n} eta_p(G_p)``.
    """
    horizon = fsm.horizon if horizon is None else horizon
    gamma = [fsm.initial.copy()]
    for n in range(1, horizon + 1):
        gamma.append(gamma[-1] @ transfer_matrix(fsm, n))
    Z = np.array([g.sum() for g in gamma])
    eta = [g / z for g, z in zip(gamma, Z)]
    log_prod = np.concatenate([[0.0], np.cumsum(
        [np.log(eta[p] @ fsm.potential_vector(p)) for p in range(horizon)])])
    if not np.allclose(np.log(Z), log_prod, rtol=0, atol=IDENTITY_TOL * (horizon + 1)):
        raise ArithmeticError("normalizer recursion disagrees with the product formula")
    return Flow(gamma, eta, Z)


def exact_backward_kernel(fsm, n, eta):
    """Backward kernel ``M_{n, eta}`` from ``E_n`` to ``E_{n-1}``.

    Entry ``[x, y]`` is ``G_{n-1}(y) M_n[y, x] eta(y)`` normalized over ``y``.
    """
    w = (np.asarray(eta) * fsm.potential_vector(n - 1))[:, None] * fsm.transition_matrix(n)
    total = w.sum(axis=0)
    if np.any(~(total > 0)):
        raise ModelContractError(f"backward kernel at epoch {n} has a zero normalizer")
    return (w / total[None, :]).T


def dobrushin(M):
    """Dobrushin coefficient: the largest half-L1 distance between two rows."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] < 2:
        return 0.0
    diff = np.abs(M[:, None, :] - M[None, :, :]).sum(axis=2)
    return 0.5 * float(diff.max())


# ---------------------------------------------------------------------------
# path measures


@dataclass
class PathTable:
    """All ``d**(n+1)`` paths with their unnormalized and normalized masses."""

    paths: np.ndarray
    gamma: np.ndarray
    q: np.ndarray

    def states(self):
        return [self.paths[:, p] for p in range(self.paths.shape[1])]


def _all_paths(d, length, cap):
    if float(d) ** length > cap:
        raise EnumerationCapError(f"{d}**{length} paths exceed cap {cap}")
    return np.array(list(itertools.product(range(d), repeat=length)), dtype=np.int64).reshape(
        -1, length)


def enumerate_path_measure(fsm, horizon=None, cap=ENUMERATION_CAP):
    """``Gamma_n`` and ``Q_n`` atom by atom, straight from the path law.

    Atom ``(x_0..x_n)`` has mass ``eta_0(x_0) prod M_p[x_{p-1}, x_p]
    prod_{p<n} G_p(x_p)``.
    """
    horizon = fsm.horizon if horizon is None else horizon
    paths = _all_paths(fsm.n_states, horizon + 1, cap)
    mass = fsm.initial[paths[:, 0]].copy()
    for p in range(1, horizon + 1):
        mass *= fsm.potential_vector(p - 1)[paths[:, p - 1]]
        mass *= fsm.transition_matrix(p)[paths[:, p - 1], paths[:, p]]
    return PathTable(paths, mass, mass / mass.sum())


def backward_path_measure(fsm, horizon=None, cap=ENUMERATION_CAP):
    """``Q_n`` atom by atom from the backward decomposition
    ``eta_n(dx_n) prod_q M_{q, eta_{q-1}}(x_q, dx_{q-1})``."""
    horizon = fsm.horizon if horizon is None else horizon
    flow = exact_flow(fsm, horizon)
    paths = _all_paths(fsm.n_states, horizon + 1, cap)
    mass = flow.eta[horizon][paths[:, horizon]].copy()
    for q in range(horizon, 0, -1):
        K = exact_backward_kernel(fsm, q, flow.eta[q - 1])
        mass *= K[paths[:, q], paths[:, q - 1]]
    return PathTable(paths, mass * flow.Z[horizon], mass)


# ---------------------------------------------------------------------------
# functionals on finite states


def _term_grid(F, p, d):
    """Epoch-``p`` summand as a ``(d, d)`` table indexed ``[x_{p-1}, x_p]``
    (rows are identical for terminal terms and for ``p == 0``)."""
    states = np.arange(d)
    if p == 0 or F.kind == TERMINAL:
        vals = F.initial_values(states) if p == 0 else F.increment(p, None, states)
        return np.broadcast_to(np.asarray(vals, dtype=float), (d, d))
    a, b = np.meshgrid(states, states, indexing="ij")
    return np.asarray(F.increment(p, a.ravel(), b.ravel()), dtype=float).reshape(d, d)


def _check_horizon(fsm, F, horizon):
    horizon = F.horizon if horizon is None else horizon
    if F.horizon != horizon:
        raise ValueError(f"functional horizon {F.horizon} differs from {horizon}")
    if horizon > fsm.horizon:
        raise EpochRangeError(f"horizon {horizon} beyond model horizon {fsm.horizon}")
    return horizon


def backward_values(fsm, F, flow=None):
    """Exact analogue of ``F_p^N``: ``B_0 = f_0``, ``B_p = f_p + M_{p, eta_{p-1}} B_{p-1}``
    (pairwise terms are averaged inside the kernel). Unscaled."""
    n = F.horizon
    flow = flow or exact_flow(fsm, n)
    d = fsm.n_states
    values = [np.asarray(F.initial_values(np.arange(d)), dtype=float)]
    for p in range(1, n + 1):
        K = exact_backward_kernel(fsm, p, flow.eta[p - 1])
        f = _term_grid(F, p, d)
        # K[x, y]: from x at epoch p to y at epoch p-1; f[y, x] is f_p(y, x)
        values.append((K * (f.T + values[-1][None, :])).sum(axis=1))
    return values


def exact_smoothed_additive(fsm, F, horizon=None):
    """``Q_n(F)`` by the exact backward value recursion."""
    horizon = _check_horizon(fsm, F, horizon)
    if not F.is_additive:
        raise TypeError("use exact_expectation for general functionals")
    flow = exact_flow(fsm, horizon)
    return float(flow.eta[horizon] @ backward_values(fsm, F, flow)[horizon]) * F.scale


def exact_expectation(fsm, F, horizon=None, normalized=True, cap=ENUMERATION_CAP):
    """``Q_n(F)`` (or ``Gamma_n(F)``) by path enumeration; any functional kind."""
    horizon = _check_horizon(fsm, F, horizon)
    table = enumerate_path_measure(fsm, horizon, cap)
    vals = F.evaluate(table.states())
    return float((table.q if normalized else table.gamma) @ vals)


def D_operator(fsm, F, p, flow=None, cap=ENUMERATION_CAP):
    """``D_{p,n}(F)(x_p)``: integrate the backward part up to ``p`` and the
    unnormalized forward part after ``p``. Additive functionals use matrix
    recursions; general ones are enumerated. Scaling of ``F`` is applied."""
    n = F.horizon
    flow = flow or exact_flow(fsm, n)
    d = fsm.n_states
    if not F.is_additive:
        return _D_enumerated(fsm, F, p, flow, cap)
    ones_fwd = forward_ones(fsm, n)
    out = backward_values(fsm, F.truncated(p), flow)[p] * ones_fwd[p]
    reach = np.eye(d)  # Q_{p, q-1}
    for q in range(p + 1, n + 1):
        Qq = transfer_matrix(fsm, q)
        step = (Qq * _term_grid(F, q, d) * ones_fwd[q][None, :]).sum(axis=1)
        out = out + reach @ step
        reach = reach @ Qq
    return out * F.scale


def _D_enumerated(fsm, F, p, flow, cap):
    n = F.horizon
    d = fsm.n_states
    paths = _all_paths(d, n + 1, cap)
    w = np.ones(len(paths))
    for q in range(1, p + 1):
        K = exact_backward_kernel(fsm, q, flow.eta[q - 1])
        w *= K[paths[:, q], paths[:, q - 1]]
    for q in range(p + 1, n + 1):
        w *= transfer_matrix(fsm, q)[paths[:, q - 1], paths[:, q]]
    vals = F.evaluate([paths[:, k] for k in range(n + 1)]) * w
    return np.bincount(paths[:, p], weights=vals, minlength=d)


# ---------------------------------------------------------------------------
# identities


def duality_gap(fsm, n, eta, f, g):
    """``|Psi_{G_{n-1}}(eta)(f M_n(g)) - Phi_n(eta)(g M_{n, eta}(f))|``."""
    lhs = boltzmann_gibbs(eta, fsm.potential_vector(n - 1)) @ (f * (fsm.transition_matrix(n) @ g))
    rhs = phi(fsm, n, eta) @ (g * (exact_backward_kernel(fsm, n, eta) @ f))
    return abs(float(lhs - rhs))


def backward_decomposition_gap(fsm, horizon=None, cap=ENUMERATION_CAP):
    """Largest atom difference between the forward path law and its backward form."""
    fwd = enumerate_path_measure(fsm, horizon, cap)
    bwd = backward_path_measure(fsm, horizon, cap)
    return float(np.max(np.abs(fwd.q - bwd.q)))


def backward_chain_gap(fsm, p, n, eta, cap=ENUMERATION_CAP):
    """Largest atom difference in ``eta Q_{p,n}(dx_n) M_{n,p,eta} = eta(dx_p) Q_{p,n}``
    over paths ``(x_p..x_n)``, for an arbitrary probability vector ``eta``."""
    if not p < n:
        raise ValueError("need p < n")
    paths = _all_paths(fsm.n_states, n - p + 1, cap)
    eta = np.asarray(eta, dtype=float)
    rhs = eta[paths[:, 0]].copy()
    for k in range(1, n - p + 1):
        rhs *= transfer_matrix(fsm, p + k)[paths[:, k - 1], paths[:, k]]
    lhs = (eta @ semigroup(fsm, p, n))[paths[:, -1]]
    for q in range(p, n):
        K = exact_backward_kernel(fsm, q + 1, phi_between(fsm, p, q, eta))
        lhs = lhs * K[paths[:, q + 1 - p], paths[:, q - p]]
    return float(np.max(np.abs(lhs - rhs)))


def semigroup_identity_gaps(fsm, F, cap=ENUMERATION_CAP):
    """``|Gamma_n(F) - gamma_p D_{p,n}(F)|`` for every ``p``, with ``Gamma_n`` enumerated."""
    n = F.horizon
    flow = exact_flow(fsm, n)
    total = exact_expectation(fsm, F, n, normalized=False, cap=cap)
    return [abs(total - float(flow.gamma[p] @ D_operator(fsm, F, p, flow)))
            for p in range(n + 1)]


# ---------------------------------------------------------------------------
# stability constants


@dataclass
class SemigroupTable:
    """Semigroup quantities keyed by ``(p, n)``."""

    Q: dict = field(default_factory=dict)
    Q_one: dict = field(default_factory=dict)
    S: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)
    beta_S: dict = field(default_factory=dict)
    G: dict = field(default_factory=dict)


def normalized_semigroup(Qpn):
    """``S_{p,q}(x, y) = Q_{p,q}(x, y) / Q_{p,q}(1)(x)``."""
    return Qpn / Qpn.sum(axis=1, keepdims=True)


def semigroup_table(fsm, pairs):
    flow = exact_flow(fsm, max(n for _, n in pairs))
    table = SemigroupTable()
    for p, n in pairs:
        Qpn = semigroup(fsm, p, n)
        one = Qpn.sum(axis=1)
        table.Q[p, n] = Qpn
        table.Q_one[p, n] = one
        table.S[p, n] = normalized_semigroup(Qpn)
        table.b[p, n] = float(one.max() / one.min())
        table.beta_S[p, n] = dobrushin(table.S[p, n])
        table.G[p, n] = one / (flow.eta[p] @ one)
    return table


@dataclass(frozen=True)
class MmConstants:
    m: int
    delta: float
    rho: float


def check_Mm_condition(fsm, m):
    """Smallest ``(delta, rho)`` with ``G(x) <= delta G(x')`` and
    ``M^m(x, .) <= rho M^m(x', .)``; ``None`` when some ``M^m`` entry is 0."""
    if not fsm.time_homogeneous:
        raise ValueError("condition (M)_m needs a time-homogeneous model")
    G = fsm.potential_vector(0)
    Mm = np.linalg.matrix_power(fsm.transition_matrix(1), m)
    if np.any(~(Mm > 0)):
        return None
    rho = float(np.max(Mm.max(axis=0) / Mm.min(axis=0)))
    return MmConstants(m, float(G.max() / G.min()), rho)


def density_ratio_floor(fsm, n):
    """``alpha = inf_{x, y, y'} H_n(x, y) / H_n(x, y')``."""
    M = fsm.transition_matrix(n)
    return float(np.min(M.min(axis=1) / M.max(axis=1)))


@dataclass
class BoundReport:
    horizon: int
    N: int
    r: int
    a_r: float
    b: np.ndarray
    beta_S: np.ndarray
    alpha: np.ndarray
    backward_contraction: np.ndarray
    c: np.ndarray
    theorem_bound: float
    concentration_b: float
    normalized: bool
    mm: MmConstants = None
    corollary_mse_bound: float = None
    corollary_gamma_bound: float = None

    def as_dict(self):
        return {"horizon": self.horizon, "N": self.N, "r": self.r, "a_r": self.a_r,
                "theorem_bound": self.theorem_bound, "concentration_b": self.concentration_b,
                "corollary_mse_bound": self.corollary_mse_bound,
                "corollary_gamma_bound": self.corollary_gamma_bound}


def nonasymptotic_bounds(fsm, horizon, N, r=2, m=1, normalized=True):
    """Assemble the L_r error bound for additive functionals with ``osc(f_p) <= 1``.

    ``theorem_bound`` bounds ``sqrt(N) E(|Q_n^N(F) - Q_n(F)|^r)^(1/r)``;
    ``concentration_b`` is the same quantity without ``a_r``. Both are divided
    by ``n + 1`` when ``normalized``. When the model satisfies (M)_m with
    ``N > (n+1) rho delta^m`` the mean-square bound for ``||F|| <= 1`` is added.
    """
    from .stats import khintchine_constant

    n = horizon
    model = fsm.with_horizon(n) if fsm.horizon != n else fsm
    ones = forward_ones(model, n)
    b = np.array([o.max() / o.min() for o in ones])
    beta_S = np.zeros((n + 1, n + 1))
    for p in range(n + 1):
        Qpq = np.eye(model.n_states)
        for q in range(p, n + 1):
            if q > p:
                Qpq = Qpq @ transfer_matrix(model, q)
                Qpq /= Qpq.max()  # S_{p,q} ignores overall scale
            beta_S[p, q] = dobrushin(normalized_semigroup(Qpq))
    alpha = np.array([np.nan] + [density_ratio_floor(model, q) for q in range(1, n + 1)])
    # contraction[p, q] bounds beta(M_{p,.} ... M_{q+1,.}) for q < p
    contraction = np.zeros((n + 1, n + 1))
    for p in range(n + 1):
        for q in range(p):
            contraction[p, q] = np.prod(1 - alpha[q + 1:p + 1] ** 2)
    c = np.array([contraction[p, :p].sum() + np.sum(b[p:] ** 2 * beta_S[p, p:])
                  for p in range(n + 1)])
    core = float(np.sum(b ** 2 * c))
    scale = 1.0 / (n + 1) if normalized else 1.0
    a_r = khintchine_constant(r)
    report = BoundReport(n, N, r, a_r, b, beta_S, alpha, contraction, c,
                         a_r * core * scale, core * scale, normalized)
    if fsm.time_homogeneous:
        mm = check_Mm_condition(fsm, m)
        report.mm = mm
        if mm is not None:
            k = mm.rho * mm.delta ** m
            if N > (n + 1) * k:
                report.corollary_mse_bound = 2 * (n + 1) * k * (4 + k * (1 + 2 * (n + 2) / N))
                report.corollary_gamma_bound = k ** 2 * (n + 1) * (1 + 2 * k * (n + 2) / N)
    return report


# ---------------------------------------------------------------------------
# asymptotic variances


def clt_variance(fsm, F, horizon=None, estimator="backward", epsilon="zero"):
    """Asymptotic variance of ``sqrt(N) (Q_n^N(F) - Q_n(F))`` for ``epsilon = 0``.

    ``estimator="backward"`` sums ``Var_{eta_p}(D_{p,n}(F - Q_n F) / eta_p Q_{p,n}(1))``;
    ``estimator="genealogical"`` is the same sum for the path-space particle
    model, where the variance at epoch ``p`` is taken under ``Q_p`` on
    paths ``(x_0..x_p)``.
    """
    if epsilon != "zero":
        raise NotImplementedError("variance oracle only covers the simple genetic model")
    n = _check_horizon(fsm, F, horizon)
    flow = exact_flow(fsm, n)
    unscaled = _unscaled(F)
    if F.is_additive:
        target = exact_smoothed_additive(fsm, unscaled, n)
    else:
        target = exact_expectation(fsm, unscaled, n)
    total = 0.0
    ones = forward_ones(fsm, n)
    for p in range(n + 1):
        one = ones[p]
        norm = flow.eta[p] @ one
        if estimator == "backward":
            h = (D_operator(fsm, unscaled, p, flow) - target * one) / norm
            total += float(flow.eta[p] @ h**2 - (flow.eta[p] @ h) ** 2)
        elif estimator == "genealogical":
            total += _genealogical_term(fsm, unscaled, p, flow, target, one, norm)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
    return total * F.scale**2


def _unscaled(F):
    if not F.normalized:
        return F
    from .model import PathFunctional
    return PathFunctional(F.kind, F.terms, F.func, F.horizon_, False, F.osc_bound)


def _genealogical_term(fsm, F, p, flow, target, one, norm):
    """``Var_{Q_p}((A(x_{0:p}) Q_{p,n}(1)(x_p) + fwd(x_p) - target Q_{p,n}(1)(x_p)) / norm)``
    with ``A`` the running sum up to ``p`` and ``fwd`` the forward part."""
    d = fsm.n_states
    if not F.is_additive:
        raise NotImplementedError("genealogical variance needs an additive functional")
    fwd = D_operator(fsm, F, p, flow) - backward_values(fsm, F.truncated(p), flow)[p] * one
    # moments of A under gamma_p, per terminal state
    m0 = fsm.initial.copy()
    f0 = _term_grid(F, 0, d)[0]
    m1 = m0 * f0
    m2 = m0 * f0**2
    for q in range(1, p + 1):
        Qq = transfer_matrix(fsm, q)
        f = _term_grid(F, q, d)
        m2 = ((m2[:, None] + 2 * m1[:, None] * f + m0[:, None] * f**2) * Qq).sum(axis=0)
        m1 = ((m1[:, None] + m0[:, None] * f) * Qq).sum(axis=0)
        m0 = m0 @ Qq
    z = m0.sum()
    a = one / norm
    c = (fwd - target * one) / norm
    second = (m2 * a**2 + 2 * m1 * a * c + m0 * c**2).sum() / z
    first = (m1 * a + m0 * c).sum() / z
    return float(second - first**2)


def local_error_variance(fsm, n, prev_positions, f):
    """Conditional variance of one particle's ``f`` at epoch ``n`` given the
    previous cloud, ``Phi_n(eta^N)((f - Phi_n(eta^N) f)^2)`` for ``epsilon = 0``."""
    d = fsm.n_states
    emp = np.bincount(np.asarray(prev_positions), minlength=d) / len(prev_positions)
    law = phi(fsm, n, emp)
    vals = np.asarray(f(np.arange(d)), dtype=float)
    if np.ptp(vals) == 0:
        return 0.0, float(vals[0])
    mean = law @ vals
    return float(law @ (vals - mean) ** 2), float(mean)


# ---------------------------------------------------------------------------
# h-process


@dataclass
class HProcess:
    eigenvalue: float
    h: np.ndarray
    mu_h: np.ndarray
    M_h: np.ndarray
    stationary: np.ndarray
    distance: float
    reversible: bool
    iterations: int


def stationary_law(M):
    """Left fixed point of a row-stochastic matrix."""
    d = M.shape[0]
    A = np.vstack([(M - np.eye(d)).T, np.ones(d)])
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return pi / pi.sum()


def is_primitive(A):
    d = A.shape[0]
    P = (A > 0).astype(float)
    R = P.copy()
    for _ in range((d - 1) ** 2 + 1):
        if np.all(R > 0):
            return True
        R = ((R @ P) > 0).astype(float)
    return bool(np.all(R > 0))


def h_process(fsm, tolerance=1e-13, max_iters=100_000):
    """Top eigenpair of ``Q = G M`` by power iteration and the tilted chain.

    ``mu_h`` is ``h M(h) mu`` normalized, where ``mu`` is the declared
    reversibility measure (the stationary law of ``M`` when none is
    declared). ``distance`` is the L1 gap between ``mu_h`` and the stationary
    law of ``M_h``; it vanishes when ``M`` is reversible w.r.t. ``mu``.
    """
    if not fsm.time_homogeneous:
        raise ValueError("h-process needs a time-homogeneous model")
    M = fsm.transition_matrix(1)
    Q = fsm.potential_vector(0)[:, None] * M
    if not is_primitive(Q):
        raise ValueError("Q is not primitive")
    h = np.full(fsm.n_states, 1.0 / fsm.n_states)
    lam = 0.0
    for it in range(1, max_iters + 1):
        Qh = Q @ h
        lam = float(Qh.sum() / h.sum())
        residual = np.max(np.abs(Qh - lam * h)) / np.max(np.abs(lam * h))
        h = Qh / Qh.sum()
        if residual < tolerance:
            break
    else:
        raise ConvergenceError(f"power iteration did not reach {tolerance} in {max_iters} steps")
    mu = fsm.reversible_measure if fsm.reversible_measure is not None else stationary_law(M)
    Mh_one = M @ h
    mu_h = h * Mh_one * mu
    mu_h /= mu_h.sum()
    M_h = M * h[None, :] / Mh_one[:, None]
    stat = stationary_law(M_h)
    flux = mu[:, None] * M
    return HProcess(lam, h, mu_h, M_h, stat, float(np.abs(mu_h - stat).sum()),
                    bool(np.allclose(flux, flux.T, atol=1e-12)), it)
