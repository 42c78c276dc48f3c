"""Feynman-Kac models, path functionals and model validation.

States are opaque to the library: a model receives and returns numpy arrays
whose leading axis indexes particles. Everything downstream treats the
callbacks as vectorized over that axis.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EpochRangeError, ModelContractError, ModelEvaluationError

ROW_SUM_TOL = 1e-12

TERMINAL = "terminal-additive"
PAIRWISE = "pairwise-additive"
GENERAL = "general"
KINDS = (TERMINAL, PAIRWISE, GENERAL)


class FeynmanKacModel:
    """Interface for a Feynman-Kac model on epochs ``0..horizon``.

    Subclasses implement four vectorized callbacks:

    * ``sample_initial(size, rng)`` draws ``size`` states from the initial law;
    * ``sample_mutation(n, x, rng)`` moves each state of ``x`` (epoch ``n-1``)
      one step with the epoch-``n`` Markov kernel;
    * ``potential(n, x)`` returns the epoch-``n`` potential, values in (0, 1];
    * ``transition_density(n, x, y)`` returns the density of the epoch-``n``
      kernel from ``x`` at ``y`` w.r.t. the reference measure, element-wise
      over the leading axis of ``x`` and ``y``.

    Models are never mutated after construction; callbacks must be pure.
    """

    horizon = 0

    def sample_initial(self, size, rng):
        raise NotImplementedError

    def sample_mutation(self, n, x, rng):
        raise NotImplementedError

    def potential(self, n, x):
        raise NotImplementedError

    def transition_density(self, n, x, y):
        raise NotImplementedError

    def log_transition_density(self, n, x, y):
        with np.errstate(divide="ignore"):
            return np.log(self.transition_density(n, x, y))

    @property
    def has_log_density(self):
        """Whether the subclass overrides :meth:`log_transition_density`."""
        return type(self).log_transition_density is not FeynmanKacModel.log_transition_density

    def describe(self):
        return {"family": type(self).__name__, "horizon": self.horizon}


class FiniteStateModel(FeynmanKacModel):
    """Feynman-Kac model on ``{0, ..., d-1}`` with counting reference measure.

    Parameters
    ----------
    initial : array-like, shape (d,)
        Initial probability vector.
    transitions : array-like, shape (d, d) or (horizon, d, d)
        Row-stochastic matrices. A single matrix is used at every epoch;
        a stack holds the matrices of epochs ``1..horizon`` in order.
    potentials : array-like, shape (d,) or (horizon + 1, d)
        Potential vectors for epochs ``0..horizon`` (or one shared vector).
    horizon : int, optional
        Required when both ``transitions`` and ``potentials`` are shared.
    values : array-like, shape (d,), optional
        Numeric label of each state, used by functionals such as ``f(x) = x``.
    reversible_measure : array-like, shape (d,), optional
        Measure ``mu`` w.r.t. which a homogeneous kernel is reversible.
    """

    def __init__(self, initial, transitions, potentials, horizon=None, values=None,
                 reversible_measure=None, name=None):
        self.initial = np.asarray(initial, dtype=float)
        d = self.initial.shape[0]
        trans = np.asarray(transitions, dtype=float)
        pots = np.asarray(potentials, dtype=float)
        if self.initial.ndim != 1:
            raise ModelContractError("initial law must be a vector")
        inferred = []
        if trans.ndim == 3:
            inferred.append(trans.shape[0])
        elif trans.ndim != 2:
            raise ModelContractError("transitions must be (d, d) or (horizon, d, d)")
        if pots.ndim == 2:
            inferred.append(pots.shape[0] - 1)
        elif pots.ndim != 1:
            raise ModelContractError("potentials must be (d,) or (horizon + 1, d)")
        if horizon is None:
            if not inferred:
                raise ModelContractError("horizon is required for a time-homogeneous model")
            horizon = inferred[0]
        if any(h != horizon for h in inferred):
            raise ModelContractError(f"transition/potential stacks disagree with horizon {horizon}")
        if trans.shape[-2:] != (d, d) or pots.shape[-1] != d:
            raise ModelContractError(f"matrix shapes inconsistent with d={d}")
        self.horizon = int(horizon)
        self.n_states = d
        self._trans = trans
        self._pots = pots
        self._cum_trans = np.cumsum(trans, axis=-1)
        self._cum_initial = np.cumsum(self.initial)
        self.values = None if values is None else np.asarray(values, dtype=float)
        self.reversible_measure = (None if reversible_measure is None
                                   else np.asarray(reversible_measure, dtype=float))
        self.name = name

    @classmethod
    def homogeneous(cls, initial, transition, potential, horizon, **kwargs):
        return cls(initial, transition, potential, horizon=horizon, **kwargs)

    @property
    def time_homogeneous(self):
        return self._trans.ndim == 2 and self._pots.ndim == 1

    def with_horizon(self, horizon):
        """Copy with a different horizon; stacked matrices are truncated."""
        trans, pots = self._trans, self._pots
        if trans.ndim == 3:
            if horizon > trans.shape[0]:
                raise EpochRangeError(f"model only defines transitions up to {trans.shape[0]}")
            trans = trans[:horizon]
        if pots.ndim == 2:
            if horizon + 1 > pots.shape[0]:
                raise EpochRangeError(f"model only defines potentials up to {pots.shape[0] - 1}")
            pots = pots[:horizon + 1]
        return FiniteStateModel(self.initial, trans, pots, horizon=horizon, values=self.values,
                                reversible_measure=self.reversible_measure, name=self.name)

    def transition_matrix(self, n):
        _check_epoch(n, self.horizon, lower=1)
        return self._trans if self._trans.ndim == 2 else self._trans[n - 1]

    def potential_vector(self, n):
        _check_epoch(n, self.horizon)
        return self._pots if self._pots.ndim == 1 else self._pots[n]

    def sample_initial(self, size, rng):
        u = rng.random(size)
        idx = np.searchsorted(self._cum_initial, u * self._cum_initial[-1], side="right")
        return np.minimum(idx, self.n_states - 1)

    def sample_mutation(self, n, x, rng):
        cum = self._cum_trans if self._cum_trans.ndim == 2 else self._cum_trans[n - 1]
        rows = cum[np.asarray(x)]
        u = rng.random(rows.shape[0]) * rows[:, -1]
        idx = (rows <= u[:, None]).sum(axis=1)
        return np.minimum(idx, self.n_states - 1)

    def potential(self, n, x):
        return self.potential_vector(n)[np.asarray(x)]

    def transition_density(self, n, x, y):
        return self.transition_matrix(n)[np.asarray(x), np.asarray(y)]

    def check(self):
        """Raise :class:`ModelContractError` on the first broken assumption."""
        report = validate_model(self, probe_count=1, rng_seed=0)
        if not report.passed:
            raise ModelContractError(str(report.violations[0]))

    def describe(self):
        return {"family": "finite", "n_states": self.n_states, "horizon": self.horizon,
                "time_homogeneous": self.time_homogeneous, "name": self.name}


def iid_toy(horizon, values=(-1.0, 1.0)):
    """Toy model with ``M(x, dy) = eta_0(dy)``, ``eta_0`` uniform, ``G = 1``."""
    d = len(values)
    eta0 = np.full(d, 1.0 / d)
    return FiniteStateModel(eta0, np.tile(eta0, (d, 1)), np.ones(d), horizon=horizon,
                            values=values, reversible_measure=eta0, name="iid-toy")


def _check_epoch(n, horizon, lower=0):
    if not lower <= n <= horizon:
        raise EpochRangeError(f"epoch {n} outside [{lower}, {horizon}]")


def potential_eval(model, n, x):
    """Evaluate ``G_n(x)`` with an epoch-range check."""
    _check_epoch(n, model.horizon)
    return model.potential(n, x)


def transition_density(model, n, x, y):
    """Evaluate ``H_n(x, y)``; a non-positive value breaks condition (H)."""
    _check_epoch(n, model.horizon, lower=1)
    h = np.asarray(model.transition_density(n, x, y), dtype=float)
    if np.any(~(h > 0)):
        raise ModelContractError(f"transition density not positive at epoch {n}")
    return h


@dataclass(frozen=True)
class Violation:
    epoch: int
    kind: str
    state: object
    value: float

    def __str__(self):
        return f"epoch {self.epoch}: {self.kind} = {self.value!r} at state {self.state!r}"


@dataclass
class ValidationReport:
    probe_count: int
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def validate_model(model, probe_count=100, rng_seed=0):
    """Probe a model for the standing assumptions.

    Runs ``probe_count`` independent Markov paths, checks the potential lies in
    (0, 1] along them and that the transition density is positive on every
    probed pair (including cross pairs between paths). Finite-state models are
    also checked exhaustively, including the row sums of every matrix.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    report = ValidationReport(probe_count)

    def evaluate(what, n, fn, *args, dtype=float):
        try:
            return np.asarray(fn(*args), dtype=dtype)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise ModelEvaluationError(f"{what} failed at epoch {n}: {exc}", epoch=n) from exc

    def record(n, kind, states, values, bad):
        for k in np.flatnonzero(bad):
            state = states[k] if not isinstance(states, tuple) else (states[0][k], states[1][k])
            report.violations.append(Violation(n, kind, _plain(state), float(values[k])))

    if isinstance(model, FiniteStateModel):
        _validate_finite(model, report)

    x = evaluate("initial sampler", 0, model.sample_initial, probe_count, rng,
                 dtype=None)
    for n in range(model.horizon + 1):
        if n > 0:
            y = evaluate("mutation sampler", n, model.sample_mutation, n, x, rng, dtype=None)
            shift = np.roll(np.arange(probe_count), 1)
            for xs in (x, x[shift]):
                h = evaluate("transition density", n, model.transition_density, n, xs, y)
                record(n, "H", (xs, y), h, ~(h > 0))
            x = y
        g = evaluate("potential", n, model.potential, n, x)
        record(n, "G", x, g, ~((g > 0) & (g <= 1)))
    return report


def _validate_finite(model, report):
    if abs(model.initial.sum() - 1) > ROW_SUM_TOL or np.any(model.initial < 0):
        report.violations.append(Violation(0, "initial law", None, float(model.initial.sum())))
    for n in range(model.horizon + 1):
        g = model.potential_vector(n)
        for k in np.flatnonzero(~((g > 0) & (g <= 1))):
            report.violations.append(Violation(n, "G", int(k), float(g[k])))
        if n == 0:
            continue
        m = model.transition_matrix(n)
        sums = m.sum(axis=1)
        for k in np.flatnonzero(np.abs(sums - 1) > ROW_SUM_TOL):
            report.violations.append(Violation(n, "row sum", int(k), float(sums[k])))
        for a, b in zip(*np.nonzero(~(m > 0))):
            report.violations.append(Violation(n, "H", (int(a), int(b)), float(m[a, b])))


def _plain(state):
    if isinstance(state, tuple):
        return tuple(_plain(s) for s in state)
    arr = np.asarray(state)
    return arr.item() if arr.ndim == 0 else arr.tolist()


@dataclass(frozen=True)
class PathFunctional:
    """A function of the path ``(x_0, ..., x_n)``.

    ``terminal-additive`` sums ``f_p(x_p)``; ``pairwise-additive`` sums
    ``f_0(x_0)`` and ``f_p(x_{p-1}, x_p)`` for ``p >= 1``; ``general`` wraps an
    arbitrary ``func(path)`` where ``path`` is the list of per-epoch state
    arrays. With ``normalized`` set every value is divided by ``n + 1``.
    """

    kind: str
    terms: tuple = ()
    func: object = None
    horizon_: int = None
    normalized: bool = False
    osc_bound: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == GENERAL:
            if self.func is None or self.horizon_ is None:
                raise ValueError("general functionals need func and horizon")
        elif not self.terms:
            raise ValueError("additive functionals need at least one term")

    @classmethod
    def additive(cls, terms, normalized=False, osc_bound=None):
        return cls(TERMINAL, tuple(terms), normalized=normalized, osc_bound=osc_bound)

    @classmethod
    def pairwise(cls, initial_term, terms, normalized=False, osc_bound=None):
        """``initial_term`` is ``f_0(x_0)``; ``terms[p-1]`` is ``f_p(x_{p-1}, x_p)``."""
        return cls(PAIRWISE, (initial_term, *terms), normalized=normalized, osc_bound=osc_bound)

    @classmethod
    def general(cls, func, horizon, normalized=False):
        return cls(GENERAL, func=func, horizon_=horizon, normalized=normalized)

    @classmethod
    def homogeneous(cls, f, horizon, normalized=False, osc_bound=None):
        return cls.additive([f] * (horizon + 1), normalized=normalized, osc_bound=osc_bound)

    @property
    def horizon(self):
        return self.horizon_ if self.kind == GENERAL else len(self.terms) - 1

    @property
    def is_additive(self):
        return self.kind != GENERAL

    @property
    def scale(self):
        return 1.0 / (self.horizon + 1) if self.normalized else 1.0

    def term(self, p):
        if not self.is_additive:
            raise TypeError("general functionals have no per-epoch terms")
        return self.terms[p]

    def initial_values(self, x):
        """``f_0(x_0)`` for both additive kinds."""
        return np.asarray(self.terms[0](x), dtype=float)

    def increment(self, p, x_prev, x):
        """The epoch-``p`` summand, ``f_p(x)`` or ``f_p(x_prev, x)``."""
        if p == 0:
            return self.initial_values(x)
        if self.kind == TERMINAL:
            return np.asarray(self.terms[p](x), dtype=float)
        return np.asarray(self.terms[p](x_prev, x), dtype=float)

    def truncated(self, p):
        """The functional restricted to epochs ``0..p`` (same normalization rule)."""
        if not self.is_additive:
            raise TypeError("only additive functionals can be truncated")
        return PathFunctional(self.kind, self.terms[:p + 1], normalized=self.normalized,
                              osc_bound=self.osc_bound)

    def evaluate(self, path, apply_scale=True):
        """Evaluate on a list of per-epoch state arrays (paths along axis 0)."""
        if len(path) != self.horizon + 1:
            raise ValueError(f"path has {len(path)} epochs, functional expects {self.horizon + 1}")
        if self.kind == GENERAL:
            out = np.asarray(self.func(path), dtype=float)
        else:
            out = self.initial_values(path[0]).astype(float, copy=True)
            for p in range(1, len(path)):
                out = out + self.increment(p, path[p - 1], path[p])
        return out * self.scale if apply_scale else out

    def check_oscillation(self, model):
        """Verify a declared ``osc(f_p) <= osc_bound`` on a finite model."""
        if self.osc_bound is None or not self.is_additive:
            return True
        states = np.arange(model.n_states)
        for p in range(self.horizon + 1):
            if p > 0 and self.kind == PAIRWISE:
                a, b = np.meshgrid(states, states, indexing="ij")
                vals = self.increment(p, a.ravel(), b.ravel())
            else:
                vals = self.increment(p, None, states) if p else self.initial_values(states)
            if np.ptp(vals) > self.osc_bound + 1e-12:
                return False
        return True
