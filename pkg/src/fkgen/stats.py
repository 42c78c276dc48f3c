"""Replicate experiments and statistical verdicts."""

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .model import FiniteStateModel, PAIRWISE, TERMINAL
from .particles import SelectionConfig, iterate_filter, mutate, select
from .smoother import ForwardSmoother
from . import vectorized
from .streams import EpochStreams, StreamPool

ESTIMATORS = ("normalizer", "smoothed", "gamma_smoothed", "genealogical", "filter")
Z_THRESHOLD = 3.0
AUDIT_ENV = "FKGEN_AUDIT_SEEDS"


def audit_seed(pinned):
    """Return ``pinned`` unless audit mode asks for a fresh 64-bit seed."""
    if os.environ.get(AUDIT_ENV, "") not in ("", "0"):
        return int(np.random.SeedSequence().entropy) & (2**64 - 1)
    return pinned


# ---------------------------------------------------------------------------
# Khintchine constants


def _khintchine_raw(r):
    k = r // 2
    # (2k)! 2^-k / k!  or  (2k+1)! 2^-k / k!, exact in integers
    return (math.factorial(r) // (2**k * math.factorial(k))) ** (1.0 / r)


def khintchine_constant(r, lookahead=50):
    """Constant ``a_r`` of the L_r Khintchine-type inequality.

    The closed-form bounds ``a_{2k}^{2k} <= (2k)! 2^-k / k!`` and
    ``a_{2k+1}^{2k+1} <= (2k+1)! 2^-k / k!`` are not monotone in ``r``; since
    L_r norms increase with ``r`` any bound for ``s >= r`` also holds for
    ``r``, so the smallest bound over ``s`` in ``[r, r + lookahead]`` is used.
    """
    if int(r) != r or r < 1:
        raise ValueError(f"r must be a positive integer, got {r}")
    r = int(r)
    return min(_khintchine_raw(s) for s in range(r, r + lookahead + 1))


# ---------------------------------------------------------------------------
# batches


@dataclass
class Scenario:
    """Everything needed to run one replicate end to end.

    ``filter_function`` is the ``f`` in ``eta_n^N(f)``; it defaults to the last
    term of a terminal-additive functional.
    """

    model: object
    N: int
    functional: object
    horizon: int = None
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    filter_function: object = None
    compress: bool = True
    scenario_id: str = "scenario"

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = self.functional.horizon
        if self.functional.horizon != self.horizon:
            raise ValueError("functional horizon differs from scenario horizon")
        if self.filter_function is None and self.functional.kind == TERMINAL:
            self.filter_function = self.functional.terms[-1]


@dataclass
class ReplicateBatch:
    """Per-replicate estimator values; replicate ``r`` used streams ``(base_seed, r)``."""

    scenario_id: str
    N: int
    horizon: int
    base_seed: int
    values: dict
    meta: dict = field(default_factory=dict)

    @property
    def R(self):
        return len(next(iter(self.values.values()))) if self.values else 0

    def __getitem__(self, name):
        return self.values[name]

    def scaled_variance(self, name):
        """``N Var`` with the unbiased divisor."""
        if self.R < 2:
            raise ValueError("variance needs at least two replicates")
        return self.N * float(np.var(self.values[name], ddof=1))

    def to_csv(self, path, comments=()):
        names = list(self.values)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["replicate", *names])
            for r in range(self.R):
                writer.writerow([r, *(repr(float(self.values[k][r])) for k in names)])
        sidecar = {"scenario": self.scenario_id, "N": self.N, "horizon": self.horizon,
                   "R": self.R, "base_seed": self.base_seed, "estimators": names, **self.meta}
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path):
        with open(str(path) + ".json", encoding="utf-8") as fh:
            side = json.load(fh)
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
        header, body = rows[0], rows[1:]
        values = {name: np.array([float(row[k]) for row in body])
                  for k, name in enumerate(header) if name != "replicate"}
        meta = {k: v for k, v in side.items()
                if k not in ("scenario", "N", "horizon", "R", "base_seed", "estimators")}
        return cls(side["scenario"], side["N"], side["horizon"], side["base_seed"], values, meta)


def run_one(scenario, estimators, base_seed, replicate, trace_epochs=()):
    """One streaming particle run; returns ``{estimator: value}``.

    Epochs in ``trace_epochs`` add ``"smoothed@p"`` entries.
    """
    F = scenario.functional
    wants = set(estimators)
    trace_epochs = set(trace_epochs)
    out = {}
    smoother = None
    if wants & {"smoothed", "gamma_smoothed"} or trace_epochs:
        smoother = ForwardSmoother(scenario.model, F, compress=scenario.compress)
    lines = None
    prev = None
    for cloud in iterate_filter(scenario.model, scenario.N, scenario.selection, scenario.horizon,
                                base_seed, replicate):
        if smoother is not None:
            smoother.feed(cloud)
            if cloud.epoch in trace_epochs:
                out[f"smoothed@{cloud.epoch}"] = smoother.estimate()
        if "genealogical" in wants:
            if cloud.epoch == 0:
                lines = F.initial_values(cloud.positions).astype(float)
            elif F.kind == PAIRWISE:
                parent = cloud.parent_index
                lines = lines[parent] + F.increment(cloud.epoch, prev.positions[parent],
                                                    cloud.positions)
            else:
                lines = lines[cloud.parent_index] + F.increment(cloud.epoch, None, cloud.positions)
        prev = cloud
    for name in estimators:
        if name == "normalizer":
            out[name] = prev.normalizer
        elif name == "smoothed":
            out[name] = smoother.estimate()
        elif name == "gamma_smoothed":
            out[name] = prev.normalizer * smoother.estimate()
        elif name == "genealogical":
            out[name] = float(np.mean(lines)) * F.scale
        elif name == "filter":
            out[name] = float(np.mean(scenario.filter_function(prev.positions)))
        else:
            raise ValueError(f"unknown estimator {name!r}")
    return out


def run_replicates(scenario, estimators=("smoothed",), R=100, base_seed=0, n_jobs=1,
                   engine="auto", trace_epochs=()):
    """``R`` independent particle runs. Results do not depend on ``n_jobs``.

    ``engine="vectorized"`` advances blocks of replicates together (finite
    states, ``epsilon = 0``); ``"scalar"`` runs them one by one. Both consume
    the same random streams. ``"auto"`` picks the vectorized engine when it
    applies. ``trace_epochs`` adds ``"smoothed@p"`` columns.
    """
    trace_epochs = sorted(set(trace_epochs))
    if any(not 0 <= p <= scenario.horizon for p in trace_epochs):
        raise ValueError("trace epochs must lie in 0..horizon")
    columns = [f"smoothed@{p}" for p in trace_epochs] + list(estimators)
    if not F_is_supported(scenario.functional, estimators):
        raise TypeError("general functionals need the stored-history estimators")
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    if engine == "auto":
        engine = "vectorized" if vectorized.supports(scenario) else "scalar"
    if engine == "vectorized":
        if not vectorized.supports(scenario):
            raise ValueError("vectorized engine needs a finite-state model and epsilon = 0")
        block = max(1, vectorized.BLOCK_ELEMENTS // scenario.N)
        starts = range(0, R, block)

        def run_block(s):
            reps = list(range(s, min(R, s + block)))
            return vectorized.simulate_block(scenario, estimators, reps,
                                             StreamPool(base_seed), trace_epochs)

        if n_jobs == 1:
            parts = [run_block(s) for s in starts]
        else:
            parts = Parallel(n_jobs=n_jobs, backend="threading")(
                delayed(run_block)(s) for s in starts)
        values = {name: np.concatenate([p[name] for p in parts]) for name in columns}
    elif engine == "scalar":
        if n_jobs == 1:
            rows = [run_one(scenario, estimators, base_seed, r, trace_epochs) for r in range(R)]
        else:
            rows = Parallel(n_jobs=n_jobs, backend="threading")(
                delayed(run_one)(scenario, estimators, base_seed, r, trace_epochs)
                for r in range(R))
        values = {name: np.array([row[name] for row in rows]) for name in columns}
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return ReplicateBatch(scenario.scenario_id, scenario.N, scenario.horizon, base_seed, values,
                          {"engine": engine})


def F_is_supported(F, estimators):
    return F.is_additive or not (set(estimators) & {"smoothed", "gamma_smoothed", "genealogical"})


def exact_targets(scenario):
    """Oracle values matching each estimator; finite-state scenarios only."""
    from . import oracle

    model = scenario.model
    if not isinstance(model, FiniteStateModel):
        raise TypeError("exact targets need a finite-state model")
    model = model.with_horizon(scenario.horizon)
    flow = oracle.exact_flow(model)
    q = oracle.exact_smoothed_additive(model, scenario.functional)
    targets = {"normalizer": float(flow.Z[-1]), "smoothed": q, "genealogical": q,
               "gamma_smoothed": float(flow.Z[-1]) * q}
    if scenario.filter_function is not None:
        vals = np.asarray(scenario.filter_function(np.arange(model.n_states)), dtype=float)
        targets["filter"] = float(flow.eta[-1] @ vals)
    return targets


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class ZVerdict:
    z: float
    mean: float
    std: float
    R: int
    passed: bool

    def __str__(self):
        return f"z={self.z:+.3f} mean={self.mean:.6g} sd={self.std:.3g} R={self.R}"


def unbiasedness_test(values, oracle_value, threshold=Z_THRESHOLD):
    """``z = sqrt(R) (mean - oracle) / sd``; pass iff ``|z| <= threshold``.

    A batch with zero spread passes only when every value equals the oracle.
    """
    values = np.asarray(values, dtype=float)
    R = len(values)
    if R < 2:
        raise ValueError("need at least two replicates")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    if sd == 0.0:
        ok = bool(np.all(values == oracle_value))
        return ZVerdict(0.0 if ok else math.copysign(math.inf, mean - oracle_value),
                        mean, 0.0, R, ok)
    z = math.sqrt(R) * (mean - oracle_value) / sd
    return ZVerdict(z, mean, sd, R, abs(z) <= threshold)


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    intercept: float
    r_squared: float


def variance_growth_fit(horizons, variances, offset=0):
    """Least-squares slope of ``log variance`` against ``log(n + offset)``."""
    x = np.log(np.asarray(horizons, dtype=float) + offset)
    y = np.log(np.asarray(variances, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two horizons")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return PowerFit(float(slope), float(intercept), r2)


@dataclass(frozen=True)
class TailRow:
    epsilon: float
    threshold: float
    empirical: float
    bound: float
    slack: float
    passed: bool


def concentration_check(errors, N, b, epsilons):
    """Empirical ``P(|error| >= b/sqrt(N) + eps)`` against ``exp(-N eps^2 / (2 b^2))``.

    A row fails when the frequency exceeds the bound by more than three
    binomial standard deviations.
    """
    if not b > 0:
        raise ValueError("b must be positive")
    errors = np.abs(np.asarray(errors, dtype=float))
    R = len(errors)
    rows = []
    for eps in epsilons:
        thr = b / math.sqrt(N) + eps
        freq = float(np.mean(errors >= thr))
        bound = math.exp(-N * eps**2 / (2 * b**2))
        slack = 3 * math.sqrt(bound * (1 - bound) / R)
        rows.append(TailRow(float(eps), thr, freq, bound, slack, freq <= bound + slack))
    return rows


def scaled_l2_error(values, target, N):
    """``sqrt(N) E(|value - target|^2)^(1/2)`` estimated over replicates."""
    values = np.asarray(values, dtype=float)
    return math.sqrt(N) * math.sqrt(float(np.mean((values - target) ** 2)))


@dataclass(frozen=True)
class LocalErrorReport:
    verdict: ZVerdict
    variance: float
    oracle_variance: float

    @property
    def relative_gap(self):
        if self.oracle_variance == 0:
            return 0.0 if self.variance == 0 else math.inf
        return abs(self.variance / self.oracle_variance - 1)


def local_error_field(model, frozen_cloud, f, R, base_seed=0):
    """Replicate ``V_n^N(f) = sqrt(N) (eta_n^N(f) - Phi_n(eta_{n-1}^N)(f))`` from a
    frozen cloud at epoch ``n - 1`` (``epsilon = 0``, finite-state model)."""
    from .oracle import local_error_variance

    n = frozen_cloud.epoch + 1
    N = frozen_cloud.size
    oracle_var, centre = local_error_variance(model, n, frozen_cloud.positions, f)
    config = SelectionConfig()
    V = np.empty(R)
    for r in range(R):
        rng = EpochStreams(base_seed, r)(n)
        cloud = mutate(select(frozen_cloud, model, config, rng), model, n, rng)
        V[r] = math.sqrt(N) * (float(np.mean(f(cloud.positions))) - centre)
    if np.all(V == 0):
        verdict = ZVerdict(0.0, 0.0, 0.0, R, True)
    else:
        verdict = unbiasedness_test(V, 0.0)
    return LocalErrorReport(verdict, float(np.var(V, ddof=1)), oracle_var)
