"""Mean-field particle system: selection, mutation, histories and genealogies."""

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateWeightsError, EpochRangeError, HistoryError
from .streams import as_streams

HISTORY_FORMAT = "fkgen-cloud-history"
HISTORY_VERSION = 1


@dataclass
class ParticleCloud:
    """Particle positions at one epoch.

    ``parent_index[i]`` is the (0-based) index in the previous cloud of the
    particle selected as parent of particle ``i``; it is ``None`` at epoch 0.
    ``log_normalizer`` is ``log gamma_n^N(1)``, the log of the product of the
    mean potentials of all earlier clouds.
    """

    epoch: int
    positions: np.ndarray
    parent_index: np.ndarray = None
    log_normalizer: float = 0.0

    def __post_init__(self):
        if len(self.positions) < 1:
            raise ValueError("a cloud needs at least one particle")
        if self.parent_index is not None and len(self.parent_index) != len(self.positions):
            raise ValueError("parent_index and positions differ in length")

    @property
    def size(self):
        return len(self.positions)

    @property
    def normalizer(self):
        return float(np.exp(self.log_normalizer))


@dataclass
class SelectedCloud:
    """Output of a selection step, before mutation."""

    epoch: int
    positions: np.ndarray
    ancestors: np.ndarray
    epsilon: float
    log_mean_potential: float
    log_normalizer: float


@dataclass(frozen=True)
class SelectionConfig:
    """Selection rule.

    ``epsilon`` is ``"zero"`` (simple genetic model), ``"reciprocal-sup"``
    (``1 / max_i G(xi^i)``) or a non-negative float. Only multinomial
    resampling is supported.
    """

    epsilon: object = "zero"
    resampling: str = "multinomial"

    def __post_init__(self):
        if self.resampling != "multinomial":
            raise ValueError(f"unsupported resampling scheme {self.resampling!r}")
        if isinstance(self.epsilon, str):
            if self.epsilon not in ("zero", "reciprocal-sup"):
                raise ValueError(f"unknown epsilon rule {self.epsilon!r}")
        elif not float(self.epsilon) >= 0:
            raise ValueError("fixed epsilon must be non-negative")

    def realize(self, weights):
        if self.epsilon == "zero":
            return 0.0
        if self.epsilon == "reciprocal-sup":
            return 1.0 / float(np.max(weights))
        return float(self.epsilon)


def init_cloud(model, N, rng):
    """Draw ``N`` iid particles from the initial law."""
    if N < 1:
        raise ValueError(f"particle count must be >= 1, got {N}")
    positions = np.asarray(model.sample_initial(N, rng))
    return ParticleCloud(0, positions, None, 0.0)


def categorical_draw(weights, u):
    """Inverse-CDF draws from weights ``∝ weights``, one uniform per draw.

    The walk follows particle order; a uniform landing exactly on a cumulative
    boundary goes to the lower index, so zero-weight particles are never hit.
    """
    cum = np.cumsum(weights)
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    return np.minimum(idx, len(weights) - 1)


def select(cloud, model, config, rng):
    """Selection transition ``xi_n -> hat xi_n``.

    Particle ``i`` is kept with probability ``epsilon * G(xi^i)``; otherwise it
    is replaced by ``xi^j`` with ``j`` drawn with probability ``∝ G(xi^j)``.
    """
    g = np.asarray(model.potential(cloud.epoch, cloud.positions), dtype=float)
    total = g.sum()
    if not total > 0:
        raise DegenerateWeightsError(cloud.epoch)
    eps = config.realize(g)
    if eps * g.max() > 1 + 1e-12:
        raise ValueError(f"epsilon {eps} violates epsilon * G <= 1 at epoch {cloud.epoch}")
    N = cloud.size
    if eps > 0:
        keep = rng.random(N) < eps * g
    else:
        keep = np.zeros(N, dtype=bool)
    ancestors = np.arange(N)
    redraw = ~keep
    n_redraw = int(redraw.sum())
    if n_redraw:
        ancestors[redraw] = categorical_draw(g, rng.random(n_redraw))
    return SelectedCloud(cloud.epoch, cloud.positions[ancestors], ancestors, eps,
                         float(np.log(total / N)), cloud.log_normalizer)


def mutate(selected, model, next_epoch, rng):
    """Mutation transition ``hat xi_n -> xi_{n+1}``."""
    if next_epoch != selected.epoch + 1:
        raise EpochRangeError(f"cannot mutate epoch {selected.epoch} into {next_epoch}")
    if next_epoch > model.horizon:
        raise EpochRangeError(f"epoch {next_epoch} beyond horizon {model.horizon}")
    positions = np.asarray(model.sample_mutation(next_epoch, selected.positions, rng))
    return ParticleCloud(next_epoch, positions, selected.ancestors,
                         selected.log_normalizer + selected.log_mean_potential)


def iterate_filter(model, N, config=None, horizon=None, random_state=None, replicate=0):
    """Yield the clouds of epochs ``0..horizon`` one at a time (streaming mode).

    With an integer ``random_state`` epoch ``n`` draws from the counter-based
    stream ``(seed, replicate, n)``: selection of cloud ``n-1`` and mutation
    into epoch ``n`` share that stream, and epoch 0 initialisation uses it too.
    """
    config = config or SelectionConfig()
    horizon = model.horizon if horizon is None else horizon
    if horizon > model.horizon:
        raise EpochRangeError(f"horizon {horizon} beyond model horizon {model.horizon}")
    streams = as_streams(random_state, replicate)
    cloud = init_cloud(model, N, streams(0))
    yield cloud
    for n in range(1, horizon + 1):
        rng = streams(n)
        cloud = mutate(select(cloud, model, config, rng), model, n, rng)
        yield cloud


def run_filter(model, N, config=None, horizon=None, random_state=None, replicate=0):
    """Run the particle system and keep every cloud."""
    clouds = list(iterate_filter(model, N, config, horizon, random_state, replicate))
    return CloudHistory(clouds)


def empirical_measure(cloud, f):
    """``eta_n^N(f)``."""
    return float(np.mean(f(cloud.positions)))


@dataclass
class CloudHistory:
    """All clouds of one run, epoch 0 first."""

    clouds: list = field(default_factory=list)

    def __post_init__(self):
        for n, cloud in enumerate(self.clouds):
            if cloud.epoch != n:
                raise HistoryError(f"history has a gap: position {n} holds epoch {cloud.epoch}")
            if n > 0 and cloud.parent_index is None:
                raise HistoryError(f"missing parent indices at epoch {n}")
            if n > 0 and cloud.size != self.clouds[0].size:
                raise HistoryError("particle count changes within a history")

    def __len__(self):
        return len(self.clouds)

    def __getitem__(self, n):
        return self.clouds[n]

    @property
    def horizon(self):
        return len(self.clouds) - 1

    @property
    def N(self):
        return self.clouds[0].size

    @property
    def log_normalizers(self):
        return np.array([c.log_normalizer for c in self.clouds])

    def lineages(self, upto=None):
        """Ancestral lines of the particles at epoch ``upto`` (default: last).

        Returns the per-epoch state arrays ``[xi_{0,n}, ..., xi_{n,n}]`` and the
        matching per-epoch ancestor indices.
        """
        n = self.horizon if upto is None else upto
        idx = np.arange(self.N)
        states = [None] * (n + 1)
        indices = [None] * (n + 1)
        for p in range(n, -1, -1):
            cloud = self.clouds[p]
            states[p] = cloud.positions[idx]
            indices[p] = idx
            if p > 0:
                if cloud.parent_index is None:
                    raise HistoryError(f"missing parent indices at epoch {p}")
                idx = cloud.parent_index[idx]
        return states, indices

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": HISTORY_FORMAT, "version": HISTORY_VERSION,
                                 "N": self.N, "horizon": self.horizon}) + "\n")
            for cloud in self.clouds:
                record = {
                    "epoch": cloud.epoch,
                    "N": cloud.size,
                    "positions": np.asarray(cloud.positions).tolist(),
                    "parent_index": (None if cloud.parent_index is None
                                     else np.asarray(cloud.parent_index).tolist()),
                    "log_normalizer": cloud.log_normalizer,
                }
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def from_jsonl(cls, path):
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != HISTORY_FORMAT or header.get("version") != HISTORY_VERSION:
                raise HistoryError(f"unsupported history header {header}")
            clouds = []
            for line in fh:
                rec = json.loads(line)
                parents = rec["parent_index"]
                clouds.append(ParticleCloud(
                    rec["epoch"], np.asarray(rec["positions"]),
                    None if parents is None else np.asarray(parents, dtype=np.int64),
                    float(rec["log_normalizer"])))
        return cls(clouds)


def genealogical_estimate(history, F, upto=None):
    """Occupation measure of the genealogical tree applied to ``F``.

    Each particle's ancestral line is rebuilt through the parent indices and
    the estimate is ``(1/N) sum_i F(line_i)``.
    """
    n = history.horizon if upto is None else upto
    if F.horizon != n:
        raise ValueError(f"functional horizon {F.horizon} differs from epoch {n}")
    lines, _ = history.lineages(n)
    return float(np.mean(F.evaluate(lines)))


def distinct_ancestors(history, upto=None):
    """Number of distinct ancestors at each level of the final population."""
    _, indices = history.lineages(upto)
    return [int(np.unique(idx).size) for idx in indices]
