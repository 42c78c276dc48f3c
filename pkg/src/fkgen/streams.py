"""Counter-based random streams.

Every particle run draws from a Philox generator whose key encodes
``(seed, replicate)`` and whose counter block is offset by the epoch, so a
given epoch of a given replicate always sees the same numbers no matter how
replicates are scheduled across workers.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def epoch_generator(seed, replicate, epoch):
    """Return the generator for one epoch of one replicate.

    Parameters
    ----------
    seed : int
        Base seed (reduced modulo 2**64).
    replicate : int
        Replicate index, >= 0.
    epoch : int
        Epoch index, >= 0.

    Returns
    -------
    numpy.random.Generator
    """
    if replicate < 0 or epoch < 0:
        raise ValueError("replicate and epoch must be non-negative")
    key = (int(seed) & _MASK64) | ((int(replicate) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=_counter(epoch)))


def _counter(epoch):
    # the third counter word separates epochs; draws within an epoch advance
    # the low words, which cannot reach the next epoch's block in practice
    return np.array([0, 0, int(epoch) & _MASK64, 0], dtype=np.uint64)


class EpochStreams:
    """Factory of per-epoch generators for a fixed ``(seed, replicate)``."""

    def __init__(self, seed, replicate=0):
        self.seed = int(seed)
        self.replicate = int(replicate)

    def __call__(self, epoch):
        return epoch_generator(self.seed, self.replicate, epoch)

    def __repr__(self):
        return f"EpochStreams(seed={self.seed}, replicate={self.replicate})"


class StreamPool:
    """Reusable Philox generator repositioned onto ``(seed, replicate, epoch)``.

    ``uniforms(replicate, epoch, size)`` returns the same numbers as
    ``epoch_generator(seed, replicate, epoch).random(size)`` without building
    a new generator, which matters when millions of short streams are used.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._bit = np.random.Philox()
        self._gen = np.random.Generator(self._bit)

    def uniforms(self, replicate, epoch, size):
        if replicate < 0 or epoch < 0:
            raise ValueError("replicate and epoch must be non-negative")
        self._bit.state = {
            "bit_generator": "Philox",
            "state": {"counter": _counter(epoch),
                      "key": np.array([self.seed, int(replicate) & _MASK64], dtype=np.uint64)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen.random(size)


def as_streams(random_state, replicate=0):
    """Normalize ``random_state`` into a callable ``epoch -> Generator``.

    An integer seed yields counter-based :class:`EpochStreams`. A
    ``numpy.random.Generator`` is shared by all epochs and consumed in order.
    ``None`` draws fresh OS entropy.
    """
    if isinstance(random_state, (EpochStreams,)):
        return random_state
    if isinstance(random_state, np.random.Generator):
        return lambda epoch: random_state
    if random_state is None:
        seed = int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
        return EpochStreams(seed, replicate)
    if isinstance(random_state, (int, np.integer)):
        return EpochStreams(int(random_state), replicate)
    raise TypeError(f"unsupported random_state {random_state!r}")
