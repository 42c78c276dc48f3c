"""Continuous-state test models."""

import numpy as np

from fkgen import FeynmanKacModel


class GaussianAR(FeynmanKacModel):
    """AR(1) chain ``x' = a x + s W`` with potential ``exp(-x^2 / 2)``."""

    def __init__(self, horizon, a=0.8, s=1.0, log_density=False):
        self.horizon = horizon
        self.a = a
        self.s = s
        self.use_log = log_density

    def sample_initial(self, size, rng):
        return rng.normal(size=size)

    def sample_mutation(self, n, x, rng):
        return self.a * np.asarray(x) + self.s * rng.normal(size=len(x))

    def potential(self, n, x):
        return np.exp(-0.5 * np.asarray(x, dtype=float) ** 2)

    def transition_density(self, n, x, y):
        z = (np.asarray(y) - self.a * np.asarray(x)) / self.s
        return np.exp(-0.5 * z**2) / (self.s * np.sqrt(2 * np.pi))
