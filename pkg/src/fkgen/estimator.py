"""scikit-learn style front end to the particle smoother."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .particles import genealogical_estimate, run_filter
from .smoother import ForwardSmoother, sample_backward_paths, smoothed_estimate_batch
from .validation import check_functional, check_model, check_particle_count, check_selection


class BackwardSmoother(BaseEstimator):
    """Particle approximation of a Feynman-Kac path measure.

    Parameters
    ----------
    n_particles : int, default=100
        Population size ``N``.
    epsilon : {"zero", "reciprocal-sup"} or float, default="zero"
        Selection rule.
    compress : bool, default=False
        Merge particles sharing a state when forming backward weights.
    random_state : int, numpy.random.Generator or None
        Integer seeds select counter-based per-epoch streams.

    Attributes
    ----------
    history_ : CloudHistory
        Every cloud of the run.
    normalizer_ : float
        ``gamma_n^N(1)``.
    trace_ : ndarray of shape (n + 1,)
        Smoothed estimate of the functional truncated at each epoch; only set
        when ``fit`` received a functional.
    """

    def __init__(self, n_particles=100, epsilon="zero", compress=False, random_state=None):
        self.n_particles = n_particles
        self.epsilon = epsilon
        self.compress = compress
        self.random_state = random_state

    def fit(self, model, functional=None):
        """Run the particle system on ``model``; optionally smooth ``functional`` online."""
        model = check_model(model)
        N = check_particle_count(self.n_particles)
        config = check_selection(self.epsilon)
        self.history_ = run_filter(model, N, config, random_state=self.random_state)
        self.model_ = model
        self.log_normalizer_ = self.history_.clouds[-1].log_normalizer
        self.normalizer_ = float(np.exp(self.log_normalizer_))
        self.trace_ = None
        if functional is not None:
            check_functional(functional, model.horizon, additive=True)
            sm = ForwardSmoother(model, functional, self.compress)
            trace = []
            for cloud in self.history_.clouds:
                sm.feed(cloud)
                trace.append(sm.estimate())
            self.trace_ = np.array(trace)
            self.state_ = sm.state
            self.functional_ = functional
        return self

    def transform(self, functional):
        """Per-particle values ``F_n^N(xi_n^j)`` of an additive functional."""
        check_is_fitted(self, "history_")
        check_functional(functional, self.history_.horizon, additive=True)
        sm = ForwardSmoother(self.model_, functional, self.compress)
        for cloud in self.history_.clouds:
            sm.feed(cloud)
        return sm.state.values

    def predict(self, functionals):
        """Smoothed estimates ``Q_n^N(F)``; accepts one functional or a sequence."""
        check_is_fitted(self, "history_")
        single = not isinstance(functionals, (list, tuple))
        items = [functionals] if single else functionals
        out = np.array([smoothed_estimate_batch(
            self.history_, self.model_, check_functional(F, self.history_.horizon),
            self.compress) for F in items])
        return out[0] if single else out

    def genealogical(self, functional):
        """Estimate of ``Q_n(F)`` from the ancestral lines."""
        check_is_fitted(self, "history_")
        return genealogical_estimate(self.history_, check_functional(functional))

    def sample_paths(self, size, random_state=None):
        """Index paths drawn from the particle path measure, shape ``(size, n + 1)``."""
        check_is_fitted(self, "history_")
        rng = np.random.default_rng(random_state)
        return sample_backward_paths(self.history_, self.model_, size, rng, self.compress)
