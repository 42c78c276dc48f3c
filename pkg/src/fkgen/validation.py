"""Input validation helpers shared by the estimator API and the CLI."""

import numbers

from .exceptions import ModelContractError
from .model import FeynmanKacModel, FiniteStateModel, PathFunctional, validate_model
from .particles import SelectionConfig

_REQUIRED = ("sample_initial", "sample_mutation", "potential", "transition_density")


def check_model(model, validate=True):
    """Return ``model`` if it exposes the model interface and passes validation.

    Finite-state models are checked exhaustively; other models are probed.
    """
    if not isinstance(model, FeynmanKacModel):
        missing = [m for m in _REQUIRED if not callable(getattr(model, m, None))]
        if missing:
            raise TypeError(f"model lacks {', '.join(missing)}")
    horizon = getattr(model, "horizon", None)
    if not isinstance(horizon, numbers.Integral) or horizon < 0:
        raise ModelContractError(f"model horizon must be a non-negative integer, got {horizon!r}")
    if validate:
        report = validate_model(model, probe_count=1 if isinstance(model, FiniteStateModel) else 20)
        if not report.passed:
            raise ModelContractError(str(report.violations[0]))
    return model


def check_functional(F, horizon=None, additive=False):
    if not isinstance(F, PathFunctional):
        raise TypeError(f"expected a PathFunctional, got {type(F).__name__}")
    if horizon is not None and F.horizon != horizon:
        raise ValueError(f"functional horizon {F.horizon} differs from {horizon}")
    if additive and not F.is_additive:
        raise TypeError("an additive functional is required")
    return F


def check_particle_count(N):
    if isinstance(N, bool) or not isinstance(N, numbers.Integral) or N < 1:
        raise ValueError(f"particle count must be a positive integer, got {N!r}")
    return int(N)


def check_selection(epsilon):
    """Build a :class:`SelectionConfig` from an epsilon rule or pass one through."""
    if isinstance(epsilon, SelectionConfig):
        return epsilon
    return SelectionConfig(epsilon=epsilon)
