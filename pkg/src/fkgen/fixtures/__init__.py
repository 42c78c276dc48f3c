"""Plain-text finite-state fixtures and pinned regression tables.

A model file holds scalar lines (``name``, ``horizon``) and matrix sections
(``initial``, ``transition``, ``potential``, ``values``, ``reversible``)
whose rows follow the section keyword, row-major and whitespace separated.
Repeating ``transition`` or ``potential`` stacks per-epoch matrices. Lines
starting with ``#`` are comments.

Regression files hold ``key v1 v2 ...`` lines. The ``FKGEN_FIXTURES``
environment variable points the loaders at another directory.
"""

import os
from pathlib import Path

import numpy as np

from ..model import FiniteStateModel

ENV_VAR = "FKGEN_FIXTURES"
SECTIONS = ("initial", "transition", "potential", "values", "reversible")
SCALARS = ("name", "horizon")


def fixture_dir():
    return Path(os.environ.get(ENV_VAR) or Path(__file__).parent)


def fixture_path(name):
    """Resolve ``name`` (with or without ``.txt``) or return an existing path."""
    path = Path(name)
    if path.exists():
        return path
    candidate = fixture_dir() / (name if name.endswith(".txt") else f"{name}.txt")
    if not candidate.exists():
        raise FileNotFoundError(f"no fixture {name!r} in {fixture_dir()}")
    return candidate


def parse_model_text(text):
    """Parse the fixture format into ``(scalars, sections)``."""
    scalars = {}
    sections = {k: [] for k in SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head in SCALARS:
            scalars[head] = " ".join(rest)
            current = None
        elif head in SECTIONS:
            if rest:
                raise ValueError(f"line {lineno}: section {head!r} takes no inline values")
            sections[head].append([])
            current = sections[head][-1]
        elif current is None:
            raise ValueError(f"line {lineno}: numbers outside a section")
        else:
            current.append([float(tok) for tok in line.split()])
    return scalars, sections


def load_model(name, horizon=None):
    """Load a :class:`FiniteStateModel` from a fixture file."""
    path = fixture_path(name)
    scalars, sec = parse_model_text(path.read_text(encoding="utf-8"))

    def single(key, required=True):
        blocks = sec[key]
        if not blocks:
            if required:
                raise ValueError(f"{path.name}: missing section {key!r}")
            return None
        if len(blocks) > 1:
            raise ValueError(f"{path.name}: section {key!r} repeated")
        return np.asarray(blocks[0][0])

    trans = [np.asarray(b) for b in sec["transition"]]
    pots = [np.asarray(b[0]) for b in sec["potential"]]
    if not trans or not pots:
        raise ValueError(f"{path.name}: needs transition and potential sections")
    declared = int(scalars["horizon"]) if "horizon" in scalars else None
    model = FiniteStateModel(
        single("initial"),
        trans[0] if len(trans) == 1 else np.stack(trans),
        pots[0] if len(pots) == 1 else np.stack(pots),
        horizon=declared,
        values=single("values", False),
        reversible_measure=single("reversible", False),
        name=scalars.get("name", path.stem))
    return model.with_horizon(horizon) if horizon is not None else model


def load_regression(name):
    """Load ``key v1 v2 ...`` lines into a dict of float arrays."""
    path = fixture_path(name)
    out = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            key, *vals = line.split()
            out[key] = np.array([float(v) for v in vals])
    return out


def dump_regression(path, table, comments=()):
    """Write a regression table with ``repr`` precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        for key, vals in table.items():
            fh.write(key + " " + " ".join(repr(float(v)) for v in np.ravel(vals)) + "\n")
