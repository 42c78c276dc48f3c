"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 model contract violation,
4 failed check, 5 enumeration cap exceeded.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .config import (build_functional, build_model, build_selection, dump_resolved,
                     load_config, scenario_hash)
from .exceptions import (ConfigError, DegenerateWeightsError, EnumerationCapError,
                         ModelContractError, ModelEvaluationError)
from .model import FiniteStateModel, TERMINAL, validate_model
from .particles import iterate_filter
from .smoother import ForwardSmoother
from .stats import Scenario, run_replicates, unbiasedness_test, variance_growth_fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_CHECK = 4
EXIT_CAP = 5

DEFAULT_TOLERANCE = 1e-12


def fmt(x):
    """Shortest round-trip text for a float; empty for missing values."""
    if x is None:
        return ""
    return repr(float(x))


class Output:
    """Writes CSV files with a provenance header into the output directory."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.dir = Path(cfg["out"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.header = [f"fkgen {command}", f"seed {cfg['seed']}",
                       f"scenario {scenario_hash(cfg)}"]
        dump_resolved(cfg, self.dir / "resolved_config.yaml")

    def csv(self, name, columns, rows, extra=()):
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in [*self.header, *extra]:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            writer.writerows(rows)
        return path


def _require_finite(model, command):
    if not isinstance(model, FiniteStateModel):
        raise ConfigError(f"{command} needs a finite-state model")
    return model


def _validate(model):
    report = validate_model(model, probe_count=1 if isinstance(model, FiniteStateModel) else 50,
                            rng_seed=0)
    if not report.passed:
        raise ModelContractError("model validation failed: "
                                 + "; ".join(str(v) for v in report.violations[:5]))


def _filter_term(F):
    return F.terms[-1] if F.kind == TERMINAL else None


# ---------------------------------------------------------------------------
# commands


def cmd_smooth(cfg, threads=1):
    """Single run: smoothed estimate of the truncated functional at every epoch."""
    model = build_model(cfg)
    _validate(model)
    F = build_functional(cfg, model)
    out = Output(cfg, "smooth")
    sm = ForwardSmoother(model, F, compress=cfg["compress"])
    rows = []
    for cloud in iterate_filter(model, cfg["N"], build_selection(cfg), cfg["horizon"],
                                cfg["seed"], 0):
        sm.feed(cloud)
        f = F.terms[cloud.epoch] if F.kind == TERMINAL else None
        filt = None if f is None else float(np.mean(f(cloud.positions)))
        rows.append([cloud.epoch, fmt(sm.estimate()), fmt(cloud.log_normalizer), fmt(filt)])
    out.csv("smooth.csv", ["epoch", "smoothed", "log_normalizer", "filter"], rows)
    sm.state.to_json(out.dir / "smoother_state.json",
                     {"seed": cfg["seed"], "scenario": scenario_hash(cfg)})
    return EXIT_OK


def cmd_genealogy(cfg, threads=1):
    """Single run: genealogical estimates and ancestor counts of the final population."""
    model = build_model(cfg)
    _validate(model)
    F = build_functional(cfg, model)
    out = Output(cfg, "genealogy")
    clouds = list(iterate_filter(model, cfg["N"], build_selection(cfg), cfg["horizon"],
                                 cfg["seed"], 0))
    rows = []
    lines = None
    for cloud in clouds:
        p = cloud.epoch
        if p == 0:
            lines = F.initial_values(cloud.positions).astype(float)
        else:
            parent = cloud.parent_index
            prev = clouds[p - 1].positions[parent]
            lines = lines[parent] + F.increment(p, prev, cloud.positions)
        scale = 1.0 / (p + 1) if F.normalized else 1.0
        f = F.terms[p] if F.kind == TERMINAL else None
        filt = None if f is None else float(np.mean(f(cloud.positions)))
        rows.append([p, fmt(float(np.mean(lines)) * scale), fmt(filt), fmt(cloud.log_normalizer)])
    # distinct ancestors of the final population at every level
    idx = np.arange(cfg["N"])
    distinct = [0] * len(clouds)
    for p in range(len(clouds) - 1, -1, -1):
        distinct[p] = int(np.unique(idx).size)
        if p > 0:
            idx = clouds[p].parent_index[idx]
    for row, k in zip(rows, distinct):
        row.append(k)
    coalesced = [p for p, k in enumerate(distinct) if k == 1]
    extra = [f"most recent common ancestor epoch {coalesced[-1] if coalesced else 'none'}"]
    out.csv("genealogy.csv", ["epoch", "genealogical", "filter", "log_normalizer",
                              "distinct_ancestors"], rows, extra)
    return EXIT_OK


def cmd_compare_variance(cfg, threads=1):
    """``N Var`` of the genealogical and backward estimators over a grid."""
    grid = cfg.get("grid", {})
    horizons = grid.get("horizons", [])
    sizes = grid.get("N", [cfg["N"]])
    estimators = grid.get("estimators", ["genealogical", "smoothed"])
    offset = grid.get("fit_offset", 0)
    R = cfg["replicates"]
    if horizons and R < 2:
        raise ConfigError("replicates: compare-variance needs at least 2")
    out = Output(cfg, "compare-variance")
    cells = {}
    for N in sizes:
        for n in horizons:
            model = build_model(cfg, horizon=n)
            _validate(model)
            F = build_functional(cfg, model, horizon=n)
            sc = Scenario(model, N, F, n, build_selection(cfg), compress=cfg["compress"],
                          scenario_id=f"n={n},N={N}")
            batch = run_replicates(sc, tuple(estimators), R, cfg["seed"], n_jobs=threads)
            for est in estimators:
                cells[n, N, est] = batch.scaled_variance(est)
    fits = {}
    for N in sizes:
        for est in estimators:
            if len(horizons) >= 2:
                fits[N, est] = variance_growth_fit(
                    horizons, [cells[n, N, est] for n in horizons], offset=offset)
    rows = []
    for N in sizes:
        for est in estimators:
            fit = fits.get((N, est))
            for n in horizons:
                rows.append([n, N, est, R, fmt(cells[n, N, est]),
                             fmt(fit.exponent) if fit else "", fmt(fit.r_squared) if fit else ""])
    out.csv("compare_variance.csv",
            ["n", "N", "estimator", "R", "scaled_variance", "exponent", "r_squared"], rows,
            [f"fit offset {offset}"])
    return EXIT_OK


def cmd_oracle_check(cfg, threads=1):
    """Exact identities on the finite model, then a replicate unbiasedness check."""
    model = _require_finite(build_model(cfg), "oracle-check")
    _validate(model)
    checks = cfg.get("checks", {})
    tol = checks.get("tolerance", DEFAULT_TOLERANCE)
    cap = checks.get("enumeration_cap", oracle.ENUMERATION_CAP)
    k = checks.get("random_vectors", 10)
    eh = min(cfg["horizon"], checks.get("enumeration_horizon", 4))
    rng = np.random.default_rng(cfg["seed"])
    d = model.n_states
    rows = []

    def add(name, detail, value, tolerance, passed):
        rows.append([name, detail, fmt(value), fmt(tolerance), "pass" if passed else "fail"])

    flow = oracle.exact_flow(model)
    if model.horizon >= 1:
        gaps = [oracle.duality_gap(model, n, rng.dirichlet(np.ones(d)), rng.random(d),
                                   rng.random(d))
                for n in range(1, model.horizon + 1) for _ in range(k)]
        add("duality", f"{len(gaps)} random (eta, f, g)", max(gaps), tol, max(gaps) <= tol)
    small = model.with_horizon(eh)
    gap = oracle.backward_decomposition_gap(small, cap=cap)
    add("backward-decomposition", f"horizon {eh}", gap, tol, gap <= tol)
    if eh >= 1:
        gaps = [oracle.backward_chain_gap(small, p, n, rng.dirichlet(np.ones(d)), cap=cap)
                for n in range(1, eh + 1) for p in range(n) for _ in range(k)]
        add("backward-chain", f"{len(gaps)} random eta", max(gaps), tol, max(gaps) <= tol)
    F = build_functional(cfg, small, horizon=eh)
    gaps = oracle.semigroup_identity_gaps(small, F, cap=cap)
    scale = max(1.0, abs(oracle.exact_expectation(small, F, normalized=False, cap=cap)))
    add("semigroup", f"p = 0..{eh}", max(gaps), tol * scale, max(gaps) <= tol * scale)
    exact = oracle.exact_smoothed_additive(small, F)
    enum = oracle.exact_expectation(small, F, cap=cap)
    add("smoothed-vs-enumeration", f"horizon {eh}", abs(exact - enum), tol * max(1, abs(enum)),
        abs(exact - enum) <= tol * max(1, abs(enum)))
    if (model.time_homogeneous and model.horizon >= 1
            and oracle.is_primitive(oracle.transfer_matrix(model, 1))):
        hp = oracle.h_process(model)
        Q = oracle.transfer_matrix(model, 1)
        res = float(np.max(np.abs(Q @ hp.h - hp.eigenvalue * hp.h)) / np.max(hp.h))
        add("h-eigenpair", f"eigenvalue {fmt(hp.eigenvalue)}", res, 1e-10, res <= 1e-10)
    if checks.get("unbiasedness", True):
        R = cfg["replicates"]
        if R < 2:
            raise ConfigError("replicates: unbiasedness check needs at least 2")
        Ffull = build_functional(cfg, model)
        sc = Scenario(model, cfg["N"], Ffull, cfg["horizon"], build_selection(cfg),
                      compress=cfg["compress"], scenario_id="oracle-check")
        batch = run_replicates(sc, ("normalizer", "gamma_smoothed"), R, cfg["seed"],
                               n_jobs=threads)
        Z = float(flow.Z[-1])
        target = Z * oracle.exact_smoothed_additive(model, Ffull)
        for name, ref in (("normalizer", Z), ("gamma_smoothed", target)):
            v = unbiasedness_test(batch[name], ref)
            add(f"unbiased-{name}", f"R={R} mean={fmt(v.mean)} oracle={fmt(ref)}", v.z, 3.0,
                v.passed)
    out = Output(cfg, "oracle-check")
    out.csv("oracle_check.csv", ["check", "detail", "value", "tolerance", "verdict"], rows)
    failed = [r[0] for r in rows if r[-1] == "fail"]
    for r in rows:
        print(f"{r[-1].upper():4s} {r[0]}: {r[2]} (tolerance {r[3]})")
    return EXIT_CHECK if failed else EXIT_OK


def _default_epochs(horizon):
    marks = {0, horizon}
    step = 1
    while step < horizon:
        marks.update({step, 2 * step, 5 * step})
        step *= 10
    return sorted(p for p in marks if p <= horizon)


def cmd_hprocess(cfg, threads=1):
    """Normalized smoothed estimates against the h-process limit ``mu_h(f)``."""
    model = _require_finite(build_model(cfg), "hprocess")
    if not model.time_homogeneous:
        raise ConfigError("hprocess needs a time-homogeneous model")
    _validate(model)
    spec = dict(cfg["functional"])
    if spec.get("kind") != TERMINAL:
        raise ConfigError("functional/kind: hprocess uses a terminal-additive functional")
    F = build_functional({**cfg, "functional": {**spec, "normalized": True}}, model)
    settings = cfg.get("hprocess", {})
    epochs = sorted(set(settings.get("epochs", _default_epochs(cfg["horizon"]))))
    if any(p > cfg["horizon"] for p in epochs):
        raise ConfigError("hprocess/epochs: beyond the horizon")
    hp = oracle.h_process(model, settings.get("tolerance", 1e-13),
                          settings.get("max_iters", 100_000))
    f = _filter_term(F)
    mu_h_f = float(hp.mu_h @ np.asarray(f(np.arange(model.n_states)), dtype=float))
    R = cfg["replicates"]
    sc = Scenario(model, cfg["N"], F, cfg["horizon"], build_selection(cfg),
                  compress=cfg["compress"], scenario_id="hprocess")
    batch = run_replicates(sc, (), R, cfg["seed"], n_jobs=threads, trace_epochs=epochs)
    rows = []
    verdict = True
    for p in epochs:
        vals = batch[f"smoothed@{p}"]
        est = float(vals.mean())
        sd = float(vals.std(ddof=1)) if R >= 2 else None
        exact = oracle.exact_smoothed_additive(model.with_horizon(p), F.truncated(p))
        gap = est - mu_h_f
        ok = None if sd is None else abs(gap) <= 3 * sd
        if p == epochs[-1] and ok is False:
            verdict = False
        rows.append([p, fmt(est), fmt(sd), fmt(sd / np.sqrt(R) if sd is not None else None),
                     fmt(mu_h_f), fmt(gap), fmt(exact), fmt(exact - mu_h_f),
                     "" if ok is None else ("pass" if ok else "fail")])
    extra = [f"eigenvalue {fmt(hp.eigenvalue)}",
             f"stationary law of M_h vs mu_h L1 distance {fmt(hp.distance)}",
             f"reversible {hp.reversible}"]
    out = Output(cfg, "hprocess")
    out.csv("hprocess.csv", ["epoch", "estimate", "std", "std_error_mean", "mu_h", "gap",
                             "exact", "exact_gap", "within_3_std"], rows, extra)
    return EXIT_OK if verdict else EXIT_CHECK


COMMANDS = {
    "smooth": cmd_smooth,
    "genealogy": cmd_genealogy,
    "compare-variance": cmd_compare_variance,
    "oracle-check": cmd_oracle_check,
    "hprocess": cmd_hprocess,
}


def _add_globals(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="scenario YAML file")
    parser.add_argument("--seed", type=int, default=default, help="base seed (overrides config)")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker cap; results do not depend on it")


def build_parser():
    parser = argparse.ArgumentParser(prog="fkgen", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        _add_globals(p, suppress=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            raise ConfigError("--config is required")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit in 64 bits")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"fkgen: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelContractError, ModelEvaluationError, DegenerateWeightsError) as exc:
        print(f"fkgen: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except EnumerationCapError as exc:
        print(f"fkgen: enumeration cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
