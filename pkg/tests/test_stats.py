import math

import numpy as np
import pytest

from fkgen import PathFunctional, SelectionConfig, iid_toy, init_cloud
from fkgen import oracle
from fkgen.stats import (ReplicateBatch, Scenario, audit_seed, concentration_check,
                         exact_targets, khintchine_constant, local_error_field, run_one,
                         run_replicates, scaled_l2_error, unbiasedness_test,
                         variance_growth_fit)
from fkgen.streams import epoch_generator


def _scenario(model, N=20, normalized=False, **kw):
    v = model.values
    F = PathFunctional.homogeneous(lambda x: v[np.asarray(x)], model.horizon,
                                   normalized=normalized)
    return Scenario(model, N, F, **kw)


class TestKhintchine:
    def test_a2_is_one(self):
        assert khintchine_constant(2) == 1.0

    def test_nondecreasing(self):
        vals = [khintchine_constant(r) for r in range(1, 11)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_closed_form_upper_bounds(self):
        for r in range(1, 11):
            k = r // 2
            raw = (math.factorial(r) / (2**k * math.factorial(k))) ** (1 / r)
            assert khintchine_constant(r) <= raw + 1e-15

    def test_rejects(self):
        with pytest.raises(ValueError):
            khintchine_constant(0)
        with pytest.raises(ValueError):
            khintchine_constant(2.5)


class TestVerdicts:
    def test_unbiased_pass_and_shift_fail(self):
        x = np.random.default_rng(0).normal(size=500)
        assert unbiasedness_test(x, 0.0).passed
        assert not unbiasedness_test(x + 10 * x.std(), 0.0).passed

    def test_zero_spread(self):
        assert unbiasedness_test(np.full(5, 2.0), 2.0).passed
        verdict = unbiasedness_test(np.full(5, 2.0), 1.0)
        assert not verdict.passed and verdict.z == math.inf

    def test_needs_two(self):
        with pytest.raises(ValueError):
            unbiasedness_test([1.0], 1.0)

    @pytest.mark.parametrize("power", [1.0, 2.0])
    def test_growth_fit_recovers_planted_law(self, power):
        n = np.array([4, 9, 19, 39])
        fit = variance_growth_fit(n, 3.0 * n**power)
        assert fit.exponent == pytest.approx(power, abs=0.01)
        assert fit.r_squared == pytest.approx(1.0)
        assert variance_growth_fit(n, (n + 1.0) ** power, offset=1).exponent == pytest.approx(power)

    def test_concentration(self):
        rows = concentration_check(np.zeros(100), 100, 1.0, [1.0])
        assert rows[0].bound < 1 / 100 and rows[0].empirical == 0 and rows[0].passed
        with pytest.raises(ValueError):
            concentration_check(np.zeros(10), 100, 0.0, [0.1])
        assert not concentration_check(np.full(100, 5.0), 100, 1.0, [1.0])[0].passed

    def test_scaled_l2(self):
        assert scaled_l2_error([1.0, -1.0], 0.0, 4) == pytest.approx(2.0)


class TestAuditSeed:
    def test_pinned_by_default(self, monkeypatch):
        monkeypatch.delenv("FKGEN_AUDIT_SEEDS", raising=False)
        assert audit_seed(42) == 42

    def test_fresh_in_audit_mode(self, monkeypatch):
        monkeypatch.setenv("FKGEN_AUDIT_SEEDS", "1")
        assert 0 <= audit_seed(42) < 2**64


class TestReplicates:
    def test_thread_count_does_not_matter(self, three_state):
        sc = _scenario(three_state)
        est = ("smoothed", "genealogical", "normalizer", "filter")
        for engine in ("scalar", "vectorized"):
            a = run_replicates(sc, est, R=12, base_seed=3, engine=engine)
            b = run_replicates(sc, est, R=12, base_seed=3, engine=engine, n_jobs=3)
            for k in est:
                np.testing.assert_array_equal(a[k], b[k])

    def test_replicate_equals_run_one(self, three_state):
        sc = _scenario(three_state)
        batch = run_replicates(sc, ("smoothed",), R=4, base_seed=9, engine="scalar")
        assert batch["smoothed"][2] == run_one(sc, ("smoothed",), 9, 2)["smoothed"]

    def test_trace_columns(self, three_state):
        sc = _scenario(three_state, normalized=True)
        batch = run_replicates(sc, ("smoothed",), R=3, base_seed=1, trace_epochs=(0, 4))
        np.testing.assert_array_equal(batch["smoothed@4"], batch["smoothed"])
        with pytest.raises(ValueError):
            run_replicates(sc, ("smoothed",), R=3, trace_epochs=(9,))

    def test_rejects(self, three_state):
        sc = _scenario(three_state)
        with pytest.raises(ValueError):
            run_replicates(sc, ("mystery",), R=2)
        with pytest.raises(ValueError):
            run_replicates(sc, R=2, engine="gpu")
        eps = _scenario(three_state, selection=SelectionConfig("reciprocal-sup"))
        with pytest.raises(ValueError):
            run_replicates(eps, R=2, engine="vectorized")
        general = Scenario(three_state, 5, PathFunctional.general(lambda p: p[0], 4))
        with pytest.raises(TypeError):
            run_replicates(general, ("smoothed",), R=2)

    def test_csv_roundtrip(self, three_state, tmp_path):
        batch = run_replicates(_scenario(three_state), ("smoothed", "normalizer"), R=5,
                               base_seed=2)
        path = tmp_path / "batch.csv"
        batch.to_csv(path, comments=["seed 2"])
        back = ReplicateBatch.from_csv(path)
        assert (back.N, back.horizon, back.base_seed, back.R) == (20, 4, 2, 5)
        for k in ("smoothed", "normalizer"):
            np.testing.assert_array_equal(back[k], batch[k])
        assert back.meta["engine"] == batch.meta["engine"]

    def test_scaled_variance_needs_two(self, three_state):
        batch = run_replicates(_scenario(three_state), R=1)
        with pytest.raises(ValueError):
            batch.scaled_variance("smoothed")

    def test_exact_targets(self, three_state):
        t = exact_targets(_scenario(three_state))
        flow = oracle.exact_flow(three_state)
        assert t["normalizer"] == flow.Z[-1]
        assert t["gamma_smoothed"] == pytest.approx(flow.Z[-1] * t["smoothed"])
        assert t["filter"] == pytest.approx(flow.eta[-1] @ three_state.values)

    def test_uniform_potential_normalizer_is_one(self):
        batch = run_replicates(_scenario(iid_toy(3)), ("normalizer",), R=4)
        np.testing.assert_array_equal(batch["normalizer"], 1.0)

    def test_normalizer_unbiased_small(self, three_state):
        sc = _scenario(three_state, N=10)
        batch = run_replicates(sc, ("normalizer", "gamma_smoothed"), R=3000, base_seed=77)
        t = exact_targets(sc)
        assert unbiasedness_test(batch["normalizer"], t["normalizer"]).passed
        assert unbiasedness_test(batch["gamma_smoothed"], t["gamma_smoothed"]).passed


class TestLocalErrorField:
    def test_constant_is_exactly_zero(self, three_state):
        cloud = init_cloud(three_state, 10, epoch_generator(0, 0, 0))
        rep = local_error_field(three_state, cloud, lambda x: np.ones(len(x)), R=20)
        assert rep.variance == 0.0 and rep.oracle_variance == 0.0 and rep.verdict.passed

    def test_indicator_variance(self, three_state):
        cloud = init_cloud(three_state, 50, epoch_generator(0, 0, 0))
        rep = local_error_field(three_state, cloud, lambda x: (np.asarray(x) == 0) * 1.0,
                                R=10_000, base_seed=5)
        assert rep.verdict.passed
        assert rep.relative_gap < 0.10

    def test_single_particle(self, three_state):
        cloud = init_cloud(three_state, 1, epoch_generator(0, 0, 0))
        rep = local_error_field(three_state, cloud, lambda x: (np.asarray(x) == 0) * 1.0,
                                R=4000, base_seed=6)
        assert rep.verdict.passed
