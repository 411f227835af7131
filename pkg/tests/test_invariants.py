import dataclasses
import json

import pytest
from gmpy2 import mpfr

from pwlbfgs import bfgs
from pwlbfgs.invariants import (
    FAIL,
    PASS,
    SKIPPED,
    VACUOUS,
    check_lemma1,
    check_lemma2,
    check_lemma34,
    check_trajectory,
    merge,
    predict_termination,
    strictly_greater,
    verify_run,
)
from pwlbfgs.numerics import identity
from pwlbfgs.objective import canonical

from conftest import seeded, vec


def by_name(results):
    return {c.name: c for c in results}


def first_seeded_with(ctx, n, predicate, params=None, root=1):
    for i in range(500):
        x0, H0 = seeded(n, i, ctx, root=root)
        rec = bfgs.run(canonical(n), x0, H0, params or bfgs.LineSearchParams(), ctx,
                       check_spd=True)
        if predicate(rec):
            return rec
    raise LookupError("no such run in the corpus")


def with_state(rec, k, **changes):
    rows = list(rec.rows)
    rows[k] = dataclasses.replace(rows[k], state=dataclasses.replace(rows[k].state, **changes))
    return dataclasses.replace(rec, rows=rows)


def with_alpha(rec, k, alpha):
    rows = list(rec.rows)
    rows[k] = dataclasses.replace(rows[k], alpha=alpha)
    return dataclasses.replace(rec, rows=rows)


@pytest.fixture(scope="module")
def example_run(ctx, example_init, default_params):
    return bfgs.run(canonical(3), *example_init, default_params, ctx, check_spd=True)


@pytest.fixture(scope="module")
def example_run_degenerate(ctx, example_init, degenerate_params):
    return bfgs.run(canonical(3), *example_init, degenerate_params, ctx, check_spd=True)


class TestGuardBand:
    def test_tie_fails(self, ctx):
        with ctx:
            tol = ctx.tolerance
            assert not strictly_greater(mpfr(1), mpfr(1), tol)
            assert not strictly_greater(mpfr(1) + mpfr("1e-460"), mpfr(1), tol)
            assert strictly_greater(mpfr(1) + mpfr("1e-440"), mpfr(1), tol)
            assert not strictly_greater(None, mpfr(0), tol)


class TestLemma1:
    def test_example_run_passes(self, example_run):
        res = by_name(check_lemma1(example_run))
        assert all(c.status == PASS for c in res.values())
        assert res["lemma1.ez_positive"].range_text == "[0..8]"
        assert res["lemma1.alpha_above_alpha_star"].range_text == "[0..6]"

    def test_injected_negative_ez_is_located(self, ctx, example_run):
        with ctx:
            bad = with_state(example_run, 4, ez=mpfr(-1))
        res = by_name(check_lemma1(bad))["lemma1.ez_positive"]
        assert res.status == FAIL and res.violation["k"] == 4

    def test_single_step_run_is_mostly_vacuous(self, ctx):
        rec = first_seeded_with(ctx, 3, lambda r: r.termination.at_iteration == 1)
        res = by_name(check_lemma1(rec))
        assert res["lemma1.ez_positive"].status == PASS
        for name in ("lemma1.ez_minus_half_ee_positive", "lemma1.alpha_star_positive",
                     "lemma1.alpha_above_alpha_star"):
            assert res[name].status == VACUOUS


class TestLemma2:
    def test_example_run_passes(self, example_run):
        assert all(c.status == PASS for c in check_lemma2(example_run))

    def test_lower_endpoint_fails_strictness(self, ctx, example_run):
        s = example_run.rows[3].state
        with ctx:
            bad = with_alpha(example_run, 3, s.zx / s.ez)
        res = by_name(check_lemma2(bad))["lemma2.lower"]
        assert res.status == FAIL and res.violation["k"] == 3

    def test_upper_endpoint_fails_strictness(self, ctx, example_run):
        s = example_run.rows[2].state
        with ctx:
            bad = with_alpha(example_run, 2, s.zx / (s.ez - s.ee / 2))
        res = by_name(check_lemma2(bad))["lemma2.upper"]
        assert res.status == FAIL and res.violation["k"] == 2

    def test_two_iteration_run_checks_first_index_only(self, ctx):
        rec = first_seeded_with(ctx, 3, lambda r: r.termination.at_iteration == 2)
        for c in check_lemma2(rec):
            assert c.status == PASS and (c.lo, c.hi) == (0, 0)

    def test_degenerate_skips_upper(self, example_run_degenerate):
        res = by_name(check_lemma2(example_run_degenerate))
        assert res["lemma2.upper"].status == SKIPPED
        assert res["lemma2.lower"].status == PASS


class TestLemma34:
    def test_example_run_passes(self, example_run):
        res = by_name(check_lemma34(example_run))
        assert all(c.status == PASS for c in res.values())
        assert res["squeeze.upper"].range_text == "[0..6]"
        assert res["psi_monotone"].status == PASS

    def test_identity_start_is_vacuous(self, ctx, default_params, rng):
        with ctx:
            x0 = vec(ctx, 1.5, -0.3, 0.7)
            rec = bfgs.run(canonical(3), x0, identity(3), default_params, ctx)
            assert 1 - rec.rows[0].state.ee / (2 * rec.rows[0].state.ez) < 0
        assert rec.termination.at_iteration <= 2
        assert all(c.status in (PASS, VACUOUS) for c in check_lemma34(rec))

    def test_broken_recursion_detected(self, ctx, example_run):
        with ctx:
            s = example_run.rows[3].state
            bad = with_state(example_run, 3, zx=s.zx * (1 + mpfr("1e-300")))
        res = by_name(check_lemma34(bad))
        assert res["lemma4.psi_recursion"].status == FAIL
        assert res["lemma4.psi_recursion"].violation["k"] == 2

    def test_degenerate_skips_c1_checks(self, example_run_degenerate):
        res = by_name(check_lemma34(example_run_degenerate))
        assert res["squeeze.upper"].status == SKIPPED
        assert res["psi_monotone"].status == SKIPPED
        assert res["squeeze.lower"].status == PASS


class TestTrajectory:
    def test_example_run(self, example_run):
        assert all(c.status == PASS for c in check_trajectory(example_run))

    def test_sign_flip_missing(self, ctx, example_run):
        rows = list(example_run.rows)
        with ctx:
            rows[5] = dataclasses.replace(rows[5], x=-rows[5].x)
        res = by_name(check_trajectory(dataclasses.replace(example_run, rows=rows)))
        assert res["sign_alternation"].status == FAIL
        assert res["sign_alternation"].violation["k"] == 4


class TestPrediction:
    def test_degenerate_example(self, example_run_degenerate):
        pr = predict_termination(example_run_degenerate)
        assert pr.psi_below_one == 8
        assert pr.bound == 10 and pr.terminated_at == 10 and pr.ok

    def test_default_example(self, example_run):
        pr = predict_termination(example_run)
        assert pr.ok and pr.psi_below_one == 8

    def test_vacuous(self, ctx):
        rec = first_seeded_with(ctx, 2, lambda r: predict_termination(r).bound is None)
        rep = by_name(verify_run(rec).checks)
        assert rep["termination_prediction"].status == VACUOUS

    def test_seeded_corpus(self, ctx, default_params, degenerate_params):
        for i in range(60):
            n = (2, 3, 5)[i % 3]
            x0, H0 = seeded(n, i, ctx, root=8)
            for p in (default_params, degenerate_params):
                rec = bfgs.run(canonical(n), x0, H0, p, ctx, keep_matrices=False)
                assert predict_termination(rec).ok


class TestReport:
    def test_serialization(self, example_run):
        rep = verify_run(example_run)
        assert rep.ok
        doc = json.loads(rep.to_json())
        assert doc["verdict"] == "pass" and doc["terminated_at"] == 9
        assert "lemma2.upper" in rep.to_text()

    def test_merge_counts(self, example_run, example_run_degenerate):
        agg = merge([verify_run(example_run), verify_run(example_run_degenerate)])
        assert agg["psi_monotone"][PASS] == 1 and agg["psi_monotone"][SKIPPED] == 1
        assert agg["lemma1.ez_positive"][PASS] == 2

    def test_untracked_record_rejected(self, ctx, example_init, default_params):
        rec = bfgs.run(canonical(3), *example_init, default_params, ctx, track=False)
        with pytest.raises(ValueError):
            check_lemma1(rec)
        assert verify_run(rec).ok
