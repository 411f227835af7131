from fractions import Fraction

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

from pwlbfgs.numerics import (
    PrecisionContext,
    PrecisionError,
    _exact_gram_ints,
    from_hex,
    gaussian_matrix,
    gaussian_vector,
    identity,
    is_exactly_symmetric,
    make_context,
    ones,
    quadratic_form,
    rank,
    spd_check,
    to_decimal,
    to_hex,
    unit,
)

from conftest import mat, vec


class TestContext:
    def test_default_width_gives_about_500_digits(self):
        ctx = make_context(1664)
        assert 500 < ctx.decimal_digits < 501
        assert ctx.tolerance == ctx.scalar("1e-450")

    def test_53_bits_is_binary64(self):
        ctx = make_context(53)
        with ctx:
            third = mpfr(1) / 3
        assert float(third) == 1 / 3
        assert third == mpfr(1 / 3)

    def test_below_floor_rejected(self):
        with pytest.raises(PrecisionError):
            make_context(52)

    def test_nesting_restores_outer_context(self):
        before = gmpy2.get_context().precision
        with make_context(200):
            with make_context(100):
                assert gmpy2.get_context().precision == 100
            assert gmpy2.get_context().precision == 200
        assert gmpy2.get_context().precision == before

    def test_check_rejects_foreign_precision(self, ctx):
        other = make_context(128)
        with pytest.raises(PrecisionError):
            ctx.check(other.vector([1, 2]))
        ctx.check(ctx.vector([1, 2]))

    def test_fraction_conversion_is_correctly_rounded(self, ctx):
        v = ctx.scalar(Fraction(1, 3))
        with ctx:
            assert v == mpfr(1) / 3


class TestQuadraticForm:
    def test_identity_eta_eta(self, ctx):
        with ctx:
            assert quadratic_form(identity(3), ones(3), ones(3)) == 3

    def test_identity_eta_zeta(self, ctx):
        with ctx:
            assert quadratic_form(identity(3), ones(3), unit(3, 0)) == 1

    def test_diagonal(self, ctx):
        H = mat(ctx, [[2, 0, 0], [0, 1, 0], [0, 0, 1]])
        with ctx:
            assert quadratic_form(H, ones(3), unit(3, 0)) == 2


class TestSpdCheck:
    def test_identity(self, ctx):
        with ctx:
            assert spd_check(identity(4)).positive_definite

    def test_indefinite_reports_pivot(self, ctx):
        v = spd_check(mat(ctx, [[1, 0], [0, -1]]))
        assert not v.positive_definite
        assert v.failed_pivot == 2

    def test_example_start_matrix(self, example_init):
        assert spd_check(example_init[1]).positive_definite

    def test_semidefinite_is_not_pd(self, ctx):
        assert not spd_check(mat(ctx, [[1, 1], [1, 1]])).positive_definite


class TestRank:
    def test_full_and_deficient(self, ctx):
        e = [vec(ctx, 1, 0, 0), vec(ctx, 0, 1, 0), vec(ctx, 1, 1, 0)]
        assert rank(e) == 2
        assert rank(e[:2] + [vec(ctx, 0, 0, 3)]) == 3


class TestGaussian:
    def test_gram_is_exact(self, ctx):
        rng = np.random.default_rng(3)
        for scale in (1.0, 1e-8, 1e12):
            X = rng.standard_normal((4, 4)) * scale
            G, e = _exact_gram_ints(X)
            F = [[Fraction(v) for v in row] for row in X]
            for i in range(4):
                for j in range(4):
                    exact = sum(F[r][i] * F[r][j] for r in range(4))
                    assert Fraction(int(G[i, j])) * Fraction(2) ** e == exact

    def test_reproducible_and_spd(self, ctx):
        with ctx:
            A = gaussian_matrix(2, np.random.default_rng(7))
            B = gaussian_matrix(2, np.random.default_rng(7))
        assert all(a == b for a, b in zip(A.flat, B.flat))
        assert spd_check(A).positive_definite

    @pytest.mark.parametrize("n", [2, 3, 10, 40])
    def test_symmetric_to_the_last_bit(self, ctx, n):
        with ctx:
            H = gaussian_matrix(n, np.random.default_rng(n))
        assert is_exactly_symmetric(H)
        ctx.check(H)

    def test_distinct_seeds_distinct_matrices(self, ctx):
        with ctx:
            mats = [gaussian_matrix(3, np.random.default_rng(s)) for s in range(20)]
        keys = {tuple(str(v) for v in M.flat) for M in mats}
        assert len(keys) == 20

    def test_vector_entries_are_doubles(self, ctx):
        with ctx:
            v = gaussian_vector(5, np.random.default_rng(1))
        assert all(mpfr(float(x)) == x for x in v)


class TestSerialization:
    def test_hex_roundtrip(self, ctx):
        with ctx:
            vals = [mpfr(1) / 3, -mpfr(2) ** -700 * 5, mpfr(0), mpfr("1e300")]
            for v in vals:
                assert from_hex(to_hex(v)) == v

    def test_hex_is_normalized(self, ctx):
        assert to_hex(ctx.scalar(1)) == "0x1p0"
        assert to_hex(ctx.scalar(-6)) == "-0x3p1"

    def test_decimal_digits(self, ctx):
        with ctx:
            assert to_decimal(mpfr(1) / 3, 5) == "0.33333"
        assert to_decimal(None) == ""
