import cmath
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from schlesinger_lab.canonical_family import (
    GAUGE_SIGN,
    SLOPE_RADII,
    conjugated_residues,
    conjugation_route,
    explicit_route,
    exponent_gap,
    jordan_pair_state,
    limit_defect,
    loglog_slope,
    pair_with_exponent_gap,
    residue_at_infinity,
    schlesinger_residual_2pt,
    select_gauge_sign,
    two_point_rhs,
)
from schlesinger_lab.errors import CondBViolated, ZeroBase
from schlesinger_lab.linalg_core import MatrixKind, classify_product, eig2, norm
from schlesinger_lab.monodromy import FuchsianSystem, pair_monodromy

from conftest import random_traceless


def split(total, b0):
    return b0, total - b0


def fd_residual(b0, bt, t, s, h=1e-5):
    # central difference of the family, independent of the analytic derivative
    plus = conjugation_route(b0, bt, t + h, s)
    minus = conjugation_route(b0, bt, t - h, s)
    here = conjugation_route(b0, bt, t, s)
    rhs = two_point_rhs(*here, t)
    return max(norm((p - m) / (2 * h) - r) / max(1, norm(r)) for p, m, r in zip(plus, minus, rhs))


class TestConjugation:
    def test_unit_t(self, rng):
        b0, bt = random_traceless(rng), random_traceless(rng)
        out = conjugated_residues(b0, bt, 1.0)
        assert norm(out.b0 - b0) <= 1e-15 and norm(out.bt - bt) <= 1e-15

    def test_diagonal_infinity_entries(self, rng):
        l1, l2 = 0.35 + 0.1j, -0.2
        b0 = random_traceless(rng)
        bt = -np.diag([l1, l2]) - b0
        t = 0.3 + 0.2j
        b0p = conjugated_residues(b0, bt, t, gauge_sign=1).b0
        r = t ** (l1 - l2)
        np.testing.assert_allclose(b0p, [[b0[0, 0], b0[0, 1] * r], [b0[1, 0] / r, b0[1, 1]]], rtol=1e-13)

    def test_jordan_infinity_entries(self, rng):
        lam = 0.15
        b0 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        bt = -np.array([[lam, 1], [0, lam]]) - b0
        t = 0.4 - 0.1j
        L = cmath.log(t)
        (b11, b12), (b21, b22) = b0
        ref = [[b11 + b21 * L, b12 + (b22 - b11) * L - b21 * L * L], [b21, b22 - b21 * L]]
        np.testing.assert_allclose(conjugated_residues(b0, bt, t, gauge_sign=1).b0, ref, rtol=1e-12)

    def test_sum_preserved(self, rng):
        b0, bt = random_traceless(rng), random_traceless(rng)
        out = conjugated_residues(b0, bt, 0.2 + 0.5j)
        assert norm(out.b0 + out.bt - b0 - bt) <= 1e-13 * max(1, norm(out.b0))

    def test_routes_agree(self, rng):
        for _ in range(50):
            b0, bt = random_traceless(rng), random_traceless(rng)
            t = 10 ** rng.uniform(-2, 0) * cmath.exp(1j * rng.uniform(-3, 3))
            assert conjugated_residues(b0, bt, t).route_discrepancy <= 1e-12

    def test_scalar_infinity_explicit(self, rng):
        b0 = random_traceless(rng)
        a, b = explicit_route(b0, -b0, 0.3)
        assert norm(a - b0) == 0 and norm(b + b0) == 0

    def test_zero_t(self, rng):
        with pytest.raises(ZeroBase):
            conjugated_residues(random_traceless(rng), random_traceless(rng), 0)

    def test_bad_sign(self, rng):
        with pytest.raises(ValueError):
            conjugated_residues(random_traceless(rng), random_traceless(rng), 0.5, gauge_sign=2)


class TestGaugeSign:
    def test_commuting_zero_both(self):
        b0, bt = np.diag([0.3, -0.3]), np.diag([0.1j, -0.1j])
        assert schlesinger_residual_2pt(b0, bt, 0.5, 1) <= 1e-15
        assert schlesinger_residual_2pt(b0, bt, 0.5, -1) <= 1e-15

    def test_exactly_one_sign(self, rng):
        b0, bt = random_traceless(rng), random_traceless(rng)
        res = {s: schlesinger_residual_2pt(b0, bt, 0.5, s) for s in (1, -1)}
        assert res[GAUGE_SIGN] <= 1e-12
        assert res[-GAUGE_SIGN] > 0.1

    def test_regression_by_finite_difference(self, rng):
        # re-derive the sign without the analytic derivative used in the package
        for _ in range(5):
            b0, bt = random_traceless(rng, 0.5), random_traceless(rng, 0.5)
            t = 0.4 + 0.2j
            assert select_gauge_sign(b0, bt, t) == GAUGE_SIGN
            assert fd_residual(b0, bt, t, GAUGE_SIGN) <= 1e-8
            assert fd_residual(b0, bt, t, -GAUGE_SIGN) > 0.1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-2, 0), st.floats(-math.pi, math.pi))
    def test_residual_random_t(self, seed, logr, arg):
        rng = np.random.default_rng(seed)
        b0, bt = random_traceless(rng), random_traceless(rng)
        t = 10 ** logr * cmath.exp(1j * arg)
        # rounding is amplified by the conjugation growth |t^(l1 - l2)|^(+-1)
        grow = abs(cmath.exp(exponent_gap(b0, bt) * cmath.log(t)))
        assume(max(grow, 1 / grow) <= 1e4)
        assert schlesinger_residual_2pt(b0, bt, t) <= 1e-10


class TestLimitDefect:
    def test_commuting_linear(self):
        b0, bt = np.diag([0.3, -0.3]), np.diag([0.1, -0.1])
        ts = np.logspace(-2, -6, 9)
        d = [limit_defect(b0, bt, t) for t in ts]
        assert loglog_slope(ts, d) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("gap", [2j, 0.3, 0.5, 0.8])
    def test_slope(self, rng, gap):
        b0, bt = pair_with_exponent_gap(gap, rng)
        ts = np.array(SLOPE_RADII)
        d = [limit_defect(b0, bt, t) for t in ts]
        assert loglog_slope(ts, d) == pytest.approx(1 - abs(complex(gap).real), abs=0.05)

    def test_cond_b(self, rng):
        b0, bt = pair_with_exponent_gap(1.2, rng)
        with pytest.raises(CondBViolated):
            limit_defect(b0, bt, 1e-3)

    def test_gap_construction(self, rng):
        b0, bt = pair_with_exponent_gap(0.5 + 0.1j, rng)
        assert abs(abs(exponent_gap(b0, bt)) - abs(0.5 + 0.1j)) <= 1e-12
        assert norm(residue_at_infinity(b0, bt) + b0 + bt) == 0

    def test_jordan_gap_construction(self, rng):
        b0, bt = pair_with_exponent_gap(0, rng, jordan=True)
        assert eig2(-residue_at_infinity(b0, bt), 1e-6).kind is MatrixKind.JORDAN


class TestJordanPairState:
    def test_unipotent_pair_monodromy(self):
        s = jordan_pair_state(np.random.default_rng(0))
        m = pair_monodromy(FuchsianSystem.from_state(s), 0, 1)
        assert abs(np.trace(m) - 2) <= 1e-10
        assert classify_product(m, 1e-4) is MatrixKind.JORDAN
