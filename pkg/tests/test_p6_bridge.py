import cmath
import io
import math

import numpy as np
import pytest
import sympy as sp

from schlesinger_lab.errors import DenominatorVanishes, MovablePole, SingularPoint
from schlesinger_lab.expansion_fit import SectorSpec
from schlesinger_lab.monodromy import FuchsianSystem, pair_exponent_hint, pair_monodromy, phi_from_monodromy
from schlesinger_lab.p6_bridge import (
    P6Params,
    P6State,
    admissible_state,
    cross_validate,
    p6_integrate,
    p6_params_from_spectra,
    p6_rhs,
    ratio_form_check,
    w_from_residues,
    w_prime_from_flow,
)
from schlesinger_lab.path_integrator import ComplexPath, GeometricLine, line_path
from schlesinger_lab.schlesinger_flow import SchlesingerState, SpectralData, flow, spectral_data

from conftest import random_traceless


def symbolic_p6():
    t, w, wp, a, b, c, d = sp.symbols("t w wp a b c d")
    expr = (sp.Rational(1, 2) * (1 / w + 1 / (w - 1) + 1 / (w - t)) * wp ** 2
            - (1 / t + 1 / (t - 1) + 1 / (w - t)) * wp
            + w * (w - 1) * (w - t) / (t ** 2 * (t - 1) ** 2)
            * (a + b * t / w ** 2 + c * (t - 1) / (w - 1) ** 2 + d * t * (t - 1) / (w - t) ** 2))
    return sp.lambdify((t, w, wp, a, b, c, d), expr, "mpmath"), expr, (t, w, wp, a, b, c, d)


def hand_w(state):
    # ratio of (1,2) entries, written out separately from the package
    t = state.t
    n = t * state.residues[0][0, 1]
    d = t * state.residues[0][0, 1] + state.residues[0][0, 1] + t * state.residues[2][0, 1] + state.residues[1][0, 1]
    return n / d


class TestParams:
    @pytest.mark.parametrize("lams, linf, expected", [
        ((0, 0, 0), 0.5, (0, 0, 0, 0.5)),
        ((0, 0, 0), 1.0, (0.5, 0, 0, 0.5)),
        ((0, 0, 0), 0.0, (0.5, 0, 0, 0.5)),
        ((0.5, 0.25, 0.1), 0.2, (0.18, -0.5, 0.02, 0.375)),
    ])
    def test_formula(self, lams, linf, expected):
        p = p6_params_from_spectra(SpectralData(lams, linf))
        assert p.as_tuple() == pytest.approx(expected)

    def test_perturbed(self):
        p = P6Params(0, 0, 0, 0.5).perturbed(alpha=0.1)
        assert p.alpha == 0.1 and p.delta == 0.5

    def test_non_finite(self):
        with pytest.raises(ValueError):
            P6Params(math.nan, 0, 0, 0)


class TestRatio:
    def test_zero_numerator(self, rng):
        b0 = np.array([[0.1, 0], [0.3, -0.1]])
        s = SchlesingerState.n4_normalized(b0, random_traceless(rng), random_traceless(rng), 0.4)
        assert w_from_residues(s) == 0

    def test_only_b0(self):
        b0 = np.array([[0, 0.7], [0.2, 0]])
        s = SchlesingerState.n4_normalized(b0, np.diag([0.1, -0.1]), np.diag([0.2, -0.2]), 0.3 + 0.1j)
        assert w_from_residues(s) == pytest.approx(s.t / (s.t + 1), rel=1e-15)

    def test_against_hand(self, rng):
        for _ in range(10):
            s = SchlesingerState.n4_normalized(*(random_traceless(rng) for _ in range(3)), 0.3 + 0.4j)
            assert w_from_residues(s) == pytest.approx(hand_w(s), rel=1e-13)

    def test_denominator_vanishes(self):
        b0 = np.array([[0, 1.0], [0, 0]])
        bt = np.array([[0, -1.5], [0, 0]])
        s = SchlesingerState.n4_normalized(b0, bt, np.zeros((2, 2)), 0.5)
        with pytest.raises(DenominatorVanishes):
            w_from_residues(s)

    def test_general_config_rejected(self, rng):
        s = SchlesingerState.general([0, 0.5, 1], [random_traceless(rng) for _ in range(3)], moving=1)
        with pytest.raises(ValueError):
            w_from_residues(s)


class TestWPrime:
    def test_commuting_closed_form(self):
        b0 = np.array([[0, 0.7], [0, 0]])
        b1 = np.array([[0, 0.2], [0, 0]])
        bt = np.array([[0, -0.3], [0, 0]])
        t = 0.4
        s = SchlesingerState.n4_normalized(b0, bt, b1, t)
        # w = t b0 / ((t+1) b0 + t b1 + bt), constant b's
        ref = (0.7 * (0.7 - 0.3)) / ((t + 1) * 0.7 + t * 0.2 - 0.3) ** 2
        assert w_prime_from_flow(s) == pytest.approx(ref, rel=1e-14)

    def test_finite_difference(self, rng):
        s = SchlesingerState.n4_normalized(*(random_traceless(rng, 0.3) for _ in range(3)), 0.4 + 0.1j)
        h = 1e-6
        plus = flow(s, line_path([s.t, s.t + h]), record=False).states[-1]
        minus = flow(s, line_path([s.t, s.t - h]), record=False).states[-1]
        fd = (w_from_residues(plus) - w_from_residues(minus)) / (2 * h)
        assert abs(fd - w_prime_from_flow(s)) <= 1e-6 * abs(fd)

    def test_zero_numerator_product_rule(self):
        b0 = np.array([[0.1, 0], [0.3, -0.1]])
        bt = np.array([[0.2, 0.5], [0.1, -0.2]])
        b1 = np.array([[0, 0.4], [0.3, 0]])
        s = SchlesingerState.n4_normalized(b0, bt, b1, 0.3)
        db0 = (b0 @ bt - bt @ b0) / (0 - 0.3)
        den = (0.3 + 1) * 0 + 0.3 * 0.4 + 0.5
        assert w_prime_from_flow(s) == pytest.approx(0.3 * db0[0, 1] / den, rel=1e-13)


class TestRHS:
    def test_spot_value(self):
        f, expr, syms = symbolic_p6()
        assert p6_rhs(P6Params(0, 0, 0, 0.5), P6State(2, 3, 0)) == pytest.approx(1.5)
        exact = expr.subs(dict(zip(syms, (2, 3, 0, 0, 0, 0, sp.Rational(1, 2)))))
        assert sp.nsimplify(exact) == sp.Rational(3, 2)

    def test_zero(self):
        assert p6_rhs(P6Params(0, 0, 0, 0), P6State(0.3, 0.7 + 0.1j, 0)) == 0

    @pytest.mark.parametrize("state, factor", [
        (P6State(0.4, 0.4, 1), "w-t"),
        (P6State(0.4, 0, 1), "w"),
        (P6State(0.4, 1, 1), "w-1"),
        (P6State(0, 0.3, 1), "t"),
        (P6State(1, 0.3, 1), "t-1"),
    ])
    def test_singular(self, state, factor):
        with pytest.raises(SingularPoint) as exc:
            p6_rhs(P6Params(0.1, 0.2, 0.3, 0.4), state)
        assert exc.value.factor == factor

    def test_symbolic_random(self, rng):
        f, _, _ = symbolic_p6()
        for _ in range(10):
            z = rng.normal(size=7) + 1j * rng.normal(size=7)
            got = p6_rhs(P6Params(*z[3:]), P6State(*z[:3]))
            ref = complex(f(*[complex(x) for x in z]))
            assert got == pytest.approx(ref, rel=1e-12)


class TestIntegrate:
    def test_constant(self):
        traj = p6_integrate(P6Params(0, 0, 0, 0), line_path([0.3, 0.5 + 0.2j]), P6State(0.3, 0.6 + 0.1j, 0))
        assert all(abs(s.w - (0.6 + 0.1j)) <= 1e-14 and s.w_prime == 0 for s in traj.states)

    def test_semigroup(self):
        p = P6Params(0.1 + 0.05j, -0.2, 0.3, 0.25)
        init = P6State(0.3, 0.6 + 0.1j, 0.2)
        full = p6_integrate(p, line_path([0.3, 0.35]), init).states[-1]
        half = p6_integrate(p, line_path([0.3, 0.325]), init).states[-1]
        two = p6_integrate(p, line_path([0.325, 0.35]), half).states[-1]
        assert abs(two.w - full.w) <= 1e-9 and abs(two.w_prime - full.w_prime) <= 1e-8

    def test_start_mismatch(self):
        with pytest.raises(ValueError):
            p6_integrate(P6Params(0, 0, 0, 0), line_path([0.3, 0.5]), P6State(0.2, 0.5, 0))

    def test_movable_pole(self):
        # all parameters zero: w ~ A / (t* - t)^2 near a pole, here t* ~ 0.651
        with pytest.raises(MovablePole) as info:
            p6_integrate(P6Params(0, 0, 0, 0), line_path([0.3, 0.9]), P6State(0.3, 2.0, 10.0))
        assert 0.64 < info.value.location.real < 0.66


class TestCrossValidate:
    def test_commuting(self):
        # B_i = c_i N with sum c_i = 0: all commutators vanish, B_inf = 0
        n = np.array([[0.1, 1.0], [0, -0.1]])
        s = SchlesingerState.n4_normalized(1.0 * n, -0.4 * n, -0.6 * n, 0.5)
        res = flow(s, ComplexPath([GeometricLine(0.5, 0.05)]))
        cv = cross_validate(res.states)
        assert cv.max_rel_dev <= 1e-10

    def test_generic_and_negative_control(self):
        s = admissible_state(np.random.default_rng(0))
        res = flow(s, ComplexPath([GeometricLine(0.5, 0.05)]))
        good = cross_validate(res.states)
        assert good.max_rel_dev <= 1e-6
        bad = cross_validate(res.states, params=good.params.perturbed(alpha=0.1))
        assert bad.max_rel_dev >= 1e-3

    def test_csv(self):
        s = admissible_state(np.random.default_rng(1))
        cv = cross_validate(flow(s, ComplexPath([GeometricLine(0.5, 0.2)])).states)
        buf = io.StringIO()
        cv.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t_re,t_im,w_schlesinger_re,w_schlesinger_im,w_direct_re,w_direct_im,rel_dev,excluded"
        assert len(lines) == len(cv.t) + 1

    def test_admissible_infinity_diagonal(self, rng):
        s = admissible_state(rng, kappa=0.3)
        np.testing.assert_allclose(s.residue_at_infinity, np.diag([0.3, -0.3]), atol=1e-15)
        assert spectral_data(s).lambda_infinity == pytest.approx(0.3)


class TestRatioForm:
    def test_power_case(self):
        s = admissible_state(np.random.default_rng(0), scale=0.1, kappa=0.2)
        # phi straight from the pair monodromy at the ladder start, no refinement
        base = flow(s, ComplexPath([GeometricLine(0.5, 0.1 * cmath.exp(0.3j))]), record=False).states[-1]
        phi, _ = phi_from_monodromy(pair_monodromy(FuchsianSystem.from_state(base), 0, 1), pair_exponent_hint(base))
        chk = ratio_form_check(s, SectorSpec(theta0=0.3), phi, M=2)
        assert chk.case == "power" and len(chk.fresh_t) == 47
        assert chk.passed, (chk.w_error, chk.entry_residual)
