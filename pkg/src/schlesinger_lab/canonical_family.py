"""Two-pole family B_i'(t) = t^{s B_inf} B_i t^{-s B_inf}, B_inf = -(B0 + Bt).

The residues B0, Bt sit at poles 0 and t.  Conjugation by a function of
B_inf keeps B0' + Bt' fixed, so B_inf is the same for every t.  Only one
sign ``s`` turns the family into a solution of the two-pole Schlesinger
system; :data:`GAUGE_SIGN` records it and a regression test re-derives it.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np

from .errors import CondBViolated, NumericalError, ZeroBase
from .linalg_core import (
    DEFAULT_TOL,
    PRINCIPAL,
    SIGMA3,
    LogBranch,
    MatrixKind,
    NearDefectiveWarning,
    cmatrix,
    commutator,
    eig2,
    mat_power,
    norm,
)

# d/dt t^{sB} = (sB/t) t^{sB} makes dB_i'/dt = (s/t)[B_inf, B_i']; the
# two-pole Schlesinger system asks for dB0'/dt = -[B0', Bt']/t, hence s = -1.
GAUGE_SIGN = -1

LIMIT_CIRCLE_POINTS = 16
# |t| window for the defect slope: deep enough that the O(1) part of B_t'
# no longer bends the log-log line when |Re(l1 - l2)| is small
SLOPE_RADII = tuple(np.logspace(-6, -12, 13))


def residue_at_infinity(b0, bt) -> np.ndarray:
    return -(cmatrix(b0) + cmatrix(bt))


def _check_t(t: complex) -> complex:
    t = complex(t)
    if t == 0:
        raise ZeroBase("family undefined at t = 0")
    return t


def conjugation_route(b0, bt, t: complex, gauge_sign: int = GAUGE_SIGN,
                      branch: LogBranch = PRINCIPAL) -> tuple[np.ndarray, np.ndarray]:
    t = _check_t(t)
    binf = residue_at_infinity(b0, bt)
    x = mat_power(gauge_sign * binf, t, branch)
    xinv = mat_power(-gauge_sign * binf, t, branch)
    return x @ cmatrix(b0) @ xinv, x @ cmatrix(bt) @ xinv


def _conjugate_diag(c: np.ndarray, ratio: complex) -> np.ndarray:
    # diag(t^{s l1}, t^{s l2}) C diag(...)^{-1}, ratio = t^{s(l1 - l2)}
    return np.array([[c[0, 0], c[0, 1] * ratio], [c[1, 0] / ratio, c[1, 1]]])


def _conjugate_jordan(c: np.ndarray, log_t: complex) -> np.ndarray:
    # [[1, L], [0, 1]] C [[1, -L], [0, 1]] with L = s ln t
    b11, b12, b21, b22 = c[0, 0], c[0, 1], c[1, 0], c[1, 1]
    L = log_t
    return np.array([
        [b11 + b21 * L, b12 + (b22 - b11) * L - b21 * L * L],
        [b21, b22 - b21 * L],
    ])


def explicit_route(b0, bt, t: complex, gauge_sign: int = GAUGE_SIGN, branch: LogBranch = PRINCIPAL,
                   tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Entry formulas in the eigen (or Jordan) basis of B_inf."""
    t = _check_t(t)
    b0, bt = cmatrix(b0), cmatrix(bt)
    binf = -(b0 + bt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearDefectiveWarning)
        es = eig2(binf, tol)
    if es.kind is MatrixKind.SCALAR:
        return b0.copy(), bt.copy()
    log_t = gauge_sign * branch.log(t)
    if es.kind is MatrixKind.JORDAN:
        p = es.jordan_basis
        conj = lambda c: _conjugate_jordan(c, log_t)
    else:
        p = es.eigenvectors
        l1, l2 = es.eigenvalues
        ratio = np.exp((l1 - l2) * log_t)
        conj = lambda c: _conjugate_diag(c, ratio)
    pinv = np.linalg.inv(p)
    return tuple(p @ conj(pinv @ b @ p) @ pinv for b in (b0, bt))


class CanonicalPair(NamedTuple):
    b0: np.ndarray
    bt: np.ndarray
    route_discrepancy: float


def conjugated_residues(b0, bt, t: complex, gauge_sign: int = GAUGE_SIGN, branch: LogBranch = PRINCIPAL,
                        check: bool = True) -> CanonicalPair:
    """(B0', Bt') by matrix-power conjugation, cross-checked against the entry
    formulas.  ``route_discrepancy`` is relative to max(1, |B'|)."""
    if gauge_sign not in (1, -1):
        raise ValueError("gauge_sign must be +1 or -1")
    a = conjugation_route(b0, bt, t, gauge_sign, branch)
    b = explicit_route(b0, bt, t, gauge_sign, branch)
    scale = max(1.0, norm(a[0]), norm(a[1]))
    disc = max(norm(a[0] - b[0]), norm(a[1] - b[1])) / scale
    if check:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearDefectiveWarning)
            es = eig2(residue_at_infinity(b0, bt))
        near = es.kind is MatrixKind.DIAGONALIZABLE and abs(es.eigenvalues[0] - es.eigenvalues[1]) < 1e-6
        limit = 1e-8 if near or es.kind is MatrixKind.JORDAN else 1e-10
        if disc > limit:
            raise NumericalError(f"conjugation routes disagree by {disc:.3g}")
    return CanonicalPair(a[0], a[1], disc)


def two_point_rhs(b0p, btp, t: complex) -> tuple[np.ndarray, np.ndarray]:
    """Schlesinger field for poles {0, t}: (dB0/dt, dBt/dt)."""
    c = commutator(b0p, btp) / t
    return -c, c


def schlesinger_residual_2pt(b0, bt, t: complex, gauge_sign: int = GAUGE_SIGN,
                             branch: LogBranch = PRINCIPAL) -> float:
    """max_i |d/dt B_i' - F_i| / max(1, |d/dt B_i'|, |F_i|), F the two-pole
    Schlesinger field, using the analytic derivative (s B_inf / t) t^{s B_inf}.

    The normalization makes the value scale free: entries of B_i' grow like
    |t|^{-|Re(l1 - l2)|}, and the wrong sign gives deriv = -F, i.e. about 2.
    """
    t = _check_t(t)
    b0p, btp = conjugation_route(b0, bt, t, gauge_sign, branch)
    binf = residue_at_infinity(b0, bt)
    rhs = two_point_rhs(b0p, btp, t)
    out = 0.0
    for bp, r in zip((b0p, btp), rhs):
        deriv = gauge_sign / t * commutator(binf, bp)
        out = max(out, norm(deriv - r) / max(1.0, norm(deriv), norm(r)))
    return out


def select_gauge_sign(b0, bt, t: complex = 0.5) -> int:
    """Sign with the smaller two-point Schlesinger residual."""
    return min((1, -1), key=lambda s: schlesinger_residual_2pt(b0, bt, t, s))


def exponent_gap(b0, bt) -> complex:
    ev = np.linalg.eigvals(residue_at_infinity(b0, bt))
    return complex(ev[0] - ev[1])


def limit_defect(b0, bt, t: complex, gauge_sign: int = GAUGE_SIGN, branch: LogBranch = PRINCIPAL,
                 n_points: int = LIMIT_CIRCLE_POINTS) -> float:
    """sup over |z| = 1 of |B0'/z + Bt'/(z - t) - (B0 + Bt)/z|.

    The limiting Euler system has residue B0 + Bt = -B_inf at z = 0 (the
    residue at infinity stays B_inf).
    """
    t = _check_t(t)
    gap = exponent_gap(b0, bt)
    if abs(gap.real) >= 1:
        raise CondBViolated(f"|Re(l1 - l2)| = {abs(gap.real):.6g} >= 1")
    b0p, btp = conjugation_route(b0, bt, t, gauge_sign, branch)
    total = cmatrix(b0) + cmatrix(bt)
    zs = np.exp(2j * math.pi * np.arange(n_points) / n_points)
    return max(norm(b0p / z + btp / (z - t) - total / z) for z in zs)


def loglog_slope(ts, values) -> float:
    """Least-squares slope of log(values) against log|t|."""
    x = np.log(np.abs(np.asarray(ts)))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def pair_with_exponent_gap(delta: complex, rng: np.random.Generator, scale: float = 0.5,
                           jordan: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Random traceless (B0, Bt) with B0 + Bt similar to diag(delta/2, -delta/2)
    (or to a nilpotent Jordan block when ``jordan``)."""
    def rand():
        return rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))

    p = rand()
    while abs(np.linalg.det(p)) < 0.3:
        p = rand()
    core = np.array([[0, 1], [0, 0]], dtype=complex) if jordan else 0.5 * delta * SIGMA3
    total = p @ core @ np.linalg.inv(p)
    b0 = scale * rand()
    b0 -= np.trace(b0) / 2 * np.eye(2)
    return b0, total - b0


def random_traceless(rng: np.random.Generator, scale: float) -> np.ndarray:
    a = scale * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    return a - np.trace(a) / 2 * np.eye(2)


def jordan_pair_state(rng: np.random.Generator, t0: complex = 0.1, scale: float = 0.15,
                      nilpotent_scale: float = 0.3, newton_tol: float = 1e-13, max_iter: int = 30):
    """n=4 normalized state whose {0, t} pair monodromy is a Jordan block.

    Starts from the Jordan case of the two-pole family (B0 + Bt nilpotent),
    adds a generic B1, and restores a unipotent pair monodromy by a Newton
    shot on c in Bt -> Bt + c sigma_3 (tr M_pair(c) = 2).
    """
    from .monodromy import FuchsianSystem, pair_monodromy
    from .schlesinger_flow import SchlesingerState

    p = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    nil = nilpotent_scale * p @ np.array([[0, 1], [0, 0]]) @ np.linalg.inv(p)
    b0 = random_traceless(rng, scale)
    b1 = random_traceless(rng, scale)
    bt_base = -nil - b0

    def state(c):
        return SchlesingerState.n4_normalized(b0, bt_base + c * SIGMA3, b1, t0)

    def resid(c):
        return np.trace(pair_monodromy(FuchsianSystem.from_state(state(c)), 0, 1)) - 2

    c, f = 0j, resid(0j)
    for _ in range(max_iter):
        if abs(f) < newton_tol:
            return state(c)
        h = 1e-6
        df = (resid(c + h) - f) / h
        c -= f / df
        f = resid(c)
    if abs(f) < 1e3 * newton_tol:
        return state(c)
    raise NumericalError(f"Jordan shooting did not converge (|tr - 2| = {abs(f):.3g})")
