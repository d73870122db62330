"""Monodromy of Fuchsian systems dY/dz = sum_i B_i/(z - a_i) Y.

A generator is the value at the base point of the fundamental matrix
continued around a simple positive loop, starting from Y(base) = I.
Transport along gamma1 followed by gamma2 is T2 @ T1.
"""

from __future__ import annotations

import cmath
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ProductDefect, RadiusTooLarge
from .linalg_core import (
    DEFAULT_TOL,
    I2,
    MatrixKind,
    classify_product,
    cmatrix,
    matrix_to_nested,
    to_pair,
)
from .path_integrator import (
    Arc,
    ComplexPath,
    DEFAULT_TOLERANCE,
    Line,
    ToleranceSpec,
    loop_around,
    transport,
)
from .schlesinger_flow import SchlesingerState, min_gap, DIVISOR_GAP
from .errors import OnDivisor

GENERATOR_RADIUS_FRACTION = 0.4
ANGLE_TIE = 1e-12
RESONANCE_TOL = 1e-4


class ResonanceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FuchsianSystem:
    poles: tuple[complex, ...]
    residues: np.ndarray

    def __post_init__(self):
        poles = tuple(complex(a) for a in self.poles)
        res = np.array(self.residues, dtype=complex)
        if res.shape != (len(poles), 2, 2):
            raise ValueError("need one 2x2 residue per pole")
        if min_gap(poles) <= DIVISOR_GAP:
            raise OnDivisor("poles are not distinct")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "residues", res)

    @classmethod
    def from_state(cls, state: SchlesingerState) -> "FuchsianSystem":
        return cls(state.poles, state.residues)

    def coefficient(self, z: complex) -> np.ndarray:
        w = 1.0 / (complex(z) - np.array(self.poles))
        return np.tensordot(w, self.residues, axes=1)

    def field(self):
        p = np.array(self.poles)
        res = self.residues

        def f(z, y):
            return np.tensordot(1.0 / (z - p), res, axes=1) @ y

        return f

    @property
    def residue_at_infinity(self) -> np.ndarray:
        return -self.residues.sum(axis=0)


def default_base(poles: Sequence[complex]) -> complex:
    return complex(-2.0 * (1.0 + max(abs(complex(a)) for a in poles)))


def _check_base(sys: FuchsianSystem, base: complex) -> None:
    gap = min(abs(base - a) for a in sys.poles)
    if gap <= DIVISOR_GAP:
        raise ValueError(f"base point {base} coincides with a pole")


def generator_loop(sys: FuchsianSystem, pole_index: int, base: complex) -> ComplexPath:
    a = sys.poles[pole_index]
    others = [p for k, p in enumerate(sys.poles) if k != pole_index]
    clear = min([abs(a - p) for p in others] + [abs(a - base)])
    return loop_around(a, base, GENERATOR_RADIUS_FRACTION * clear, others)


def monodromy_generator(sys: FuchsianSystem, pole_index: int, base: complex | None = None,
                        tol: ToleranceSpec = DEFAULT_TOLERANCE) -> np.ndarray:
    base = default_base(sys.poles) if base is None else complex(base)
    _check_base(sys, base)
    path = generator_loop(sys, pole_index, base)
    return transport(sys.field(), path, I2, tol)


def loop_order(poles: Sequence[complex], base: complex) -> list[int]:
    """Indices sorted counterclockwise as seen from ``base``.

    Angles are measured from the direction base -> centroid.  Collinear poles
    (angle tie) are ordered farthest first, matching the side on which the
    generator loops pass nearer obstacles.
    """
    poles = [complex(a) for a in poles]
    c = sum(poles) / len(poles)
    ref = cmath.phase(c - base) if abs(c - base) > 0 else 0.0
    ang = []
    for a in poles:
        th = cmath.phase(a - base) - ref
        th = (th + math.pi) % (2 * math.pi) - math.pi
        ang.append(th)
    idx = list(range(len(poles)))
    idx.sort(key=lambda k: (round(ang[k] / ANGLE_TIE), -abs(poles[k] - base)))
    return idx


def big_loop(poles: Sequence[complex], base: complex) -> ComplexPath:
    """Positive loop from ``base`` around a circle containing every pole."""
    c = sum(complex(a) for a in poles) / len(poles)
    rin = max(abs(complex(a) - c) for a in poles)
    dist = abs(base - c)
    if dist <= 1.05 * rin:
        raise RadiusTooLarge("base point must lie outside the disc containing all poles")
    r = 0.5 * (rin + dist) if rin > 0 else 0.5 * dist
    u = (base - c) / dist
    entry = c + r * u
    th = cmath.phase(u)
    return ComplexPath([Line(base, entry), Arc(c, r, th, th + 2 * math.pi), Line(entry, base)])


@dataclass
class MonodromyData:
    base_point: complex
    generators: list[np.ndarray]
    ordering: list[int]
    g_infinity: np.ndarray
    product_defect: float
    invariants_vector: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.invariants_vector is None:
            self.invariants_vector = invariants_vector(self.generators + [self.g_infinity])

    @property
    def ordered_product(self) -> np.ndarray:
        p = I2.copy()
        for k in self.ordering:
            p = self.generators[k] @ p
        return p

    def to_json(self) -> dict:
        return {
            "base": to_pair(self.base_point),
            "generators": [matrix_to_nested(g) for g in self.generators],
            "g_infinity": matrix_to_nested(self.g_infinity),
            "ordering": list(self.ordering),
            "invariants": [to_pair(z) for z in self.invariants_vector],
            "product_defect": float(self.product_defect),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def invariants_vector(gens: Sequence[np.ndarray]) -> np.ndarray:
    """[tr G_i for all i] ++ [tr(G_i G_j) for i < j]."""
    out = [np.trace(g) for g in gens]
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            out.append(np.trace(gens[i] @ gens[j]))
    return np.array(out, dtype=complex)


def monodromy_set(sys: FuchsianSystem, base: complex | None = None,
                  tol: ToleranceSpec = DEFAULT_TOLERANCE, check: bool = True) -> MonodromyData:
    """All finite generators and G_inf.

    G_inf is the inverse of the transport around an independent large loop,
    so ``product_defect = |G_inf @ (ordered product) - I|`` is a genuine
    consistency check on the generators and their order.
    """
    base = default_base(sys.poles) if base is None else complex(base)
    _check_base(sys, base)
    f = sys.field()
    gens = [transport(f, generator_loop(sys, k, base), I2, tol) for k in range(len(sys.poles))]
    order = loop_order(sys.poles, base)
    t_all = transport(f, big_loop(sys.poles, base), I2, tol)
    g_inf = np.linalg.inv(t_all)
    data = MonodromyData(base, gens, order, g_inf, 0.0)
    prod = data.ordered_product
    # defect of G_inf @ P - I is amplified by the conditioning of the product
    scale = max(1.0, float(np.max(np.abs(prod))) * float(np.max(np.abs(g_inf))))
    data.product_defect = float(np.max(np.abs(g_inf @ prod - I2)))
    limit = 100 * tol.rel * scale
    if check and data.product_defect > limit:
        raise ProductDefect(f"product defect {data.product_defect:.3g} > {limit:.3g}")
    return data


def pair_loop(sys: FuchsianSystem, i: int, j: int, base: complex) -> ComplexPath:
    ai, aj = sys.poles[i], sys.poles[j]
    c = 0.5 * (ai + aj)
    half_sep = 0.5 * abs(ai - aj)
    others = [p for k, p in enumerate(sys.poles) if k not in (i, j)]
    clear = 0.5 * min([abs(c - p) for p in others] + [abs(c - base)])
    if half_sep >= clear:
        raise RadiusTooLarge(f"pair separation {2 * half_sep:.3g} too large for clearance {2 * clear:.3g}")
    r = 0.5 * (half_sep + clear)
    return loop_around(c, base, r, others, enclosed=(ai, aj))


def pair_monodromy(sys: FuchsianSystem, i: int, j: int, base: complex | None = None,
                   tol: ToleranceSpec = DEFAULT_TOLERANCE) -> np.ndarray:
    """Transport around one positive loop enclosing exactly {a_i, a_j}."""
    base = default_base(sys.poles) if base is None else complex(base)
    _check_base(sys, base)
    return transport(sys.field(), pair_loop(sys, i, j, base), I2, tol)


@dataclass(frozen=True)
class DriftReport:
    t_samples: tuple[complex, ...]
    invariants0: np.ndarray
    deviations: tuple[float, ...]
    base: complex

    @property
    def max_drift(self) -> float:
        return max(self.deviations)


def sample_indices(n: int, count: int) -> list[int]:
    if n == 0:
        raise ValueError("empty trajectory")
    count = max(1, min(count, n))
    return sorted(set(int(round(x)) for x in np.linspace(0, n - 1, count)))


BASE_ROTATIONS = (0.0, -0.1, 0.1, -0.2, 0.2, -0.4, 0.4, -0.8, 0.8)


def _keeps_loop_system(states: Sequence[SchlesingerState], base: complex) -> bool:
    # the straight-lasso loop system deforms continuously iff no moving pole
    # crosses (or sits on) a ray from the base through another pole
    signs = {}
    for st in states:
        p = np.array(st.poles)
        mv = st.config.velocity
        for i in range(len(p)):
            for j in range(i):
                if mv[i] == mv[j] == 0:
                    continue
                q = (p[i] - base) / (p[j] - base)
                if abs(q.imag) <= 1e-9 * abs(q):
                    return False
                s = q.imag > 0
                if signs.setdefault((i, j), s) != s:
                    return False
    return True


def select_base(states: Sequence[SchlesingerState]) -> complex:
    """Default-style base point for which the loop system is the same along
    the whole trajectory, so every generator is continued continuously."""
    r = abs(default_base([a for st in states for a in st.poles]))
    for rot in BASE_ROTATIONS:
        base = -r * cmath.exp(1j * rot)
        if _keeps_loop_system(states, base):
            return base
    warnings.warn("no base point keeps the loop system fixed; pair-product traces may jump", RuntimeWarning,
                  stacklevel=2)
    return complex(-r)


def isomonodromy_drift(traj: Sequence[SchlesingerState], sample_count: int = 8, base: complex | None = None,
                       tol: ToleranceSpec = DEFAULT_TOLERANCE) -> DriftReport:
    """Max deviation of invariants_vector over ``sample_count`` states evenly
    spread along ``traj`` (first and last included).

    Without an explicit ``base`` one is chosen by :func:`select_base`; for a
    base through whose pole rays the moving pole passes, tr(G_i G_j) picks up
    braid-group changes that are not monodromy drift.
    """
    states = list(traj)
    picks = [states[k] for k in sample_indices(len(states), sample_count)]
    if base is None:
        base = select_base(states)
    inv = [monodromy_set(FuchsianSystem.from_state(st), base, tol, check=False).invariants_vector for st in picks]
    dev = tuple(float(np.max(np.abs(v - inv[0]))) for v in inv)
    return DriftReport(tuple(st.t for st in picks), inv[0], dev, complex(base))


# --- exponent of the merged pair ----------------------------------------

POWER, LOGARITHMIC, RESONANT = "Power", "Logarithmic", "Resonant"


def _reduce_mod2(z: complex) -> complex:
    # representative with Re in (-1, 1]
    k = math.ceil((z.real - 1.0) / 2.0)
    return z - 2 * k


def phi_from_monodromy(m_pair, hint: complex | None = None, tol: float = DEFAULT_TOL,
                       pair_trace: complex = 0.0) -> tuple[complex | None, str]:
    """Exponent phi (difference of local exponents of the merged pair) from
    its monodromy.

    With eigenvalues mu_1 = e^{2 pi i l1}, mu_2 = e^{2 pi i l2} and
    l1 + l2 = ``pair_trace``, phi = l1 - l2 is fixed modulo 2 up to sign.  The
    representative with |Re phi| < 1 is returned; the sign is the one nearer
    ``hint``, else Re phi >= 0.  A Jordan block yields (None, Logarithmic).
    ``tol`` is the classification tolerance for the monodromy matrix.
    """
    m = cmatrix(m_pair)
    kind = classify_product(m, tol)
    if kind is MatrixKind.JORDAN:
        return None, LOGARITHMIC
    if kind is MatrixKind.SCALAR:
        if hint is None or abs(hint) < 0.5:
            return 0j, POWER
        warnings.warn("scalar pair monodromy with nonzero exponent hint", ResonanceWarning, stacklevel=2)
        return 0j, RESONANT
    mu = np.linalg.eigvals(m)
    c = _reduce_mod2(2 * cmath.log(mu[0]) / (2j * math.pi) - pair_trace)
    cands = [c, -c]
    if hint is not None:
        phi = min(cands, key=lambda z: abs(z - hint))
    else:
        phi = max(cands, key=lambda z: (round(z.real, 12), z.imag))
    phi = complex(phi)
    if abs(phi) < RESONANCE_TOL or abs(abs(phi.real) - 1.0) < RESONANCE_TOL and abs(phi.imag) < RESONANCE_TOL:
        warnings.warn(f"resonant exponent phi = {phi:.6g}", ResonanceWarning, stacklevel=2)
        return phi, RESONANT
    return phi, POWER


def pair_exponent_hint(state: SchlesingerState, i: int = 0, j: int = 1) -> complex:
    """Eigenvalue difference of B_i + B_j (Re >= 0 representative)."""
    ev = np.linalg.eigvals(state.residues[i] + state.residues[j])
    d = complex(ev[0] - ev[1])
    return d if (round(d.real, 12), d.imag) >= (0, 0) else -d
