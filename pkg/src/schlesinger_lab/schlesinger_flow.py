"""Schlesinger vector field and its integration in the deformation parameter.

For poles ``a_i`` moving with velocities ``v_i`` (1 for moving poles, 0 for
fixed ones) the residues evolve by

    dB_i/dt = - sum_{j != i} [B_i, B_j] (v_i - v_j) / (a_i - a_j).

With a single moving pole ``a_m = t`` this is ``dB_i/dt = [B_i, B_m]/(a_i - t)``
for ``i != m`` and ``dB_m/dt = -sum_{j != m} [B_m, B_j]/(t - a_j)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import OnDivisor
from .linalg_core import DEFAULT_TOL, cmatrix, commutator
from .path_integrator import (
    Arc,
    ComplexPath,
    DEFAULT_TOLERANCE,
    GeometricLine,
    Line,
    ToleranceSpec,
    integrate_ode,
)

DIVISOR_GAP = 1e-12
# Flows stop this far (relative to the configuration diameter) from a collision.
DEFAULT_CLEARANCE = 1e-9

N4_LABELS = ("0", "t", "1")


@dataclass(frozen=True)
class PoleConfiguration:
    finite_poles: tuple[complex, ...]
    moving_mask: tuple[bool, ...]
    has_pole_at_infinity: bool = True

    def __post_init__(self):
        poles = tuple(complex(a) for a in self.finite_poles)
        object.__setattr__(self, "finite_poles", poles)
        object.__setattr__(self, "moving_mask", tuple(bool(m) for m in self.moving_mask))
        if len(self.moving_mask) != len(poles):
            raise ValueError("moving_mask length must match pole count")
        gap = min_gap(poles)
        if gap <= DIVISOR_GAP:
            raise OnDivisor(f"poles collide (min gap {gap:.3g})")

    @property
    def velocity(self) -> np.ndarray:
        return np.array(self.moving_mask, dtype=float)

    @property
    def diameter(self) -> float:
        p = self.finite_poles
        return max((abs(a - b) for a in p for b in p), default=0.0)

    def shifted(self, dt: complex) -> "PoleConfiguration":
        moved = tuple(a + dt if m else a for a, m in zip(self.finite_poles, self.moving_mask))
        return replace(self, finite_poles=moved)


def min_gap(poles: Sequence[complex]) -> float:
    p = list(poles)
    return min((abs(p[i] - p[j]) for i in range(len(p)) for j in range(i)), default=math.inf)


@dataclass(frozen=True)
class SchlesingerState:
    config: PoleConfiguration
    residues: np.ndarray
    t: complex
    labels: tuple[str, ...] | None = None
    normalized: bool = False

    def __post_init__(self):
        r = np.array(self.residues, dtype=complex)
        if r.ndim != 3 or r.shape[1:] != (2, 2):
            raise ValueError("residues must have shape (n, 2, 2)")
        if len(r) != len(self.config.finite_poles):
            raise ValueError("residue count must equal finite pole count")
        if not np.all(np.isfinite(r)):
            raise ValueError("non-finite residue entries")
        object.__setattr__(self, "residues", r)
        object.__setattr__(self, "t", complex(self.t))
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(len(r))))

    @classmethod
    def n4_normalized(cls, B0, Bt, B1, t: complex) -> "SchlesingerState":
        """Poles at 0, t, 1 (and infinity); residues ordered (B0, Bt, B1)."""
        config = PoleConfiguration((0.0, t, 1.0), (False, True, False))
        res = np.stack([cmatrix(B0), cmatrix(Bt), cmatrix(B1)])
        return cls(config, res, t, labels=N4_LABELS, normalized=True)

    @classmethod
    def general(cls, poles, residues, moving, t: complex | None = None) -> "SchlesingerState":
        """``moving`` is a pole index or a boolean mask.  With one moving pole
        ``t`` defaults to its position."""
        n = len(poles)
        if isinstance(moving, (int, np.integer)):
            mask = tuple(i == moving for i in range(n))
        else:
            mask = tuple(bool(m) for m in moving)
        config = PoleConfiguration(tuple(poles), mask)
        if t is None:
            idx = [i for i, m in enumerate(mask) if m]
            t = config.finite_poles[idx[0]] if len(idx) == 1 else 0.0
        res = np.stack([cmatrix(b) for b in residues])
        return cls(config, res, t)

    @property
    def poles(self) -> tuple[complex, ...]:
        return self.config.finite_poles

    @property
    def B0(self) -> np.ndarray:
        return self.residues[0]

    @property
    def Bt(self) -> np.ndarray:
        return self.residues[1]

    @property
    def B1(self) -> np.ndarray:
        return self.residues[2]

    @property
    def residue_at_infinity(self) -> np.ndarray:
        return -self.residues.sum(axis=0)

    def at(self, t: complex, residues) -> "SchlesingerState":
        return replace(self, config=self.config.shifted(complex(t) - self.t), residues=residues, t=t)

    def residue(self, label: str) -> np.ndarray:
        return self.residues[self.labels.index(label)]


def _moving_rhs(poles: np.ndarray, res: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    moving = np.flatnonzero(velocity)
    out = np.zeros_like(res)
    if len(moving) == 1:
        m = moving[0]
        bm = res[m]
        c = res @ bm - bm @ res  # [B_i, B_m]
        d = poles - poles[m]
        d[m] = 1.0
        if np.min(np.abs(d)) <= DIVISOR_GAP:
            raise OnDivisor(f"moving pole {poles[m]} hits the divisor")
        w = 1.0 / d
        w[m] = 0.0
        out = c * w[:, None, None]
        out[m] = -out.sum(axis=0)
        return out
    n = len(poles)
    for i in range(n):
        for j in range(i):
            dv = velocity[i] - velocity[j]
            if dv == 0:
                continue
            gap = poles[i] - poles[j]
            if abs(gap) <= DIVISOR_GAP:
                raise OnDivisor(f"poles {poles[i]} and {poles[j]} collide")
            c = commutator(res[i], res[j]) * (dv / gap)
            out[i] -= c
            out[j] += c
    return out


def schlesinger_rhs(state: SchlesingerState) -> np.ndarray:
    """dB_i/dt for every residue, shape (n, 2, 2)."""
    return _moving_rhs(np.array(state.poles), state.residues, state.config.velocity)


def _divisor_distance(config: PoleConfiguration, dt: complex) -> float:
    p = np.array(config.finite_poles)
    v = config.velocity
    moved = p + v * dt
    dist = math.inf
    for i in np.flatnonzero(v):
        for j in np.flatnonzero(v == 0):
            dist = min(dist, abs(moved[i] - moved[j]))
    return dist


def _cut(seg, s: float):
    if isinstance(seg, Line):
        return Line(seg.start, seg.point(s))
    if isinstance(seg, GeometricLine):
        return GeometricLine(seg.start, seg.point(s))
    return Arc(seg.center, seg.radius, seg.angle_start, seg.angle_start + s * (seg.angle_end - seg.angle_start))


def truncate_at_clearance(config: PoleConfiguration, t0: complex, path: ComplexPath,
                          clearance: float) -> tuple[ComplexPath, bool]:
    """Cut ``path`` where the moving poles first come within ``clearance`` of a
    fixed pole."""
    kept = []
    for seg in path.segments:
        s_grid = np.linspace(0.0, 1.0, 257)
        dist = np.array([_divisor_distance(config, seg.point(s) - t0) for s in s_grid])
        bad = np.flatnonzero(dist < clearance)
        if len(bad) == 0:
            kept.append(seg)
            continue
        k = bad[0]
        if k == 0:
            break
        lo, hi = s_grid[k - 1], s_grid[k]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _divisor_distance(config, seg.point(mid) - t0) < clearance:
                hi = mid
            else:
                lo = mid
        kept.append(_cut(seg, lo))
        return ComplexPath(kept), True
    if not kept:
        raise OnDivisor(f"path starts within clearance {clearance:.3g} of the divisor")
    return ComplexPath(kept), len(kept) < len(path.segments)


@dataclass
class FlowResult:
    """States at accepted integrator steps; ``nodes`` index the states at
    segment endpoints of ``path`` (which may be truncated)."""

    states: list[SchlesingerState]
    nodes: list[int]
    path: ComplexPath
    truncated: bool = False
    n_steps: int = 0

    def __iter__(self) -> Iterator[SchlesingerState]:
        return iter(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, k):
        return self.states[k]

    @property
    def reached_t(self) -> complex:
        return self.states[-1].t

    @property
    def node_states(self) -> list[SchlesingerState]:
        return [self.states[k] for k in self.nodes]


def flow(state0: SchlesingerState, t_path: ComplexPath, tol: ToleranceSpec = DEFAULT_TOLERANCE,
         clearance: float | None = None, rhs_scale: float = 1.0, record: bool = True) -> FlowResult:
    """Integrate the Schlesinger system along ``t_path`` (which must start at
    ``state0.t``).  Paths entering the clearance zone of the divisor are cut
    there and the result is flagged ``truncated``.

    ``rhs_scale`` multiplies the vector field; anything but 1 leaves the
    isomonodromic family and exists only for negative controls.
    """
    if abs(t_path.start - state0.t) > 1e-12 * max(1.0, abs(state0.t)):
        raise ValueError(f"path starts at {t_path.start}, state is at t={state0.t}")
    if clearance is None:
        clearance = DEFAULT_CLEARANCE * max(state0.config.diameter, 1.0)
    path, truncated = truncate_at_clearance(state0.config, state0.t, t_path, clearance)
    base_poles = np.array(state0.poles)
    velocity = state0.config.velocity
    t0 = state0.t

    def field_fn(t, res):
        return rhs_scale * _moving_rhs(base_poles + velocity * (t - t0), res, velocity)

    _, traj = integrate_ode(field_fn, path, state0.residues, tol, record=record)
    states = [state0.at(t, r) for t, r in zip(traj.z, traj.y)]
    return FlowResult(states, [int(k) for k in traj.nodes], path, truncated, traj.n_steps)


# --- conservation ---------------------------------------------------------

@dataclass(frozen=True)
class SpectralData:
    lambda_per_pole: tuple[complex, ...]
    lambda_infinity: complex


def canonical_eigenvalue(a, tol: float = DEFAULT_TOL) -> complex:
    """Eigenvalue with Re >= 0 (ties: Im >= 0); for traceless matrices this is
    the representative of the pair +-lambda."""
    ev = np.linalg.eigvals(np.asarray(a))
    ev = sorted(ev, key=lambda z: (round(z.real / tol) if tol else z.real, z.imag), reverse=True)
    return complex(ev[0])


def spectral_data(state: SchlesingerState, tol: float = DEFAULT_TOL) -> SpectralData:
    """Local-exponent data.  When the residue at infinity is diagonal its
    (1,1) entry is reported as lambda_infinity; that sign enters alpha of
    Painleve VI and must match the frame in which w is read off."""
    lam = tuple(canonical_eigenvalue(b, tol) for b in state.residues)
    binf = state.residue_at_infinity
    scale = max(1.0, float(np.max(np.abs(binf))))
    if abs(binf[0, 1]) <= tol * scale and abs(binf[1, 0]) <= tol * scale:
        linf = complex(binf[0, 0])
    else:
        linf = canonical_eigenvalue(binf, tol)
    return SpectralData(lam, linf)


def _pair_drift(ref: np.ndarray, cur: np.ndarray) -> float:
    return min(max(abs(ref[0] - cur[0]), abs(ref[1] - cur[1])),
               max(abs(ref[0] - cur[1]), abs(ref[1] - cur[0])))


@dataclass(frozen=True)
class ConservationReport:
    eigenvalue_drift: tuple[float, ...]
    sum_drift: float
    pair_trace_drift: float
    pair: tuple[int, int] | None
    pair_trace_conserved: bool
    threshold: float
    breached: bool

    @property
    def max_drift(self) -> float:
        drifts = list(self.eigenvalue_drift) + [self.sum_drift]
        if self.pair_trace_conserved:
            drifts.append(self.pair_trace_drift)
        return max(drifts)


def merging_pair(state: SchlesingerState) -> tuple[int, int] | None:
    """(fixed pole closest to the moving pole, moving pole)."""
    v = state.config.velocity
    moving = np.flatnonzero(v)
    fixed = np.flatnonzero(v == 0)
    if len(moving) != 1 or len(fixed) == 0:
        return None
    m = int(moving[0])
    p = np.array(state.poles)
    j = int(fixed[np.argmin(np.abs(p[fixed] - p[m]))])
    return (j, m)


def conservation_report(traj: Iterable[SchlesingerState], threshold: float = 1e-8) -> ConservationReport:
    """Max drift along ``traj`` of (a) each residue's eigenvalue pair, (b) the
    residue sum, (c) tr(B_i B_j) for the merging pair.

    (c) is a first integral only when the system has exactly two finite poles;
    otherwise it is reported but does not count toward ``breached``.
    """
    states = list(traj)
    if not states:
        raise ValueError("empty trajectory")
    first = states[0]
    ev0 = [np.linalg.eigvals(b) for b in first.residues]
    sum0 = first.residues.sum(axis=0)
    pair = merging_pair(first)
    tr0 = np.trace(first.residues[pair[0]] @ first.residues[pair[1]]) if pair else 0.0
    ev_drift = np.zeros(len(ev0))
    sum_drift = pair_drift = 0.0
    for st in states:
        for i, b in enumerate(st.residues):
            ev_drift[i] = max(ev_drift[i], _pair_drift(ev0[i], np.linalg.eigvals(b)))
        sum_drift = max(sum_drift, float(np.max(np.abs(st.residues.sum(axis=0) - sum0))))
        if pair:
            pair_drift = max(pair_drift, abs(np.trace(st.residues[pair[0]] @ st.residues[pair[1]]) - tr0))
    conserved = len(first.poles) == 2
    drifts = list(ev_drift) + [sum_drift] + ([pair_drift] if conserved else [])
    return ConservationReport(tuple(float(x) for x in ev_drift), sum_drift, float(pair_drift), pair,
                              conserved, threshold, bool(max(drifts) > threshold))


# --- CSV ------------------------------------------------------------------

def trajectory_columns(state: SchlesingerState) -> list[str]:
    cols = ["t_re", "t_im"]
    for lab in state.labels:
        for k in (1, 2):
            for l in (1, 2):
                cols += [f"b_{lab}_{k}{l}_re", f"b_{lab}_{k}{l}_im"]
    return cols


def state_row(state: SchlesingerState) -> list[float]:
    row = [state.t.real, state.t.imag]
    for z in state.residues.reshape(-1):
        row += [float(z.real), float(z.imag)]
    return row


def write_trajectory_csv(traj: Iterable[SchlesingerState], dest) -> None:
    states = list(traj)
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh)
        w.writerow(trajectory_columns(states[0]))
        for st in states:
            w.writerow([repr(x) for x in state_row(st)])
    finally:
        if own:
            fh.close()


def read_trajectory_csv(src) -> tuple[list[str], np.ndarray]:
    """Returns (residue labels, array of shape (K, 1 + 4n)) with complex t first."""
    text = Path(src).read_text() if isinstance(src, (str, Path)) else src.read()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    labels = []
    for name in header[2::8]:
        labels.append(name.split("_")[1])
    data = body[:, 0::2] + 1j * body[:, 1::2]
    return labels, data


def swap_zero_one(state: SchlesingerState) -> SchlesingerState:
    """Relabel via z -> 1 - z: t -> 1 - t, B0 <-> B1 (residue at infinity fixed)."""
    if not state.normalized:
        raise ValueError("only defined for the (0, t, 1) normalized configuration")
    return SchlesingerState.n4_normalized(state.B1, state.Bt, state.B0, 1 - state.t)
