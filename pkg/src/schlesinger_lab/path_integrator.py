"""Adaptive Runge-Kutta transport along piecewise-smooth complex paths.

A :class:`ComplexPath` is a chain of segments, each parametrized by
``s in [0, 1]``.  :func:`integrate_ode` solves ``dY/dz = field(z, Y)``
along the path with the Dormand-Prince 5(4) pair and a PI step-size
controller.  ``Y`` may be a scalar, vector or any stacked matrix array.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import MaxStepsExceeded, RadiusTooLarge, StepUnderflow

TWO_PI = 2 * math.pi
CONTIGUITY_TOL = 1e-12
# Collinearity threshold (relative) shared by detours and generator ordering.
COLLINEAR_EPS = 1e-12


# --- segments -------------------------------------------------------------

@dataclass(frozen=True)
class Line:
    start: complex
    end: complex

    def point(self, s: float) -> complex:
        return self.start + s * (self.end - self.start)

    def tangent(self, s: float) -> complex:
        return self.end - self.start

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    def reversed(self) -> "Line":
        return Line(self.end, self.start)


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    angle_start: float
    angle_end: float

    @property
    def start(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.angle_start)

    @property
    def end(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.angle_end)

    def point(self, s: float) -> complex:
        a = self.angle_start + s * (self.angle_end - self.angle_start)
        return self.center + self.radius * cmath.exp(1j * a)

    def tangent(self, s: float) -> complex:
        return 1j * (self.angle_end - self.angle_start) * (self.point(s) - self.center)

    @property
    def length(self) -> float:
        return self.radius * abs(self.angle_end - self.angle_start)

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.angle_end, self.angle_start)


@dataclass(frozen=True)
class GeometricLine:
    """z(s) = start * exp(s * log(end/start)): uniform steps in log z.

    On a ray through the origin this is the straight segment, traversed at
    a rate proportional to |z|, which keeps steps well conditioned when the
    field scales like 1/z.
    """

    start: complex
    end: complex

    def __post_init__(self):
        if self.start == 0 or self.end == 0:
            raise ValueError("GeometricLine endpoints must be nonzero")

    @property
    def log_ratio(self) -> complex:
        return cmath.log(self.end / self.start)

    def point(self, s: float) -> complex:
        if s == 1.0:
            return self.end
        return self.start * cmath.exp(s * self.log_ratio)

    def tangent(self, s: float) -> complex:
        return self.log_ratio * self.point(s)

    @property
    def length(self) -> float:
        lr = self.log_ratio
        if abs(lr.real) < 1e-14:
            return abs(lr) * abs(self.start)
        return abs(lr) * abs(self.start) * math.expm1(lr.real) / lr.real

    def reversed(self) -> "GeometricLine":
        return GeometricLine(self.end, self.start)


Segment = Line | Arc | GeometricLine


class ComplexPath:
    """Ordered chain of segments sharing endpoints."""

    def __init__(self, segments: Iterable[Segment]):
        self.segments: tuple[Segment, ...] = tuple(segments)
        if not self.segments:
            raise ValueError("path needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            gap = abs(a.end - b.start)
            if gap > CONTIGUITY_TOL * max(1.0, abs(a.end)):
                raise ValueError(f"segments not contiguous (gap {gap:.3g} at {a.end})")
        total = self.length
        if not (math.isfinite(total) and total > 0):
            raise ValueError("path length must be finite and positive")

    @property
    def start(self) -> complex:
        return self.segments[0].start

    @property
    def end(self) -> complex:
        return self.segments[-1].end

    @property
    def length(self) -> float:
        return float(sum(seg.length for seg in self.segments))

    def reversed(self) -> "ComplexPath":
        return ComplexPath(seg.reversed() for seg in reversed(self.segments))

    def __add__(self, other: "ComplexPath") -> "ComplexPath":
        return ComplexPath(self.segments + other.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __repr__(self) -> str:
        return f"ComplexPath({len(self.segments)} segments, {self.start} -> {self.end})"

    def sample(self, per_segment: int = 64) -> np.ndarray:
        pts = [self.start]
        for seg in self.segments:
            pts.extend(seg.point(s) for s in np.linspace(0, 1, per_segment + 1)[1:])
        return np.array(pts)

    def winding_number(self, p: complex, per_segment: int = 512) -> float:
        """Winding number about ``p`` from the accumulated argument of z - p."""
        z = self.sample(per_segment) - p
        dphi = np.angle(z[1:] / z[:-1])
        return float(np.sum(dphi) / TWO_PI)


def line_path(points: Sequence[complex]) -> ComplexPath:
    return ComplexPath(Line(a, b) for a, b in zip(points, points[1:]))


def geometric_ladder(points: Sequence[complex]) -> ComplexPath:
    return ComplexPath(GeometricLine(a, b) for a, b in zip(points, points[1:]))


# --- loops ----------------------------------------------------------------

def side_of(base: complex, target: complex, point: complex) -> int:
    """+1 if ``point`` lies left of (or on) the directed line base->target, else -1."""
    d = target - base
    q = (np.conj(d) * (point - base)).imag / abs(d)
    return 1 if q >= -COLLINEAR_EPS * max(1.0, abs(point - base)) else -1


def _detoured(start: complex, stop: complex, obstacles: Sequence[tuple[complex, float]]) -> list[Segment]:
    """Straight segment start->stop, with each obstacle disc it crosses bypassed
    by the minor arc on the side the segment already lies (homotopy preserved);
    a disc centred exactly on the line is passed keeping it on the left."""
    length = abs(stop - start)
    d = (stop - start) / length
    phi = cmath.phase(d)
    hits = []
    for o, rho in obstacles:
        if abs(start - o) <= rho or abs(stop - o) <= rho:
            raise RadiusTooLarge(f"path endpoint inside clearance disc of {o}")
        w = o - start
        p = (np.conj(d) * w).real
        q = (np.conj(d) * w).imag
        if abs(q) >= rho:
            continue
        h = math.sqrt(rho * rho - q * q)
        if p + h <= 0 or p - h >= length:
            continue
        left = side_of(start, stop, o) > 0
        qq = max(q, 0.0) if left else q
        half = math.atan2(h, abs(qq))
        if left:
            a0 = phi - math.pi / 2 - half
            sweep = 2 * half
        else:
            a0 = phi + math.pi / 2 + half
            sweep = -2 * half
        hits.append((p - h, Arc(o, rho, a0, a0 + sweep)))
    hits.sort(key=lambda x: x[0])
    segs: list[Segment] = []
    cur = start
    for _, arc in hits:
        segs.append(Line(cur, arc.start))
        segs.append(arc)
        cur = arc.end
    segs.append(Line(cur, stop))
    return segs


def obstacle_discs(points: Sequence[complex], base: complex, center: complex, radius: float,
                   fraction: float = 0.4) -> list[tuple[complex, float]]:
    """Clearance discs around ``points``; pairwise disjoint and disjoint from the
    base point and from the loop circle |z - center| = radius."""
    discs = []
    for k, o in enumerate(points):
        gaps = [abs(o - base), abs(o - center) - radius]
        gaps += [abs(o - x) for j, x in enumerate(points) if j != k]
        discs.append((o, fraction * min(gaps)))
    return discs


def loop_around(center: complex, base: complex, radius: float, others: Sequence[complex] = (),
                enclosed: Sequence[complex] = ()) -> ComplexPath:
    """Simple positive loop from ``base`` around the disc |z - center| < radius.

    The path runs base -> entry point (detouring around the clearance discs of
    ``others``), once counterclockwise around the circle, and back.  Points in
    ``enclosed`` must lie strictly inside the circle; ``others`` and ``base``
    must be at least ``2 * radius`` away from ``center``.
    """
    center, base = complex(center), complex(base)
    if radius <= 0:
        raise ValueError("radius must be positive")
    clear = [abs(center - o) for o in others] + [abs(center - base)]
    if radius > 0.5 * min(clear):
        raise RadiusTooLarge(f"radius {radius:.3g} > half clearance {0.5 * min(clear):.3g}")
    for p in enclosed:
        if abs(p - center) >= radius:
            raise RadiusTooLarge(f"enclosed point {p} not inside circle of radius {radius:.3g}")
    u = (base - center) / abs(base - center)
    entry = center + radius * u
    theta = cmath.phase(u)
    approach = _detoured(base, entry, obstacle_discs(list(others), base, center, radius))
    circle = Arc(center, radius, theta, theta + TWO_PI)
    back = [seg.reversed() for seg in reversed(approach)]
    return ComplexPath(approach + [circle] + back)


# --- integrator -----------------------------------------------------------

@dataclass(frozen=True)
class ToleranceSpec:
    rel: float = 1e-10
    abs: float = 1e-12
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rel > 0 and self.abs > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def scaled(self, factor: float) -> "ToleranceSpec":
        return ToleranceSpec(self.rel * factor, self.abs * factor, self.max_steps)


DEFAULT_TOLERANCE = ToleranceSpec()

# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

SAFETY = 0.9
FAC_MIN, FAC_MAX = 0.2, 5.0
_ALPHA, _BETA = 0.7 / 5, 0.4 / 5


@dataclass
class Trajectory:
    """Accepted-step samples.  ``nodes[k]`` indexes the sample at the start of
    segment k (the last entry is the path end)."""

    z: np.ndarray
    y: np.ndarray
    nodes: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    step_history: list = dc_field(default_factory=list)

    def node_values(self) -> tuple[np.ndarray, np.ndarray]:
        return self.z[self.nodes], self.y[self.nodes]


def _mnorm(x) -> float:
    return float(np.max(np.abs(x)))


def _initial_step(g, s0, y0, f0, tol, hmax):
    sc = tol.abs + tol.rel * _mnorm(y0)
    d0, d1 = _mnorm(y0) / sc, _mnorm(f0) / sc
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, hmax)
    f1 = g(s0 + h0, y0 + h0 * f0)
    d2 = _mnorm(f1 - f0) / sc / h0
    m = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if m <= 1e-15 else (0.01 / m) ** 0.2
    return min(100 * h0, h1, hmax)


def integrate_ode(field: Callable, path: ComplexPath, y0, tol: ToleranceSpec = DEFAULT_TOLERANCE,
                  record: bool = True):
    """Integrate ``dY/dz = field(z, Y)`` along ``path`` from ``Y(path.start) = y0``.

    Returns ``(y_end, trajectory)``; with ``record=False`` the trajectory only
    holds segment endpoints.
    """
    y = np.array(y0, dtype=complex)
    total_len = path.length
    zs, ys, nodes, hist = [path.start], [y.copy()], [0], []
    steps = rejected = 0
    for seg in path.segments:
        seg_len = seg.length
        if seg_len == 0:
            nodes.append(len(zs) - 1)
            continue
        h_min = 1e-14 * total_len / seg_len

        def g(s, yy, seg=seg):
            return field(seg.point(s), yy) * seg.tangent(s)

        s = 0.0
        k1 = g(0.0, y)
        h = _initial_step(g, 0.0, y, k1, tol, 1.0)
        err_prev = 1e-4
        reject_streak = False
        while s < 1.0:
            if steps + rejected >= tol.max_steps:
                raise MaxStepsExceeded(f"{tol.max_steps} steps exhausted at z={seg.point(s)}")
            last = s + h >= 1.0 - 1e-15
            if last:
                h = 1.0 - s
            ks = [k1]
            with np.errstate(all="ignore"):
                for i in range(1, 7):
                    yi = y.copy()
                    for aij, kj in zip(_A[i], ks):
                        if aij:
                            yi = yi + (h * aij) * kj
                    ks.append(g(1.0 if (last and i >= 5) else s + _C[i] * h, yi))
                y_new = yi  # stage 7 argument is the 5th-order solution (FSAL)
                e = sum((h * ei) * ki for ei, ki in zip(_E, ks) if ei)
                sc = tol.abs + tol.rel * max(_mnorm(y), _mnorm(y_new))
                err = _mnorm(e) / sc
            if not math.isfinite(err) or not np.all(np.isfinite(ks[6])):
                err = math.inf
            if err <= 1.0:
                s = 1.0 if last else s + h
                y = y_new
                k1 = ks[6]
                steps += 1
                fac = SAFETY * max(err, 1e-10) ** -_ALPHA * err_prev ** _BETA
                fac = min(FAC_MAX, max(FAC_MIN, fac))
                if reject_streak:
                    fac = min(fac, 1.0)
                err_prev = max(err, 1e-4)
                reject_streak = False
                hist.append(h * seg_len)
                if record or s >= 1.0:
                    zs.append(seg.point(s))
                    ys.append(y.copy())
                h *= fac
            else:
                rejected += 1
                reject_streak = True
                fac = FAC_MIN if not math.isfinite(err) else max(FAC_MIN, SAFETY * err ** -0.2)
                h *= fac
            if h < h_min:
                raise StepUnderflow(f"step underflow near z={seg.point(s)}", z=seg.point(s),
                                    history=zip(zs[-3:], hist[-3:]))
        nodes.append(len(zs) - 1)
    traj = Trajectory(np.array(zs), np.array(ys), np.array(nodes), steps, rejected, hist)
    return y, traj


def transport(field: Callable, path: ComplexPath, y0, tol: ToleranceSpec = DEFAULT_TOLERANCE) -> np.ndarray:
    """End value only; no sample storage."""
    return integrate_ode(field, path, y0, tol, record=False)[0]
