"""Painleve VI from the n=4 Schlesinger flow, and a direct integrator for it.

With poles 0, t, 1 and traceless residues whose sum at infinity is
diag(k, -k), the function

    w(t) = t b0 / ((t + 1) b0 + t b1 + bt),      b_i = (B_i)_{12},

solves Painleve VI with alpha = (2 l_inf - 1)^2 / 2, beta = -2 l0^2,
gamma = 2 l1^2, delta = 1/2 - 2 lt^2.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DenominatorVanishes, MovablePole, SingularPoint, StepUnderflow
from .linalg_core import SIGMA3
from .path_integrator import ComplexPath, DEFAULT_TOLERANCE, Line, ToleranceSpec, integrate_ode
from .schlesinger_flow import SchlesingerState, SpectralData, schlesinger_rhs, spectral_data

DENOMINATOR_EPS = 1e-13
NEAR_POLE_WINDOW = 1e-6
SINGULAR_EPS = 1e-14


@dataclass(frozen=True)
class P6Params:
    alpha: complex
    beta: complex
    gamma: complex
    delta: complex

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = complex(getattr(self, name))
            if not cmath.isfinite(v):
                raise ValueError(f"{name} is not finite")
            object.__setattr__(self, name, v)

    def perturbed(self, **shifts) -> "P6Params":
        return replace(self, **{k: getattr(self, k) + v for k, v in shifts.items()})

    def as_tuple(self) -> tuple[complex, complex, complex, complex]:
        return (self.alpha, self.beta, self.gamma, self.delta)


@dataclass(frozen=True)
class P6State:
    t: complex
    w: complex
    w_prime: complex


def p6_params_from_spectra(spectra: SpectralData) -> P6Params:
    l0, lt, l1 = spectra.lambda_per_pole
    linf = spectra.lambda_infinity
    return P6Params((2 * linf - 1) ** 2 / 2, -2 * l0 ** 2, 2 * l1 ** 2, 0.5 - 2 * lt ** 2)


def _require_normalized(state: SchlesingerState) -> None:
    if not state.normalized:
        raise ValueError("Painleve VI bridge needs the (0, t, 1) normalized configuration")


def _ratio_parts(state: SchlesingerState):
    t = state.t
    b0, bt, b1 = state.B0[0, 1], state.Bt[0, 1], state.B1[0, 1]
    num = t * b0
    den = (t + 1) * b0 + t * b1 + bt
    scale = max(abs((t + 1) * b0), abs(t * b1), abs(bt), abs(num))
    return num, den, scale


def w_denominator(state: SchlesingerState) -> tuple[complex, float]:
    """(denominator, magnitude scale of its terms)."""
    _, den, scale = _ratio_parts(state)
    return den, scale


def w_from_residues(state: SchlesingerState) -> complex:
    _require_normalized(state)
    num, den, scale = _ratio_parts(state)
    if abs(den) <= DENOMINATOR_EPS * scale or scale == 0:
        raise DenominatorVanishes(f"|denominator| = {abs(den):.3g} at t = {state.t:.6g}")
    return num / den


def w_prime_from_flow(state: SchlesingerState) -> complex:
    """dw/dt by the chain rule, with db_i/dt from the Schlesinger field."""
    _require_normalized(state)
    num, den, scale = _ratio_parts(state)
    if abs(den) <= DENOMINATOR_EPS * scale or scale == 0:
        raise DenominatorVanishes(f"|denominator| = {abs(den):.3g} at t = {state.t:.6g}")
    t = state.t
    b0, b1 = state.B0[0, 1], state.B1[0, 1]
    d = schlesinger_rhs(state)
    db0, dbt, db1 = d[0][0, 1], d[1][0, 1], d[2][0, 1]
    dnum = b0 + t * db0
    dden = b0 + (t + 1) * db0 + b1 + t * db1 + dbt
    return (dnum * den - num * dden) / (den * den)


def p6_state_from_flow(state: SchlesingerState) -> P6State:
    return P6State(state.t, w_from_residues(state), w_prime_from_flow(state))


def p6_rhs(params: P6Params, s: P6State) -> complex:
    t, w, wp = complex(s.t), complex(s.w), complex(s.w_prime)
    scale = max(1.0, abs(t))
    for factor, val in (("t", t), ("t-1", t - 1)):
        if abs(val) <= SINGULAR_EPS * scale:
            raise SingularPoint(factor)
    for factor, val in (("w", w), ("w-1", w - 1), ("w-t", w - t)):
        if abs(val) <= SINGULAR_EPS * max(scale, abs(w)):
            raise SingularPoint(factor)
    a, b, c, d = params.as_tuple()
    return (0.5 * (1 / w + 1 / (w - 1) + 1 / (w - t)) * wp * wp
            - (1 / t + 1 / (t - 1) + 1 / (w - t)) * wp
            + w * (w - 1) * (w - t) / (t * t * (t - 1) ** 2)
            * (a + b * t / w ** 2 + c * (t - 1) / (w - 1) ** 2 + d * t * (t - 1) / (w - t) ** 2))


def _p6_field(params: P6Params):
    def f(t, y):
        return np.array([y[1], p6_rhs(params, P6State(t, y[0], y[1]))])
    return f


def _pole_estimate(err: StepUnderflow) -> complex | None:
    hist = list(err.history)
    if err.z is None:
        return None
    if len(hist) < 2:
        return err.z
    (z1, h1), (z2, h2) = hist[-2], hist[-1]
    q = h2 / h1 if h1 else 0.0
    if not 0 < q < 1 or z2 == z1:
        return err.z
    # geometric step collapse: remaining distance ~ h q / (1 - q)
    u = (z2 - z1) / abs(z2 - z1)
    return complex(err.z + u * h2 * q / (1 - q))


@dataclass
class P6Trajectory:
    states: list[P6State]
    nodes: list[int]

    @property
    def node_states(self) -> list[P6State]:
        return [self.states[k] for k in self.nodes]


def p6_integrate(params: P6Params, path: ComplexPath, init: P6State,
                 tol: ToleranceSpec = DEFAULT_TOLERANCE, record: bool = True) -> P6Trajectory:
    """Integrate (w, w') along ``path``; step collapse is reported as a
    movable pole with an extrapolated location."""
    if abs(path.start - init.t) > 1e-12 * max(1.0, abs(init.t)):
        raise ValueError("initial state is not at the path start")
    try:
        _, traj = integrate_ode(_p6_field(params), path, np.array([init.w, init.w_prime]), tol, record)
    except StepUnderflow as err:
        loc = _pole_estimate(err)
        raise MovablePole(f"integration stalled near t = {err.z:.6g}", location=loc, last_t=err.z) from err
    except SingularPoint as err:
        raise MovablePole(f"solution reached the singular locus {err.factor} = 0") from err
    states = [P6State(t, y[0], y[1]) for t, y in zip(traj.z, traj.y)]
    return P6Trajectory(states, [int(k) for k in traj.nodes])


# --- two-route comparison ---------------------------------------------------

@dataclass
class CrossValidation:
    t: np.ndarray
    w_schlesinger: np.ndarray
    w_direct: np.ndarray
    rel_dev: np.ndarray
    excluded: np.ndarray
    params: P6Params

    @property
    def max_rel_dev(self) -> float:
        kept = self.rel_dev[~self.excluded]
        return float(np.max(kept)) if len(kept) else math.nan

    @property
    def n_excluded(self) -> int:
        return int(np.sum(self.excluded))

    def write_csv(self, dest) -> None:
        own = isinstance(dest, (str, Path))
        fh = open(dest, "w", newline="") if own else dest
        try:
            w = csv.writer(fh)
            w.writerow(["t_re", "t_im", "w_schlesinger_re", "w_schlesinger_im", "w_direct_re", "w_direct_im",
                        "rel_dev", "excluded"])
            for k in range(len(self.t)):
                w.writerow([repr(float(x)) for x in (self.t[k].real, self.t[k].imag,
                                                     self.w_schlesinger[k].real, self.w_schlesinger[k].imag,
                                                     self.w_direct[k].real, self.w_direct[k].imag,
                                                     self.rel_dev[k])] + [int(self.excluded[k])])
        finally:
            if own:
                fh.close()


def comparison_indices(n: int, max_points: int) -> list[int]:
    if n <= max_points:
        return list(range(n))
    return sorted(set(int(round(x)) for x in np.linspace(0, n - 1, max_points)))


def cross_validate(traj: Sequence[SchlesingerState], tol: ToleranceSpec = DEFAULT_TOLERANCE,
                   params: P6Params | None = None, window: float = NEAR_POLE_WINDOW,
                   max_points: int = 400) -> CrossValidation:
    """Compare w from the residues with a direct Painleve VI integration
    seeded at the first state.

    The direct route runs along the polyline through the trajectory's t
    values and is compared at its vertices.  Points whose denominator is
    below ``window`` times its term scale are excluded.  ``params`` overrides
    the parameters read off the spectra (negative controls).
    """
    states = list(traj)
    _require_normalized(states[0])
    picks = [states[k] for k in comparison_indices(len(states), max_points)]
    if params is None:
        params = p6_params_from_spectra(spectral_data(states[0]))
    init = p6_state_from_flow(picks[0])
    ts = np.array([st.t for st in picks])
    path = ComplexPath([Line(a, b) for a, b in zip(ts[:-1], ts[1:]) if a != b])
    direct = p6_integrate(params, path, init, tol, record=False).node_states
    w_dir = np.array([s.w for s in direct])
    w_s = np.empty(len(picks), dtype=complex)
    excluded = np.zeros(len(picks), dtype=bool)
    keep = [0] + [k + 1 for k, (a, b) in enumerate(zip(ts[:-1], ts[1:])) if a != b]
    for k, st in enumerate(picks):
        den, scale = w_denominator(st)
        excluded[k] = abs(den) < window * scale
        w_s[k] = np.nan if excluded[k] and abs(den) <= DENOMINATOR_EPS * scale else w_from_residues(st)
    ts, w_s, excluded = ts[keep], w_s[keep], excluded[keep]
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(w_dir - w_s) / np.maximum(np.abs(w_s), 1e-300)
    rel[excluded] = np.where(np.isfinite(rel[excluded]), rel[excluded], np.nan)
    return CrossValidation(ts, w_s, w_dir, rel, excluded, params)


def admissible_state(rng: np.random.Generator, t0: complex = 0.5, scale: float = 0.3,
                     kappa: complex | None = None) -> SchlesingerState:
    """Random traceless B0, Bt with B1 chosen so that the residue at infinity
    is diag(kappa, -kappa)."""
    def rand():
        a = scale * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        return a - np.trace(a) / 2 * np.eye(2)

    if kappa is None:
        kappa = complex(rng.uniform(0.1, 0.4), rng.uniform(-0.2, 0.2))
    b0, bt = rand(), rand()
    b1 = -(b0 + bt) - kappa * SIGMA3
    return SchlesingerState.n4_normalized(b0, bt, b1, t0)


# --- ratio form near t = 0 --------------------------------------------------

@dataclass
class RatioFormCheck:
    case: str
    phi: complex | None
    numerator_model: object
    denominator_model: object
    fresh_t: np.ndarray
    w_true: np.ndarray
    w_series: np.ndarray

    @property
    def entry_residual(self) -> float:
        return max(self.numerator_model.residual_max, self.denominator_model.residual_max)

    @property
    def w_error(self) -> float:
        """max |w_series - w| / max |w| over the fresh points."""
        return float(np.max(np.abs(self.w_series - self.w_true)) / np.max(np.abs(self.w_true)))

    @property
    def passed(self) -> bool:
        return self.w_error <= 10 * self.entry_residual


def _ratio_samples(samples):
    from .expansion_fit import Samples

    parts = [_ratio_parts(st)[:2] for st in samples.states]
    vals = np.array([[n, d] for n, d in parts])
    return Samples(samples.t, vals, ["numerator", "denominator"], samples.sector, samples.states)


def ratio_form_check(state: SchlesingerState, sector, phi: complex | None, M: int = 2,
                     tol: ToleranceSpec = DEFAULT_TOLERANCE, ratio: float = 0.7, N: int = 48) -> RatioFormCheck:
    """Fit numerator t b0 and denominator (t+1) b0 + t b1 + bt of w separately
    (power basis for ``phi``, log basis when ``phi`` is None) and compare their
    quotient with w at the geometric midpoints of the ladder (sampled in the
    same flow run as the nodes)."""
    from .expansion_fit import evaluate_model, fit_log_model, fit_power_model, sample_ray

    t_start = 0.1 * cmath.exp(1j * sector.theta0)
    # one run through nodes and midpoints, so both share the integration error
    both = sample_ray(state, sector, t_start, math.sqrt(ratio), 2 * N - 1, tol)
    samples = both.subset(np.arange(0, 2 * N - 1, 2))
    fresh = both.subset(np.arange(1, 2 * N - 1, 2))
    rs = _ratio_samples(samples)
    models = []
    for col in range(2):
        sub = type(rs)(rs.t, rs.values[:, col:col + 1], [rs.labels[col]], rs.sector, rs.states)
        models.append(fit_log_model(sub, M) if phi is None else fit_power_model(sub, phi, M))
    w_series = np.array([evaluate_model(models[0], t)[0] / evaluate_model(models[1], t)[0] for t in fresh.t])
    w_true = np.array([w_from_residues(st) for st in fresh.states])
    return RatioFormCheck("log" if phi is None else "power", phi, models[0], models[1], fresh.t, w_true, w_series)
