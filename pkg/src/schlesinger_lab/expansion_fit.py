"""Least-squares fits of local expansions near t = 0.

Power case: each entry is fitted by
    sum_m  c1_m t^m + c2_m t^{m+phi} + c3_m t^{m-phi},   m = -m0..M.
Log case:
    sum_m  t^m (c1_m + c2_m ln t + c3_m ln^2 t).

Residues are sampled on a geometric ladder t_k = t_start * ratio^k along a
ray; powers and logs use the branch continuous along that ray.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import IllConditioned, InsufficientSamples, OutOfSector, ZeroBase
from .linalg_core import LogBranch, to_pair
from .path_integrator import ComplexPath, DEFAULT_TOLERANCE, GeometricLine, ToleranceSpec, geometric_ladder
from .schlesinger_flow import SchlesingerState, flow

MAX_CONDITION = 1e12
SAMPLE_MARGIN = 4
POWER, LOG, LATTICE = "power", "log", "lattice"


@dataclass(frozen=True)
class SectorSpec:
    theta0: float = 0.0
    psi: float = math.pi / 2
    r: float = 0.2

    def __post_init__(self):
        if not (0 < self.psi < 2 * math.pi):
            raise ValueError("opening angle must lie in (0, 2 pi)")
        if not self.r > 0:
            raise ValueError("sector radius must be positive")

    @property
    def branch(self) -> LogBranch:
        return LogBranch(0, self.theta0)

    def contains(self, t: complex) -> bool:
        t = complex(t)
        if t == 0 or abs(t) > self.r * (1 + 1e-12):
            return False
        d = self.branch.arg(t) - self.theta0
        return abs(d) < self.psi / 2

    def check(self, t: complex) -> None:
        if not self.contains(t):
            raise OutOfSector(f"t = {complex(t):.6g} outside sector "
                              f"(theta0={self.theta0:g}, psi={self.psi:g}, r={self.r:g})")

    def to_json(self) -> dict:
        return {"theta0": self.theta0, "psi": self.psi, "r": self.r}


@dataclass
class Samples:
    t: np.ndarray
    values: np.ndarray
    labels: list[str]
    sector: SectorSpec
    states: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def subset(self, idx) -> "Samples":
        idx = np.asarray(idx)
        st = [self.states[k] for k in idx] if self.states else []
        return Samples(self.t[idx], self.values[idx], self.labels, self.sector, st)

    def entry(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]


def entry_labels(state: SchlesingerState) -> list[str]:
    return [f"b{lab}_{k}{l}" for lab in state.labels for k in (1, 2) for l in (1, 2)]


def ladder(t_start: complex, ratio: float, n: int) -> np.ndarray:
    return complex(t_start) * ratio ** np.arange(n)


def sample_ray(source, sector: SectorSpec, t_start: complex | None = None, ratio: float = 0.7, N: int = 48,
               tol: ToleranceSpec = DEFAULT_TOLERANCE) -> Samples:
    """Residue entries on the ladder t_start * ratio^k, k < N.

    ``source`` is a SchlesingerState (flowed along a log-linear path to
    ``t_start`` and then down the ladder) or a callable t -> 1D array.
    """
    if not (0 < ratio < 1):
        raise ValueError("ratio must lie in (0, 1)")
    if N < 1:
        raise ValueError("N must be positive")
    if t_start is None:
        t_start = 0.1 * cmath.exp(1j * sector.theta0)
    ts = ladder(t_start, ratio, N)
    for t in ts:
        sector.check(t)
    if callable(source) and not isinstance(source, SchlesingerState):
        vals = np.array([np.asarray(source(t), dtype=complex).reshape(-1) for t in ts])
        return Samples(ts, vals, [f"f{k}" for k in range(vals.shape[1])], sector)
    state = source
    segs = []
    if abs(state.t - ts[0]) > 1e-14:
        segs.append(GeometricLine(state.t, ts[0]))
    segs += geometric_ladder(ts).segments if N > 1 else []
    if not segs:
        states = [state]
    else:
        res = flow(state, ComplexPath(segs), tol, record=False)
        if res.truncated:
            raise OutOfSector(f"ladder reaches the divisor clearance at t={res.reached_t:.3g}")
        states = res.node_states
        if len(segs) > N - 1:
            states = states[1:]
    # snap t exactly onto the ladder
    states = [st.at(t, st.residues) if st.t != t else st for st, t in zip(states, ts)]
    vals = np.array([st.residues.reshape(-1) for st in states])
    return Samples(ts, vals, entry_labels(state), sector, states)


# --- basis ------------------------------------------------------------------

class Term(NamedTuple):
    exponent: complex
    log_power: int
    slot: int  # 0, 1, 2 -> F1, F2, F3
    m: int


def power_terms(phi: complex, M: int, m0: int) -> list[Term]:
    out = []
    for m in range(-m0, M + 1):
        out += [Term(m, 0, 0, m), Term(m + phi, 0, 1, m), Term(m - phi, 0, 2, m)]
    return out


def log_terms(M: int, m0: int) -> list[Term]:
    return [Term(m, k, k, m) for m in range(-m0, M + 1) for k in range(3)]


def lattice_terms(phi: complex, M: int) -> list[Term]:
    """t^{n + k phi}, |k| <= n + 1: the exponents generated when powers of
    t^{+-phi} multiply the holomorphic parts.  ``slot`` stores k."""
    return [Term(n + k * phi, 0, k, n) for n in range(M + 1) for k in range(-(n + 1), n + 2)]


def basis_matrix(t: np.ndarray, terms: Sequence[Term], branch: LogBranch) -> np.ndarray:
    logs = np.array([branch.log(complex(x)) for x in t])
    cols = [np.exp(term.exponent * logs) * logs ** term.log_power for term in terms]
    return np.column_stack(cols)


@dataclass
class ExpansionModel:
    case: str
    phi: complex | None
    m0: int
    M: int
    terms: list[Term]
    coeffs: np.ndarray  # (n_terms, n_entries)
    branch: LogBranch
    residual_max: float
    basis_condition: float
    sector: SectorSpec
    labels: list[str]
    abs_residual_max: float = 0.0
    entry_residuals: np.ndarray | None = None

    def slot_coeffs(self, slot: int) -> np.ndarray:
        """Coefficients of F_{slot+1}, shape (M + m0 + 1, n_entries), m ascending."""
        rows = [k for k, term in enumerate(self.terms) if term.slot == slot]
        return self.coeffs[rows]

    def to_json(self) -> dict:
        def enc(a):
            return [[to_pair(z) for z in row] for row in a]

        out = {
            "case": self.case,
            "phi": None if self.phi is None else to_pair(self.phi),
            "m0": self.m0,
            "M": self.M,
            "labels": list(self.labels),
            "residual_max": float(self.residual_max),
            "basis_condition": float(self.basis_condition),
            "sector": self.sector.to_json(),
        }
        if self.case == LATTICE:
            out["coeffs"] = {"terms": [[to_pair(t.exponent), t.log_power] for t in self.terms],
                             "values": enc(self.coeffs)}
        else:
            out["coeffs"] = {f"F{s + 1}": enc(self.slot_coeffs(s)) for s in range(3)}
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def evaluate_model(model: ExpansionModel, t: complex, check_sector: bool = True) -> np.ndarray:
    t = complex(t)
    if t == 0:
        raise ZeroBase("expansion evaluated at t = 0")
    if check_sector:
        model.sector.check(t)
    row = basis_matrix(np.array([t]), model.terms, model.branch)[0]
    return row @ model.coeffs


def relative_residuals(values: np.ndarray, fitted: np.ndarray) -> np.ndarray:
    """Per entry: max_k |fit - data| / max_k |data| (absolute when the entry
    vanishes identically)."""
    err = np.max(np.abs(fitted - values), axis=0)
    size = np.max(np.abs(values), axis=0)
    floor = 1e-12 * max(float(np.max(size)), 1e-300)
    return err / np.maximum(size, floor)


class _Solve(NamedTuple):
    coeffs: np.ndarray
    fitted: np.ndarray
    condition: float


def _lstsq(a: np.ndarray, y: np.ndarray) -> _Solve:
    # rows weighted by the raw basis magnitude (relative accuracy at every
    # ladder node), then columns normalized to unit max magnitude
    w = 1.0 / np.max(np.abs(a), axis=1)
    aw = a * w[:, None]
    scale = np.max(np.abs(aw), axis=0)
    scale[scale == 0] = 1.0
    a_s = aw / scale
    sv = np.linalg.svd(a_s, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    q, r, perm = scipy.linalg.qr(a_s, mode="economic", pivoting=True)
    z = scipy.linalg.solve_triangular(r, q.conj().T @ (y * w[:, None]))
    x = np.empty_like(z)
    x[perm] = z
    coeffs = x / scale[:, None]
    return _Solve(coeffs, a @ coeffs, cond)


def fit_terms(samples: Samples, terms: list[Term], case: str, phi, M: int, m0: int,
              max_condition: float = MAX_CONDITION) -> ExpansionModel:
    need = len(terms) + SAMPLE_MARGIN
    if len(samples) < need:
        raise InsufficientSamples(f"{len(samples)} samples, need at least {need}")
    branch = samples.sector.branch
    a = basis_matrix(samples.t, terms, branch)
    if not np.all(np.isfinite(a)):
        raise IllConditioned("basis overflows on the ladder")
    sol = _lstsq(a, samples.values)
    if not sol.condition <= max_condition:
        raise IllConditioned(f"basis condition {sol.condition:.3g} > {max_condition:.3g}")
    rel = relative_residuals(samples.values, sol.fitted)
    return ExpansionModel(case, phi, m0, M, list(terms), sol.coeffs, branch, float(np.max(rel)), sol.condition,
                          samples.sector, list(samples.labels),
                          float(np.max(np.abs(sol.fitted - samples.values))), rel)


def fit_power_model(samples: Samples, phi: complex, M: int = 4, m0: int = 0) -> ExpansionModel:
    phi = complex(phi)
    return fit_terms(samples, power_terms(phi, M, m0), POWER, phi, M, m0)


def fit_log_model(samples: Samples, M: int = 4, m0: int = 0) -> ExpansionModel:
    return fit_terms(samples, log_terms(M, m0), LOG, None, M, m0)


def fit_lattice_model(samples: Samples, phi: complex, M: int = 4) -> ExpansionModel:
    """Diagnostic fit on the full exponent lattice {n + k phi}."""
    phi = complex(phi)
    return fit_terms(samples, lattice_terms(phi, M), LATTICE, phi, M, 0)


def select_m0(samples: Samples, phi: complex | None, M: int = 4, max_m0: int = 3) -> ExpansionModel:
    """Increase the allowed pole order while the residual improves >= 10x."""
    def fit(m0):
        return fit_log_model(samples, M, m0) if phi is None else fit_power_model(samples, phi, M, m0)

    best = fit(0)
    for m0 in range(1, max_m0 + 1):
        try:
            cand = fit(m0)
        except (IllConditioned, InsufficientSamples):
            break
        if cand.residual_max * 10 > best.residual_max:
            break
        best = cand
    return best


# --- exponent refinement ----------------------------------------------------

class RefinedPhi(NamedTuple):
    phi: complex
    residual_max: float
    improved: bool
    start_residual: float


GRID = 11
# a genuine exponent correction lowers the residual by orders of magnitude;
# log data drifts toward phi -> 0 with a few-fold gain at the disc edge
NO_IMPROVEMENT_FACTOR = 100.0
RESIDUAL_FLOOR = 1e-12
EDGE_FRACTION = 0.98


def _residual_or_inf(samples, phi, M, m0, rms=False) -> float:
    try:
        model = fit_power_model(samples, phi, M, m0)
    except IllConditioned:
        return math.inf
    if rms:
        return float(np.sqrt(np.mean(model.entry_residuals ** 2)))
    return model.residual_max


def refine_phi(samples: Samples, phi0: complex, M: int = 4, m0: int = 0, radius: float = 0.1) -> RefinedPhi:
    """argmin over the disc |phi - phi0| <= radius of the power-fit residual.

    Stage one scans an 11 x 11 grid; stage two runs Nelder-Mead from the best
    grid point.  phi0 is returned with ``improved=False`` when its residual is
    already at the rounding floor, when the best residual is not 100x lower,
    or when the minimum sits on the disc boundary (no interior optimum).
    """
    phi0 = complex(phi0)
    r0 = _residual_or_inf(samples, phi0, M, m0)
    if r0 <= RESIDUAL_FLOOR:
        return RefinedPhi(phi0, r0, False, r0)
    best_phi, best_r = phi0, r0
    for dx in np.linspace(-radius, radius, GRID):
        for dy in np.linspace(-radius, radius, GRID):
            if dx * dx + dy * dy > radius * radius * (1 + 1e-12):
                continue
            cand = phi0 + complex(dx, dy)
            r = _residual_or_inf(samples, cand, M, m0)
            if r < best_r:
                best_phi, best_r = cand, r

    def obj(x):
        cand = complex(x[0], x[1])
        if abs(cand - phi0) > radius:
            return math.inf
        return math.log(_residual_or_inf(samples, cand, M, m0, rms=True) + 1e-300)

    h = radius / (GRID - 1)
    simplex = np.array([[best_phi.real, best_phi.imag], [best_phi.real + h, best_phi.imag],
                        [best_phi.real, best_phi.imag + h]])
    res = scipy.optimize.minimize(obj, [best_phi.real, best_phi.imag], method="Nelder-Mead",
                                  options={"initial_simplex": simplex, "xatol": 1e-12, "fatol": 1e-10,
                                           "maxiter": 2000})
    cand = complex(res.x[0], res.x[1])
    r = _residual_or_inf(samples, cand, M, m0)
    if r < best_r:
        best_phi, best_r = cand, r
    if not best_r * NO_IMPROVEMENT_FACTOR <= r0 or abs(best_phi - phi0) >= EDGE_FRACTION * radius:
        return RefinedPhi(phi0, r0, False, r0)
    return RefinedPhi(best_phi, best_r, True, r0)


def residual_decay_slope(source, sector: SectorSpec | None = None, case="log", M_list: Sequence[int] = (1, 2, 3, 4),
                         m0: int = 0, **ladder_kw) -> list[tuple[int, float]]:
    """(M, residual_max) for each truncation order on one fixed ladder.

    ``case`` is "log" or the exponent phi of the power basis."""
    M_list = list(M_list)
    if any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("M_list must be increasing")
    samples = source if isinstance(source, Samples) else sample_ray(source, sector, **ladder_kw)
    out = []
    for M in M_list:
        if isinstance(case, str) and case == LOG:
            model = fit_log_model(samples, M, m0)
        else:
            model = fit_power_model(samples, complex(case), M, m0)
        out.append((M, model.residual_max))
    return out


def strictly_decreasing(pairs: Sequence[tuple[int, float]]) -> bool:
    vals = [r for _, r in pairs]
    return all(b < a for a, b in zip(vals, vals[1:]))


def midpoints(samples: Samples) -> np.ndarray:
    """Geometric midpoints between consecutive ladder nodes."""
    t = samples.t
    return t[:-1] * np.sqrt(t[1:] / t[:-1])


def planted_model(rng: np.random.Generator, case: str, M: int, m0: int = 0, phi: complex | None = None,
                  n_entries: int = 1, sector: SectorSpec | None = None) -> tuple[Callable, np.ndarray, list[Term]]:
    """Random coefficients in a power or log basis; returns (f, coeffs, terms)."""
    sector = sector or SectorSpec()
    terms = log_terms(M, m0) if case == LOG else power_terms(complex(phi), M, m0)
    coeffs = rng.normal(size=(len(terms), n_entries)) + 1j * rng.normal(size=(len(terms), n_entries))
    branch = sector.branch

    def f(t):
        return basis_matrix(np.array([complex(t)]), terms, branch)[0] @ coeffs

    return f, coeffs, terms
