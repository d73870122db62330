"""Command-line front end: ``schlesinger-lab <command> --config exp.json --out DIR``.

Commands: flow, monodromy, classify, canonical, fit, p6-check, all.
Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import cmath
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .canonical_family import (
    GAUGE_SIGN,
    SLOPE_RADII,
    conjugated_residues,
    exponent_gap,
    jordan_pair_state,
    limit_defect,
    loglog_slope,
    random_traceless,
    schlesinger_residual_2pt,
)
from .errors import CondBViolated, ConfigInvalid, SchlesingerLabError
from .expansion_fit import SectorSpec, fit_log_model, fit_power_model, refine_phi, residual_decay_slope, sample_ray
from .linalg_core import classify_product, from_pair, matrix_from_nested, matrix_to_nested, to_pair
from .monodromy import (
    FuchsianSystem,
    monodromy_set,
    pair_exponent_hint,
    pair_monodromy,
    phi_from_monodromy,
)
from .p6_bridge import admissible_state, cross_validate
from .path_integrator import ComplexPath, DEFAULT_TOLERANCE, GeometricLine, Line, ToleranceSpec
from .schlesinger_flow import (
    SchlesingerState,
    conservation_report,
    flow,
    state_row,
    trajectory_columns,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("flow", "monodromy", "classify", "canonical", "fit", "p6-check", "all")
THREADS_ENV = "SCHLESINGER_LAB_THREADS"
# pair monodromy is known to ~1e-9; a Jordan pair then splits by O(sqrt(eps))
CLASSIFY_TOL = 1e-4


# --- configuration ----------------------------------------------------------

@dataclass
class Experiment:
    raw: dict
    state: SchlesingerState
    path: ComplexPath | None
    sector: SectorSpec
    tol: ToleranceSpec
    M: int
    m0: int
    pair: tuple[int, int]
    seed: int = 0

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _complex(value, pointer: str) -> complex:
    try:
        return from_pair(value)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"expected complex [re, im]: {exc}", pointer) from None


def _matrix(value, pointer: str) -> np.ndarray:
    try:
        return matrix_from_nested(value)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"expected 2x2 matrix of [re, im] entries: {exc}", pointer) from None


def _require(obj: dict, key: str, pointer: str):
    if not isinstance(obj, dict):
        raise ConfigInvalid("expected an object", pointer or "/")
    if key not in obj:
        raise ConfigInvalid(f"missing required key '{key}'", f"{pointer}/{key}")
    return obj[key]


def _random_state(opts: dict, seed: int, t0: complex) -> SchlesingerState:
    kind = opts.get("kind", "generic")
    scale = float(opts.get("scale", 0.2))
    rng = np.random.default_rng(seed)
    if kind == "generic":
        return SchlesingerState.n4_normalized(*(random_traceless(rng, scale) for _ in range(3)), t0)
    if kind == "jordan":
        return jordan_pair_state(rng, t0=t0, scale=scale)
    if kind == "p6":
        return admissible_state(rng, t0=t0, scale=scale)
    raise ConfigInvalid(f"unknown random kind '{kind}'", "/residues/random/kind")


def _state(raw: dict, seed: int) -> SchlesingerState:
    mode = raw.get("mode", "n4-normalized")
    if mode not in ("n4-normalized", "general"):
        raise ConfigInvalid(f"mode must be 'n4-normalized' or 'general', got {mode!r}", "/mode")
    residues = _require(raw, "residues", "")
    t0 = _complex(_require(raw, "t0", ""), "/t0") if mode == "n4-normalized" else None
    if mode == "n4-normalized":
        if not isinstance(residues, dict):
            raise ConfigInvalid("expected an object with B0, Bt, B1", "/residues")
        if "random" in residues:
            return _random_state(residues["random"], seed, t0)
        mats = [_matrix(_require(residues, k, "/residues"), f"/residues/{k}") for k in ("B0", "Bt", "B1")]
        if t0 in (0, 1):
            raise ConfigInvalid("t0 lies on the divisor", "/t0")
        return SchlesingerState.n4_normalized(*mats, t0)
    poles = _require(raw, "poles", "")
    if not isinstance(poles, list) or len(poles) < 2:
        raise ConfigInvalid("expected a list of at least two poles", "/poles")
    pts = [_complex(p, f"/poles/{k}") for k, p in enumerate(poles)]
    if not isinstance(residues, list) or len(residues) != len(pts):
        raise ConfigInvalid("expected one residue per pole", "/residues")
    mats = [_matrix(m, f"/residues/{k}") for k, m in enumerate(residues)]
    moving = raw.get("moving", len(pts) - 1)
    if not isinstance(moving, int) or not 0 <= moving < len(pts):
        raise ConfigInvalid("moving must be a pole index", "/moving")
    try:
        return SchlesingerState.general(pts, mats, moving)
    except SchlesingerLabError as exc:
        raise ConfigInvalid(str(exc), "/poles") from None


def _path(raw: dict, t_start: complex):
    cfg = raw.get("path")
    if cfg is None:
        return None
    kind = _require(cfg, "type", "/path")
    if kind == "ray":
        end = _complex(_require(cfg, "to", "/path"), "/path/to")
        if end == 0:
            raise ConfigInvalid("ray end must be nonzero", "/path/to")
        return ComplexPath([GeometricLine(t_start, end)])
    if kind == "segments":
        pts = _require(cfg, "points", "/path")
        if not isinstance(pts, list) or not pts:
            raise ConfigInvalid("expected a nonempty list of points", "/path/points")
        zs = [t_start] + [_complex(p, f"/path/points/{k}") for k, p in enumerate(pts)]
        seg = GeometricLine if cfg.get("geometric", False) else Line
        return ComplexPath([seg(a, b) for a, b in zip(zs[:-1], zs[1:]) if a != b])
    raise ConfigInvalid(f"path type must be 'ray' or 'segments', got {kind!r}", "/path/type")


def parse_sector(text: str) -> SectorSpec:
    try:
        theta0, psi, r = (float(x) for x in text.split(","))
        return SectorSpec(theta0, psi, r)
    except ValueError as exc:
        raise ConfigInvalid(f"--sector expects 'theta0,psi,r': {exc}", "/sector") from None


def load_experiment(raw: dict, args: argparse.Namespace) -> Experiment:
    if not isinstance(raw, dict):
        raise ConfigInvalid("configuration must be a JSON object", "/")
    seed = args.seed if args.seed is not None else 0
    state = _state(raw, seed)
    path = _path(raw, state.t)
    sec = raw.get("sector", {})
    try:
        sector = SectorSpec(float(sec.get("theta0", 0.3)), float(sec.get("psi", math.pi / 2)),
                            float(sec.get("r", 0.2)))
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigInvalid(str(exc), "/sector") from None
    if args.sector:
        sector = parse_sector(args.sector)
    tols = raw.get("tolerances", {})
    try:
        tol = ToleranceSpec(float(args.tol_rel or tols.get("rel", DEFAULT_TOLERANCE.rel)),
                            float(args.tol_abs or tols.get("abs", DEFAULT_TOLERANCE.abs)),
                            int(tols.get("max_steps", DEFAULT_TOLERANCE.max_steps)))
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigInvalid(str(exc), "/tolerances") from None
    fit = raw.get("fit", {})
    M, m0 = fit.get("M", 4), fit.get("m0", 0)
    if not (isinstance(M, int) and M >= 0):
        raise ConfigInvalid("M must be a nonnegative integer", "/fit/M")
    if not (isinstance(m0, int) and m0 >= 0):
        raise ConfigInvalid("m0 must be a nonnegative integer", "/fit/m0")
    pair = tuple(raw.get("pair", (0, 1)))
    if len(pair) != 2 or not all(isinstance(k, int) and 0 <= k < len(state.poles) for k in pair):
        raise ConfigInvalid("pair must be two pole indices", "/pair")
    return Experiment(raw, state, path, sector, tol, M, m0, pair, seed)


# --- commands ---------------------------------------------------------------

def _header(exp: Experiment, command: str) -> dict:
    return {"command": command, "config_hash": exp.config_hash, "seed": exp.seed, "version": __version__}


def _flow_path(exp: Experiment) -> ComplexPath:
    if exp.path is None:
        raise ConfigInvalid("this command needs a path", "/path")
    return exp.path


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def cmd_flow(exp: Experiment, fmt: str) -> dict[str, object]:
    res = flow(exp.state, _flow_path(exp), exp.tol)
    rep = conservation_report(res.states)
    summary = _header(exp, "flow") | {
        "reached_t": to_pair(res.reached_t),
        "truncated": res.truncated,
        "n_states": len(res),
        "eigenvalue_drift": list(rep.eigenvalue_drift),
        "sum_drift": rep.sum_drift,
        "pair_trace_drift": rep.pair_trace_drift,
        "breached": rep.breached,
        "final_residues": [matrix_to_nested(b) for b in res.states[-1].residues],
    }
    out = {"flow_summary.json": summary}
    if fmt == "csv":
        out["trajectory.csv"] = _csv_text(trajectory_columns(exp.state), (state_row(s) for s in res.states))
    else:
        out["trajectory.json"] = _header(exp, "flow") | {
            "columns": trajectory_columns(exp.state), "rows": [state_row(s) for s in res.states]}
    return out


def _require_normalized_mode(exp: Experiment, command: str) -> None:
    if not exp.state.normalized:
        raise ConfigInvalid(f"{command} needs mode 'n4-normalized'", "/mode")


def _final_state(exp: Experiment) -> SchlesingerState:
    return flow(exp.state, exp.path, exp.tol, record=False).states[-1] if exp.path else exp.state


def cmd_monodromy(exp: Experiment, fmt: str) -> dict[str, object]:
    sys_ = FuchsianSystem.from_state(exp.state)
    data = monodromy_set(sys_, tol=exp.tol)
    return {"monodromy.json": _header(exp, "monodromy") | data.to_json()}


def classification(state: SchlesingerState, pair, tol: ToleranceSpec) -> dict:
    i, j = pair
    m = pair_monodromy(FuchsianSystem.from_state(state), i, j, tol=tol)
    kind = classify_product(m, CLASSIFY_TOL)
    hint = pair_exponent_hint(state, i, j)
    phi, case = phi_from_monodromy(m, hint, CLASSIFY_TOL, complex(np.trace(state.residues[i] + state.residues[j])))
    return {
        "t": to_pair(state.t),
        "pair": list(pair),
        "pair_monodromy": matrix_to_nested(m),
        "kind": kind.value,
        "case": {"Power": "power", "Logarithmic": "log", "Resonant": "resonant"}[case],
        "phi": None if phi is None else to_pair(phi),
        "hint": to_pair(hint),
    }


def cmd_classify(exp: Experiment, fmt: str) -> dict[str, object]:
    return {"classify.json": _header(exp, "classify") | classification(_final_state(exp), exp.pair, exp.tol)}


def cmd_canonical(exp: Experiment, fmt: str) -> dict[str, object]:
    _require_normalized_mode(exp, "canonical")
    b0, bt, t = exp.state.residues[0], exp.state.residues[1], exp.state.t
    out = _header(exp, "canonical") | {
        "gauge_sign": GAUGE_SIGN,
        "residual": {str(s): schlesinger_residual_2pt(b0, bt, t, s) for s in (1, -1)},
        "route_discrepancy": conjugated_residues(b0, bt, t).route_discrepancy,
        "exponent_gap": to_pair(exponent_gap(b0, bt)),
    }
    ts = np.array(SLOPE_RADII)
    try:
        defects = [limit_defect(b0, bt, x * cmath.exp(1j * exp.sector.theta0)) for x in ts]
        out["limit_defect"] = {"abs_t": list(ts), "defect": defects, "slope": loglog_slope(ts, defects),
                               "expected_slope": 1 - abs(exponent_gap(b0, bt).real)}
    except CondBViolated as exc:
        out["limit_defect"] = {"error": "CondBViolated", "message": str(exc)}
    return {"canonical.json": out}


def cmd_fit(exp: Experiment, fmt: str) -> dict[str, object]:
    _require_normalized_mode(exp, "fit")
    samples = sample_ray(exp.state, exp.sector, tol=exp.tol)
    cls = classification(samples.states[-1], exp.pair, exp.tol)
    out = _header(exp, "fit") | {"classification": cls}
    if cls["case"] == "log":
        model = fit_log_model(samples, exp.M, exp.m0)
        decay = residual_decay_slope(samples, case="log", M_list=range(1, exp.M + 1), m0=exp.m0)
    else:
        phi = from_pair(cls["phi"])
        ref = refine_phi(samples, phi, exp.M, exp.m0)
        out["refined_phi"] = to_pair(ref.phi)
        out["refine_improved"] = ref.improved
        model = fit_power_model(samples, phi, exp.M, exp.m0)
        decay = residual_decay_slope(samples, case=phi, M_list=range(1, exp.M + 1), m0=exp.m0)
    out["model"] = model.to_json()
    out["residual_decay"] = [[m, r] for m, r in decay]
    return {"fit.json": out}


def cmd_p6(exp: Experiment, fmt: str) -> dict[str, object]:
    _require_normalized_mode(exp, "p6-check")
    res = flow(exp.state, _flow_path(exp), exp.tol)
    cv = cross_validate(res.states, exp.tol)
    buf = io.StringIO()
    cv.write_csv(buf)
    p = cv.params
    summary = _header(exp, "p6-check") | {
        "params": {k: to_pair(getattr(p, k)) for k in ("alpha", "beta", "gamma", "delta")},
        "max_rel_dev": cv.max_rel_dev,
        "n_points": len(cv.t),
        "n_excluded": cv.n_excluded,
    }
    return {"p6_check.csv": buf.getvalue(), "p6_summary.json": summary}


HANDLERS = {
    "flow": cmd_flow,
    "monodromy": cmd_monodromy,
    "classify": cmd_classify,
    "canonical": cmd_canonical,
    "fit": cmd_fit,
    "p6-check": cmd_p6,
}


PATH_COMMANDS = ("flow", "p6-check")
NORMALIZED_COMMANDS = ("canonical", "fit", "p6-check")


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_command(command: str, exp: Experiment, fmt: str) -> dict[str, object]:
    if command != "all":
        return HANDLERS[command](exp, fmt)
    names = [c for c in HANDLERS if (c not in PATH_COMMANDS or exp.path is not None)
             and (c not in NORMALIZED_COMMANDS or exp.state.normalized)]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        parts = list(pool.map(lambda c: HANDLERS[c](exp, fmt), names))
    artifacts: dict[str, object] = {}
    for part in parts:
        artifacts.update(part)
    return artifacts


def write_artifacts(out_dir: Path, artifacts: dict[str, object]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(artifacts):
        body = artifacts[name]
        text = body if isinstance(body, str) else json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n"
        (out_dir / name).write_text(text)


def _jsonable(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, complex):
        return to_pair(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schlesinger-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--tol-rel", type=float, default=None)
    p.add_argument("--tol-abs", type=float, default=None)
    p.add_argument("--sector", default=None, help="theta0,psi,r")
    p.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            raw = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config: {exc}", "/") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"invalid JSON: {exc}", "/") from None
        exp = load_experiment(raw, args)
        artifacts = run_command(args.command, exp, args.format)
        write_artifacts(args.out, artifacts)
    except ConfigInvalid as exc:
        print(f"error: ConfigInvalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchlesingerLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
