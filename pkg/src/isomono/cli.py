"""Command-line entry point: ``isomono <command> [options]``.

Every command prints one JSON report on stdout.  Failures print
``{"error": {"type", "message", "exit_code"}}`` instead.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import hashlib
import json
import os
from pathlib import Path
import sys
import time
from typing import Any, Callable, Sequence

from . import __version__
from .connection import (
    Instance,
    Kind,
    apparent_data,
    assemble_normal_form,
    instance_from_json,
    instance_to_json,
    to_E1,
    validate,
)
from .errors import (
    BadIndex,
    FlowSingular,
    IntegrationFailure,
    InvalidInstance,
    IsomonoError,
    KindMismatch,
    NoSolution,
    NotADeformationDirection,
    UnknownDirection,
)
from .exactalg import format_rational, value_of
from .isoflow import (
    DeformationDirection,
    admissible_directions,
    delta_omega,
    flow,
    solve_upsilon,
    trace_residue_sum,
)
from .localform import reduce_point
from .reference_cases import CASES, kimura_constants, reproduce
from .symplectic import OmegaEvaluator, coordinate_directions, fiber_directions, hamiltonians, omega_matrix

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INTERNAL = 3
EXIT_DISCREPANCY = 4
EXIT_NUMERIC = 5

SCHEMA_HELP = """\
instance file (JSON):
  {"schema_version": 1,
   "points": [{"label": "t1", "pos": "0", "order": 2, "kind": "un",
               "theta": {"plus": ["a0", "a1"], "minus": ["b0", "b1"]}},
              {"label": "inf", "pos": "inf", "order": 5, "kind": "ra",
               "theta": {"theta": ["c0", ..., "c8"]}}, ...],
   "darboux": [{"q": "1/3", "p": "-2"}, ...],
   "options": {"truncation": 0, "margin": 1e-6, "rtol": 1e-9}}
  kinds: reg | un | ra.  Rationals are strings "p/q".
  Finite points must start with t1 = 0, t2 = 1; exactly one point is "inf".

report (JSON on stdout):
  {"command", "instance_digest", "outputs", "diagnostics": [...]}
  plus "timing" (seconds) when --timing is given; without it exact
  commands are byte-identical across runs.

exit codes:
  0 ok, 2 invalid input, 3 internal inconsistency,
  4 discrepancy (failed certificate or closed-form mismatch),
  5 numerical failure (flow hit a singularity, integrator underflow).

environment:
  ISOMONO_THREADS caps the worker processes used by `certify`.
"""


def _rat(x: Any) -> str:
    return format_rational(value_of(x))


def _digest(inst: Instance) -> str:
    blob = json.dumps(instance_to_json(inst), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _threads() -> int:
    raw = os.environ.get("ISOMONO_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidInstance(f"ISOMONO_THREADS must be an integer, got {raw!r}") from None


def _load(path: str) -> tuple[Instance, dict[str, Any]]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInstance(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInstance(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidInstance("instance file must hold a JSON object")
    if data.get("schema_version") != 1:
        raise InvalidInstance(f"unsupported schema_version {data.get('schema_version')!r}")
    return instance_from_json(data), dict(data.get("options", {}))


def _require_valid(inst: Instance) -> list[dict[str, Any]]:
    diags = validate(inst.sing, inst.darboux)
    failed = [d for d in diags if not d.ok]
    if failed:
        raise InvalidInstance("; ".join(f"{d.check}: {d.detail}" if d.detail else d.check for d in failed))
    return [{"check": d.check, "ok": d.ok, "detail": d.detail} for d in diags]


def _darboux_json(points: Sequence[Any]) -> list[dict[str, str]]:
    return [{"q": _rat(d.q), "p": _rat(d.p)} for d in points]


def _matrix_json(conn: Any) -> list[list[dict[str, list[str]]]]:
    return [[conn.entry(i, j).to_json() for j in range(2)] for i in range(2)]


# ---------------------------------------------------------------------------
# commands take the parsed arguments, the instance (if any) and its
# options, and return (outputs, diagnostics, exit code)

Result = tuple[dict[str, Any], list[Any], int]
Options = dict[str, Any]


def cmd_validate(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = validate(inst.sing, inst.darboux)
    ok = all(d.ok for d in diags)
    out = {"valid": ok, "n": inst.sing.n}
    return out, [{"check": d.check, "ok": d.ok, "detail": d.detail} for d in diags], EXIT_OK if ok else EXIT_VALIDATION


def _is_kimura_shape(inst: Instance) -> bool:
    pts = inst.sing.points
    return len(pts) == 1 and pts[0].is_infinite and pts[0].kind is Kind.RAMIFIED and pts[0].order == 5


def cmd_build(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = _require_valid(inst)
    nf = assemble_normal_form(inst.sing, inst.darboux)
    e1 = to_E1(nf)
    recovered = apparent_data(e1)
    expected = sorted(inst.darboux, key=lambda d: value_of(d.q))
    round_trip = sorted(recovered, key=lambda d: value_of(d.q)) == expected
    out: dict[str, Any] = {
        "n": nf.n,
        "C_tilde": nf.C_tilde.to_json(),
        "omega_normal_form": _matrix_json(nf.connection()),
        "omega_E1": _matrix_json(e1),
        "apparent_round_trip": {"ok": round_trip, "recovered": _darboux_json(recovered)},
    }
    if _is_kimura_shape(inst):
        K1, K2 = kimura_constants(nf)
        out["K"] = {"K1": _rat(K1), "K2": _rat(K2)}
    return out, diags, EXIT_OK if round_trip else EXIT_INTERNAL


def cmd_reduce(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = _require_valid(inst)
    conn = assemble_normal_form(inst.sing, inst.darboux).connection()
    extra = args.order if args.order is not None else int(options.get("truncation", 0))
    labels = [args.point] if args.point else [p.label for p in inst.sing.points]
    out: dict[str, Any] = {}
    for label in labels:
        try:
            pt = inst.sing.point(label)
        except KeyError:
            raise InvalidInstance(f"no point labelled {label}") from None
        red = reduce_point(conn, label, 2 * pt.order - 1 + extra)
        if pt.is_ramified:
            theta: Any = [_rat(v) for v in red.theta]
        else:
            theta = {"plus": [_rat(v[0]) for v in red.theta], "minus": [_rat(v[1]) for v in red.theta]}
        out[label] = {
            "kind": pt.kind.value,
            "framing": [[_rat(e) for e in row] for row in red.framing.Phi.rows()],
            "theta": theta,
            "reduced": [[[_rat(e) for e in row] for row in B.rows()] for B in red.reduced],
        }
    return out, diags, EXIT_OK


def cmd_hamiltonians(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = _require_valid(inst)
    H = hamiltonians(inst)
    out = {group: {k: _rat(v) for k, v in values.items()} for group, values in H.items()}
    return out, diags, EXIT_OK


def cmd_omega(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = _require_valid(inst)
    ev = OmegaEvaluator(inst)
    if args.pairs == "canonical":
        names = fiber_directions(inst)
        mat = omega_matrix(names, lambda a, b: ev.krichever(a, b, "fiber"))
        ref = omega_matrix(names, ev.canonical)
    else:
        names = coordinate_directions(inst)
        mat = omega_matrix(names, lambda a, b: ev.krichever(a, b, "extended"))
        ref = omega_matrix(names, ev.canonical)
    diff = [[_rat(a - b) for a, b in zip(r1, r2)] for r1, r2 in zip(mat, ref)]
    # fiber pairs must agree exactly; off the fiber only base-base entries may differ
    matches = mat == ref if args.pairs == "canonical" else _fiber_rows_agree(names, mat, ref)
    out = {
        "names": names,
        "krichever": [[_rat(v) for v in row] for row in mat],
        "canonical": [[_rat(v) for v in row] for row in ref],
        "difference": diff,
        "fiber_pairs_match": matches,
    }
    return out, diags, EXIT_OK if matches else EXIT_DISCREPANCY


def _fiber_rows_agree(names: list[str], mat: list[list[Any]], ref: list[list[Any]]) -> bool:
    fiber = {k for k, name in enumerate(names) if name[0] in "qp"}
    return all(mat[a][b] == ref[a][b] for a in range(len(names)) for b in range(len(names)) if a in fiber or b in fiber)


def _certify_one(inst: Instance, direction: DeformationDirection) -> dict[str, Any]:
    conn = to_E1(assemble_normal_form(inst.sing, inst.darboux))
    delta = delta_omega(inst, direction)
    residue_sum = trace_residue_sum(delta, [p.position for p in inst.sing.finite])
    row: dict[str, Any] = {"direction": str(direction), "trace_residue_sum": _rat(residue_sum)}
    try:
        sol = solve_upsilon(conn, delta)
    except NoSolution as exc:
        row.update(ok=False, error=str(exc))
        return row
    row.update(ok=residue_sum == 0, budget_extra=sol.budget_extra, unknowns=sol.unknowns, nullspace_dim=sol.nullspace_dim)
    return row


def cmd_certify(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = _require_valid(inst)
    dirs = admissible_directions(inst)
    workers = min(_threads(), len(dirs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_certify_one, [inst] * len(dirs), dirs))
    else:
        rows = [_certify_one(inst, d) for d in dirs]
    ok = all(r["ok"] for r in rows)
    return {"all_ok": ok, "directions": rows}, diags, EXIT_OK if ok else EXIT_DISCREPANCY


def cmd_flow(args: argparse.Namespace, inst: Instance, options: Options) -> Result:
    diags = _require_valid(inst)
    direction = DeformationDirection.parse(args.dir)
    margin = args.margin if args.margin is not None else float(options.get("margin", 1e-6))
    traj = flow(inst, direction, args.h, args.steps, margin=margin)
    states = [s.to_json() for s in traj]
    if args.out:
        Path(args.out).write_text(json.dumps(states, indent=1) + "\n")
    out: dict[str, Any] = {"direction": str(direction), "h": args.h, "steps": args.steps, "final": states[-1]}
    out["trajectory_file" if args.out else "trajectory"] = args.out or states
    return out, diags, EXIT_OK


def cmd_reproduce(args: argparse.Namespace, inst: None, options: Options) -> Result:
    comps = reproduce(args.case, seed=args.seed, samples=args.samples, height=args.height)
    bad = [c for c in comps if c.discrepancy != 0]
    worst = max((abs(c.discrepancy) for c in comps), default=0)
    out = {
        "case": args.case,
        "seed": args.seed,
        "samples": args.samples,
        "height": args.height,
        "checks": len(comps),
        "max_discrepancy": _rat(worst),
        "failures": [
            {"name": c.name, "sample": c.sample, "computed": _rat(c.computed), "expected": _rat(c.expected)} for c in bad
        ],
    }
    return out, [], EXIT_OK if not bad else EXIT_DISCREPANCY


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isomono",
        description="Exact isomonodromic deformations of rank-2 connections on the sphere.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--timing", action="store_true", help="add wall-clock timing to the report")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable[..., Result], help_text: str, instance: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        if instance:
            p.add_argument("instance", help="instance JSON file")
        p.set_defaults(func=fn)
        return p

    add("validate", cmd_validate, "itemised structural checks of an instance")
    add("build", cmd_build, "normal form, O+O(1) transform and apparent round trip")
    p = add("reduce", cmd_reduce, "formal local reductions at the singular points")
    p.add_argument("--point", help="only this point label")
    p.add_argument("--order", type=int, help="extra orders beyond the Hamiltonian range")
    add("hamiltonians", cmd_hamiltonians, "Hamiltonians of every deformation direction")
    p = add("omega", cmd_omega, "Krichever 2-form against the canonical form")
    p.add_argument("--pairs", choices=("canonical", "all"), default="canonical", help="fiber pairs or every coordinate pair")
    add("certify", cmd_certify, "solve for a horizontal lift along every admissible direction")
    p = add("flow", cmd_flow, "RK4 integration of the Hamiltonian flow in (q, eta)")
    p.add_argument("--dir", required=True, help="theta_un:i:l:+ | theta_ra:i:l | t:i")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--margin", type=float, help="minimum distance between q_j and singular points")
    p.add_argument("--out", help="write the trajectory (array of states) here")
    p = add("reproduce", cmd_reproduce, "closed-form reference checks at seeded rational samples", instance=False)
    p.add_argument("case", choices=sorted(CASES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--height", type=int, default=50, help="bound on numerators and denominators")
    return parser


_VALIDATION_ERRORS = (InvalidInstance, NotADeformationDirection, UnknownDirection, BadIndex, KindMismatch)
_NUMERIC_ERRORS = (FlowSingular, IntegrationFailure)


def _error(exc: BaseException, code: int) -> int:
    payload: dict[str, Any] = {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, FlowSingular):
        payload["step"] = exc.step
    print(json.dumps({"error": payload}, indent=1, sort_keys=True))
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        inst, options, digest = None, {}, None
        if getattr(args, "instance", None):
            inst, options = _load(args.instance)
            digest = _digest(inst)
        outputs, diags, code = args.func(args, inst, options)
    except _VALIDATION_ERRORS as exc:
        return _error(exc, EXIT_VALIDATION)
    except _NUMERIC_ERRORS as exc:
        return _error(exc, EXIT_NUMERIC)
    except (IsomonoError, ArithmeticError) as exc:
        return _error(exc, EXIT_INTERNAL)
    report: dict[str, Any] = {"command": args.command, "instance_digest": digest, "outputs": outputs, "diagnostics": diags}
    if args.timing:
        report["timing"] = round(time.perf_counter() - start, 6)
    print(json.dumps(report, indent=1, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
