"""Command-line front end.

Exit codes: 0 success, 1 input or validation error, 2 numerical check failed.
Results go to stdout (or ``--output``); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import composite, ensemble, linalg as la, measurement
from .errors import NumericalError, ValidationError

log = logging.getLogger("eigensemble")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class InputError(ValidationError):
    """Problem document or flag could not be turned into a valid model."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def format_real(x: float) -> str:
    return format(float(x), ".17g")


def to_json(obj, indent: int = 2) -> str:
    """JSON text with every float written at 17 significant digits."""
    out = io.StringIO()

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, bool) or o is None:
            out.write(json.dumps(o))
        elif isinstance(o, (int, np.integer)):
            out.write(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            out.write(format_real(o) if math.isfinite(o) else "null")
        elif isinstance(o, str):
            out.write(json.dumps(o))
        elif isinstance(o, dict):
            if not o:
                out.write("{}")
                return
            out.write("{\n")
            for i, (k, v) in enumerate(o.items()):
                out.write(f"{pad}{json.dumps(str(k))}: ")
                emit(v, level + 1)
                out.write(",\n" if i < len(o) - 1 else "\n")
            out.write(end + "}")
        elif isinstance(o, (list, tuple, np.ndarray)):
            items = list(o)
            if not items:
                out.write("[]")
            elif all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in items):
                out.write("[")
                for i, v in enumerate(items):
                    emit(v, level + 1)
                    if i < len(items) - 1:
                        out.write(", ")
                out.write("]")
            else:
                out.write("[\n")
                for i, v in enumerate(items):
                    out.write(pad)
                    emit(v, level + 1)
                    out.write(",\n" if i < len(items) - 1 else "\n")
                out.write(end + "]")
        else:
            raise TypeError(f"cannot serialize {type(o).__name__}")

    emit(obj, 0)
    out.write("\n")
    return out.getvalue()


def complex_pairs(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=np.complex128).ravel()]


def result_document(command: str, digest: str, payload: dict, tolerances: dict) -> dict:
    return {
        "command": command,
        "tool_version": __version__,
        "input_digest": digest,
        "tolerances": tolerances,
        "result": payload,
    }


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_args(args: dict) -> str:
    return digest_bytes(json.dumps(args, sort_keys=True).encode())


# ---------------------------------------------------------------------------
# input documents
# ---------------------------------------------------------------------------

def load_document(path: str) -> tuple[dict, bytes]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 text") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    return doc, raw


def _field(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise InputError(f"{where}{key}: missing field")
    return doc[key]


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise InputError(f"{where}: expected a finite number")
    return float(x)


def _integer(x, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise InputError(f"{where}: expected an integer")
    return x


def parse_complex(x, where: str) -> complex:
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(_number(x[0], f"{where}[0]"), _number(x[1], f"{where}[1]"))
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(_number(x, where))
    raise InputError(f"{where}: expected an [re, im] pair")


def parse_vector(x, where: str) -> np.ndarray:
    if not isinstance(x, list) or not x:
        raise InputError(f"{where}: expected a non-empty list of [re, im] pairs")
    return np.array([parse_complex(z, f"{where}[{i}]") for i, z in enumerate(x)], dtype=np.complex128)


def parse_grid(x, where: str) -> np.ndarray:
    if not isinstance(x, list) or not x:
        raise InputError(f"{where}: expected a non-empty list of rows")
    rows = [parse_vector(r, f"{where}[{i}]") for i, r in enumerate(x)]
    if len({r.size for r in rows}) != 1:
        raise InputError(f"{where}: rows differ in length")
    return np.array(rows)


def parse_mixture(doc: dict) -> ensemble.ProjectorMixture:
    alpha = parse_vector(_field(doc, "alpha"), "alpha")
    beta = parse_vector(_field(doc, "beta"), "beta")
    p_alpha = _number(_field(doc, "p_alpha"), "p_alpha")
    if not 0.0 < p_alpha < 1.0:
        raise InputError(f"p_alpha: must lie in the open interval (0, 1), got {p_alpha!r}")
    if alpha.size != beta.size:
        raise InputError(f"beta: length {beta.size} differs from alpha length {alpha.size}")
    for name, v in (("alpha", alpha), ("beta", beta)):
        n2 = float(np.vdot(v, v).real)
        if abs(n2 - 1.0) > ensemble.EXACT_TOL:
            raise InputError(f"{name}: not normalized (<v|v> = {n2!r})")
    try:
        return ensemble.ProjectorMixture(alpha, beta, p_alpha)
    except ValidationError as exc:
        raise InputError(str(exc)) from exc


def parse_simulation(doc: dict, seed_override: int | None) -> tuple[measurement.MeasurementModel, int]:
    system = parse_vector(_field(doc, "system"), "system")
    obs_matrix = parse_grid(_field(doc, "observable"), "observable")
    shifts = doc.get("shifts")
    if shifts is not None:
        if not isinstance(shifts, list):
            raise InputError("shifts: expected a list of integers")
        shifts = [_integer(k, f"shifts[{i}]") for i, k in enumerate(shifts)]
    ptr = _field(doc, "pointer")
    if not isinstance(ptr, dict):
        raise InputError("pointer: expected an object")
    env = _field(doc, "environment")
    if not isinstance(env, dict):
        raise InputError("environment: expected an object")
    steps = _integer(_field(doc, "steps"), "steps")
    if steps < 1:
        raise InputError("steps: must be at least 1")
    seed = seed_override if seed_override is not None else _integer(doc.get("seed", 0), "seed")
    try:
        obs = measurement.Observable.from_matrix(obs_matrix, shifts)
        pointer = measurement.PointerLattice(
            _integer(_field(ptr, "dim", "pointer."), "pointer.dim"),
            _integer(ptr.get("initial_index", 0), "pointer.initial_index"),
        )
        cfg = measurement.EnvironmentConfig(
            dim_n=_integer(_field(env, "dim_n", "environment."), "environment.dim_n"),
            seed=seed,
            events_per_step=_integer(env.get("events_per_step", 1), "environment.events_per_step"),
            mode=env.get("mode", "random-vector"),
        )
        norm2 = float(np.vdot(system, system).real)
        if abs(norm2 - 1.0) > la.NORM_TOL:
            raise InputError(f"system: not normalized (<v|v> = {norm2!r})")
        model = measurement.MeasurementModel(system, obs, pointer, cfg)
        measurement.correlated_state(model.system, obs, pointer)
    except InputError:
        raise
    except ValidationError as exc:
        raise InputError(str(exc)) from exc
    return model, steps


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

class CommandResult:
    def __init__(self, document: dict, table: tuple[list, list] | None = None,
                 comments: list[str] | None = None, exit_code: int = EXIT_OK):
        self.document = document
        self.table = table
        self.comments = comments or []
        self.exit_code = exit_code


def cmd_decompose(path: str, tol: float = 1e-10) -> CommandResult:
    doc, raw = load_document(path)
    m = parse_mixture(doc)
    e = ensemble.eigen_decompose(m)
    rho = ensemble.build_density(m)
    oracle = la.hermitian_eig(rho)
    ev_dev = max(abs(e.eigenvalues[k] - oracle.eigenvalues[k]) for k in range(2))
    recon_err = float(np.max(np.abs(ensemble.reconstruct(e) - rho)))
    angle = None
    if not e.degenerate and e.gap > 1e-6:
        angle = max(la.principal_angle(e.eigenvectors[k], oracle.eigenvectors[k]) for k in range(2))
    ortho = abs(np.vdot(*e.eigenvectors))
    payload = {
        "c": e.c,
        "p_alpha": m.p_alpha,
        "p_beta": m.p_beta,
        "prat": e.prat,
        "roots": list(e.roots) if e.roots is not None else None,
        "eigenvalues": list(e.eigenvalues),
        "eigenvectors": [complex_pairs(v) for v in e.eigenvectors],
        "degenerate": e.degenerate,
        "naive_interpretation_residual": ensemble.naive_interpretation_residual(m),
        "oracle": {
            "eigenvalues": [float(x) for x in oracle.eigenvalues[:2]],
            "max_eigenvalue_deviation": ev_dev,
            "max_eigenvector_angle": angle,
            "orthogonality": ortho,
            "reconstruction_error": recon_err,
        },
    }
    passed = ev_dev <= tol and recon_err <= tol and ortho <= tol
    if not passed:
        log.error("closed form disagrees with the Jacobi oracle beyond tol=%g", tol)
    document = result_document("decompose", digest_bytes(raw), payload, {"tol": tol, "angle_tol": 1e-8})
    return CommandResult(document, exit_code=EXIT_OK if passed else EXIT_NUMERIC)


def cmd_scan_degeneracy(prat_min: float, prat_max: float, steps: int, tol: float = 1e-10) -> CommandResult:
    try:
        curve = ensemble.degeneracy_scan(prat_min, prat_max, steps)
    except ValidationError as exc:
        raise InputError(str(exc)) from exc
    rows = [[s.prat, s.y, s.c_degenerate] for s in curve.samples]
    payload = {"samples": [{"prat": s.prat, "y": s.y, "c_degenerate": s.c_degenerate} for s in curve.samples]}
    args = {"prat_min": prat_min, "prat_max": prat_max, "steps": steps}
    document = result_document("scan-degeneracy", digest_args(args), payload, {"tol": tol})
    return CommandResult(document, table=(["prat", "y", "c_degenerate"], rows))


def cmd_schmidt(path: str, renormalize: bool = False, tol: float = 1e-10) -> CommandResult:
    doc, raw = load_document(path)
    grid = parse_grid(_field(doc, "amplitudes"), "amplitudes")
    n = float(np.linalg.norm(grid))
    if n == 0.0:
        raise InputError("amplitudes: zero state")
    if abs(n - 1.0) > composite.NORM_TOL:
        if not renormalize:
            raise InputError(f"amplitudes: state norm is {n!r}; pass --renormalize to rescale")
        grid = grid / n
    state = composite.BipartiteState(grid)
    form = composite.schmidt(state)
    s_a = composite.von_neumann_entropy(composite.partial_trace(state, "A"))
    s_b = composite.von_neumann_entropy(composite.partial_trace(state, "B"))
    recon = float(np.max(np.abs(form.reconstruct() - state.amplitudes)))
    payload = {
        "dims": list(state.dims),
        "coefficients": [float(x) for x in form.coefficients],
        "left_vectors": [complex_pairs(v) for v in form.left_vectors],
        "right_vectors": [complex_pairs(v) for v in form.right_vectors],
        "entropy_a": s_a,
        "entropy_b": s_b,
        "entropy_gap": abs(s_a - s_b),
        "reconstruction_error": recon,
    }
    passed = abs(s_a - s_b) <= tol and recon <= tol
    document = result_document("schmidt", digest_bytes(raw), payload, {"tol": tol})
    return CommandResult(document, exit_code=EXIT_OK if passed else EXIT_NUMERIC)


def cmd_simulate(path: str, seed: int | None = None, tol: float = 1e-10) -> CommandResult:
    doc, raw = load_document(path)
    model, steps = parse_simulation(doc, seed)
    trace = measurement.run_decoherence(model, steps)
    if trace.efold_time is None:
        log.warning("no e-folding time fitted (%s)", trace.flag)
    rows = [[r.step, r.coherence] for r in trace.steps]
    payload = {
        "seed": model.environment.seed,
        "steps": [{"step": r.step, "coherence": r.coherence} for r in trace.steps],
        "efold_time": trace.efold_time,
        "fit_residual": trace.fit_residual,
        "fit_window": list(trace.fit_window) if trace.fit_window else None,
        "flag": trace.flag,
    }
    comments = [
        f"efold_time,{'' if trace.efold_time is None else format_real(trace.efold_time)}",
        f"fit_residual,{'' if trace.fit_residual is None else format_real(trace.fit_residual)}",
    ]
    document = result_document("simulate", digest_bytes(raw), payload,
                               {"tol": tol, "fit_floor": measurement.FIT_FLOOR})
    return CommandResult(document, table=(["step", "coherence"], rows), comments=comments)


def parse_dims(text: str) -> tuple[int, int]:
    try:
        if "-" in text:
            lo, hi = (int(t) for t in text.split("-", 1))
        else:
            lo = hi = int(text)
    except ValueError as exc:
        raise InputError(f"--dims: expected N or LO-HI, got {text!r}") from exc
    if lo < 2 or hi < lo:
        raise InputError(f"--dims: need 2 <= LO <= HI, got {text!r}")
    return lo, hi


def oracle_suite(count: int, seed: int, dims: tuple[int, int], overlap: float | None = None,
                 perturb: float = 0.0) -> dict:
    """Closed form against the Jacobi oracle over seeded random mixtures."""
    rng = np.random.default_rng(seed)
    eps = 1e-6
    worst = {"eigenvalue_deviation": 0.0, "orthogonality": 0.0, "eigenvector_angle": 0.0, "trace_error": 0.0}
    for _ in range(count):
        c = rng.uniform(eps, 1.0 - eps) if overlap is None else overlap
        p = rng.uniform(eps, 1.0 - eps)
        dim = int(rng.integers(dims[0], dims[1] + 1))
        m = ensemble.mixture_from_overlap(c, p, dim, rng, phase=rng.uniform(0, 2 * np.pi))
        e = ensemble.eigen_decompose(m)
        lam = np.array(e.eigenvalues) + perturb
        oracle = la.hermitian_eig(ensemble.build_density(m))
        worst["eigenvalue_deviation"] = max(worst["eigenvalue_deviation"],
                                            float(np.max(np.abs(lam - oracle.eigenvalues[:2]))))
        worst["orthogonality"] = max(worst["orthogonality"], abs(np.vdot(*e.eigenvectors)))
        worst["trace_error"] = max(worst["trace_error"], abs(lam.sum() - 1.0))
        if not e.degenerate:
            worst["eigenvector_angle"] = max(
                worst["eigenvector_angle"],
                *(la.principal_angle(e.eigenvectors[k], oracle.eigenvectors[k]) for k in range(2)))
    return worst


def cmd_oracle_check(count: int, seed: int, dims: str = "2-8", overlap: float | None = None,
                     tol: float = 1e-10, perturb: float = 0.0) -> CommandResult:
    if count < 1:
        raise InputError("--count: must be at least 1")
    if overlap is not None and not 0.0 <= overlap < 1.0 - 1e-9:
        raise InputError("--overlap: must lie in [0, 1 - 1e-9)")
    lo_hi = parse_dims(dims)
    worst = oracle_suite(count, seed, lo_hi, overlap, perturb)
    angle_tol = 1e-8
    passed = (worst["eigenvalue_deviation"] <= tol and worst["orthogonality"] <= tol
              and worst["eigenvector_angle"] <= angle_tol)
    payload = dict(worst, count=count, seed=seed, dims=list(lo_hi), passed=passed)
    args = {"count": count, "seed": seed, "dims": list(lo_hi), "overlap": overlap, "perturb": perturb}
    document = result_document("oracle-check", digest_args(args), payload, {"tol": tol, "angle_tol": angle_tol})
    if not passed:
        log.error("oracle check failed: %s", worst)
    return CommandResult(document, exit_code=EXIT_OK if passed else EXIT_NUMERIC)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v) if math.isfinite(v) else ""
    return str(v)


def _flatten(prefix: str, v, rows: list):
    if isinstance(v, dict):
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else k, x, rows)
    elif isinstance(v, (list, tuple)):
        for i, x in enumerate(v):
            _flatten(f"{prefix}[{i}]", x, rows)
    else:
        rows.append([prefix, v])


def render(result: CommandResult, fmt: str) -> str:
    if fmt == "json":
        return to_json(result.document)
    lines = [f"# command,{result.document['command']}",
             f"# tool_version,{result.document['tool_version']}",
             f"# input_digest,{result.document['input_digest']}"]
    lines += [f"# {c}" for c in result.comments]
    if result.table is not None:
        header, rows = result.table
    else:
        header, rows = ["field", "value"], []
        _flatten("", result.document["result"], rows)
    lines.append(",".join(header))
    lines += [",".join(_csv_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0, or the document's seed)")
    common.add_argument("--tol", type=float, default=1e-10, help="numerical check tolerance (default 1e-10)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", default=None, help="write results here instead of stdout")

    parser = _Parser(prog="eigensemble", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", parents=[common], help="eigen-ensemble of a two-projector mixture")
    p.add_argument("path")

    p = sub.add_parser("scan-degeneracy", parents=[common], help="tabulate the degeneracy radicand")
    p.add_argument("--prat-min", type=float, required=True)
    p.add_argument("--prat-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)

    p = sub.add_parser("schmidt", parents=[common], help="Schmidt form and entropies of a bipartite state")
    p.add_argument("path")
    p.add_argument("--renormalize", action="store_true")

    p = sub.add_parser("simulate", parents=[common], help="measurement chain with environmental decoherence")
    p.add_argument("path")

    p = sub.add_parser("oracle-check", parents=[common], help="closed form vs Jacobi oracle on random mixtures")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--dims", default="2-8", help="ambient dimension N or range LO-HI (default 2-8)")
    p.add_argument("--overlap", type=float, default=None, help="fix |<alpha|beta>| instead of sampling it")
    p.add_argument("--perturb-eigenvalues", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "decompose":
            result = cmd_decompose(args.path, args.tol)
        elif args.command == "scan-degeneracy":
            result = cmd_scan_degeneracy(args.prat_min, args.prat_max, args.steps, args.tol)
        elif args.command == "schmidt":
            result = cmd_schmidt(args.path, args.renormalize, args.tol)
        elif args.command == "simulate":
            result = cmd_simulate(args.path, args.seed, args.tol)
        else:
            result = cmd_oracle_check(args.count, 0 if args.seed is None else args.seed, args.dims,
                                      args.overlap, args.tol, args.perturb_eigenvalues)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    text = render(result, args.format)
    if args.output:
        with open(args.output, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return result.exit_code


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
