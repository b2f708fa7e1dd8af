"""Command-line front end: ``bravl identities|spectrum|virial|bounds|sweep``.

Every command writes ``<out>/<command>.json`` (an output record) and, when
``csv`` is among the formats, ``<out>/<command>.csv``.  Exit codes: 0 ok,
1 usage error, 2 verification failure, 3 non-finite numbers encountered.

Numerical modules are imported lazily so that ``BRAVL_THREADS`` can cap the
BLAS thread pools before numpy loads.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NONFINITE = 0, 1, 2, 3
COMMANDS = ("identities", "spectrum", "virial", "bounds", "sweep")
FORMATS = ("json", "csv")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

DEFAULTS = {
    "channel": "0,1/2",
    "nu": None,
    "alpha": None,
    "Z": None,
    "nodes": "100,200,400",
    "sigma": 1.0,
    "tol": None,
    "out": ".",
    "format": "json,csv",
    "deterministic": False,
    "allow_supercritical": False,
    "massless": False,
    "level": 3,
    "eigenvectors": False,
    "export_matrix": False,
}
_BOOL_KEYS = {"deterministic", "allow_supercritical", "massless", "eigenvectors",
              "export_matrix"}


class UsageError(Exception):
    pass


# --- configuration ------------------------------------------------------------

def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys map to underscores."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        if key in _BOOL_KEYS:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{path}:{lineno}: {key} must be true or false")
            out[key] = value.lower() in ("true", "1", "yes")
        else:
            out[key] = value
    return out


def _floats(text, name) -> list[float]:
    try:
        values = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise UsageError(f"--{name} expects finite numbers")
    return values


def _ints(text, name) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated integers, got {text!r}") from None


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win) and validate the result."""
    from .kinematics import ALPHA_PHYS, NU_CRITICAL

    merged = dict(DEFAULTS)
    if args.config:
        merged.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            merged[key] = value

    cfg = {"command": command}
    from .channel import Channel
    try:
        cfg["channel"] = Channel.parse(str(merged["channel"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    nus = _floats(merged["nu"], "nu") if merged["nu"] is not None else None
    alpha = _floats(merged["alpha"], "alpha")[0] if merged["alpha"] is not None else None
    Z = _floats(merged["Z"], "Z")[0] if merged["Z"] is not None else None
    if (alpha is None) != (Z is None) and nus is None:
        raise UsageError("--alpha and --Z must be given together")
    if alpha is not None and alpha <= 0:
        raise UsageError("--alpha must be positive")
    if Z is not None and alpha is not None:
        if Z < 0:
            raise UsageError("--Z must be >= 0")
        if nus is not None and (len(nus) != 1 or abs(nus[0] - alpha * Z) > 1e-12):
            raise UsageError("--nu and --alpha*--Z disagree beyond 1e-12")
        nus = [alpha * Z]
    if nus is None:
        nus = [0.25, 0.5, 0.75] if command == "sweep" else [0.5]
    if command != "sweep" and len(nus) != 1:
        raise UsageError(f"{command} takes a single --nu value")
    if any(nu < 0 for nu in nus):
        raise UsageError("nu must be >= 0")
    allow = bool(merged["allow_supercritical"])
    if command != "bounds" and not allow and any(nu >= NU_CRITICAL for nu in nus):
        raise UsageError(f"nu must be below {NU_CRITICAL:.6f}; use --allow-supercritical")
    cfg["nus"] = nus
    cfg["alpha"] = alpha if alpha is not None else ALPHA_PHYS

    nodes = _ints(merged["nodes"], "nodes")
    if len(nodes) < 3 or any(b <= a for a, b in zip(nodes, nodes[1:])) or nodes[0] < 8:
        raise UsageError("--nodes needs >= 3 strictly increasing values, each >= 8")
    cfg["nodes"] = nodes
    sigma = _floats(merged["sigma"], "sigma")[0]
    if sigma <= 0:
        raise UsageError("--sigma must be positive")
    cfg["sigma"] = sigma
    cfg["tol"] = _floats(merged["tol"], "tol")[0] if merged["tol"] is not None else None
    if cfg["tol"] is not None and cfg["tol"] <= 0:
        raise UsageError("--tol must be positive")
    try:
        cfg["level"] = int(merged["level"])
    except ValueError:
        raise UsageError("--level must be an integer") from None
    if cfg["level"] < 1:
        raise UsageError("--level must be >= 1")
    formats = tuple(f.strip() for f in str(merged["format"]).split(",") if f.strip())
    if not formats or any(f not in FORMATS for f in formats):
        raise UsageError(f"--format must be a subset of {','.join(FORMATS)}")
    cfg["formats"] = formats
    cfg["out"] = Path(str(merged["out"]))
    for key in ("deterministic", "massless", "eigenvectors", "export_matrix"):
        cfg[key] = bool(merged[key])
    cfg["allow_supercritical"] = allow
    if cfg["massless"] and command in ("virial", "sweep"):
        raise UsageError(f"{command} needs m > 0")
    return cfg


def _config_echo(cfg: dict) -> dict:
    # the output directory is left out so reruns elsewhere stay byte-identical
    echo = {}
    for key, value in cfg.items():
        if key == "out":
            continue
        if key == "channel":
            value = value.to_dict()
        elif isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        echo[key] = value
    return echo


# --- emission -------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: NaN becomes null, infinities become strings, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist") and not isinstance(obj, (str, bytes)):
        return _clean(obj.tolist())
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit_json(record: dict) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_clean(record), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else format(value, ".17g")
    if hasattr(value, "item"):
        return _csv_cell(value.item())
    return str(value)


def emit_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else row
        writer.writerow([_csv_cell(v) for v in values])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_record(cfg: dict, payload: dict, verdicts: dict) -> dict:
    record = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg["command"],
        "config": _config_echo(cfg),
        "payload": payload,
        "verdicts": verdicts,
    }
    if not cfg["deterministic"]:
        record["timestamp"] = datetime.now(timezone.utc).isoformat()
    return record


def _write(cfg, name, record, csv_text=None, extra=()):
    out = cfg["out"]
    written = []
    if "json" in cfg["formats"]:
        atomic_write(out / f"{name}.json", emit_json(record))
        written.append(out / f"{name}.json")
    if "csv" in cfg["formats"] and csv_text is not None:
        atomic_write(out / f"{name}.csv", csv_text)
        written.append(out / f"{name}.csv")
    for filename, text in extra:
        atomic_write(out / filename, text)
        written.append(out / filename)
    return written


# --- commands -------------------------------------------------------------------

def cmd_identities(cfg: dict):
    from .legendre import verify_convolution_identities, verify_identities

    abs_tol = cfg["tol"] if cfg["tol"] is not None else 1e-8
    rel_tol = cfg["tol"] if cfg["tol"] is not None else 1e-7
    rows = []
    for r in verify_identities(cfg["level"]):
        rows.append({**r.to_dict(), "criterion": "abs_error", "tolerance": abs_tol,
                     "verdict": "PASS" if r.abs_error <= abs_tol else "FAIL"})
    for r in verify_convolution_identities(level=cfg["level"]):
        rows.append({**r.to_dict(), "criterion": "rel_error", "tolerance": rel_tol,
                     "verdict": "PASS" if r.rel_error <= rel_tol else "FAIL"})
    for row in rows:
        row["units"] = "dimensionless"
        if not math.isfinite(row["computed"]):
            raise FloatingPointError(f"identity {row['identity']} evaluated to {row['computed']}")
    verdicts = {row["identity"]: row["verdict"] for row in rows}
    header = ("identity", "computed", "reference", "abs_error", "rel_error", "criterion",
              "tolerance", "converged", "verdict")
    return {"identities": rows}, verdicts, emit_csv(header, rows), ()


def _params(cfg, nu):
    from .kinematics import PhysicalParams

    mass = 0.0 if cfg["massless"] else 1.0
    return PhysicalParams.from_nu(nu, mass=mass, alpha=cfg["alpha"])


def _vectors_csv(solution, indices) -> str:
    grid = solution.grid
    header = ["p", "weight"] + [f"phi_{k}" for k in indices]
    rows = []
    samples = [solution.node_samples(k) for k in indices]
    for i in range(grid.size):
        rows.append([grid.nodes[i], grid.weights[i]] + [s[i] for s in samples])
    return emit_csv(header, rows)


def matrix_export(matrix) -> tuple[str, str]:
    """CSV (``N``, nodes, weights, row-major matrix) and its JSON metadata sidecar."""
    N = matrix.size
    lines = [str(N),
             ",".join(_csv_cell(float(x)) for x in matrix.grid.nodes),
             ",".join(_csv_cell(float(x)) for x in matrix.grid.weights)]
    for row in matrix.matrix:
        lines.append(",".join(_csv_cell(float(x)) for x in row))
    meta = {**matrix.metadata(), "layout": ["N", "nodes", "weights", "matrix rows"],
            "units": "mc2" if matrix.params.rest_energy > 0 else "c_sigma"}
    return "\n".join(lines) + "\n", emit_json(meta)


def _spectrum(cfg):
    from .spectral import bound_states, embedded_scan

    params = _params(cfg, cfg["nus"][0])
    tol = cfg["tol"] if cfg["tol"] is not None else 1e-4
    bound = bound_states(cfg["channel"], params, cfg["nodes"], cfg["sigma"], tol,
                         cfg["allow_supercritical"])
    return params, tol, bound


def cmd_spectrum(cfg: dict):
    from .spectral import embedded_scan

    params, tol, bound = _spectrum(cfg)
    finest = bound.solutions[-1]
    payload = {"bound_states": bound.to_dict() if params.rest_energy > 0 else None,
               "finest_grid": finest.summary()}
    verdicts = {}
    extra = []
    if params.rest_energy > 0:
        scan = embedded_scan(cfg["channel"], params, cfg["nodes"], cfg["sigma"], tol,
                             cfg["allow_supercritical"], solutions=bound.solutions)
        payload["embedded_scan"] = scan.to_dict()
        stable = bound.stable_values / params.rest_energy
        lower = bound.lower_bound / params.rest_energy
        verdicts["embedded"] = "PASS" if scan.passed else "FAIL"
        verdicts["lower_bound"] = "PASS" if all(lower - 1e-3 <= v < 1 for v in stable) else "FAIL"
        verdicts["positivity"] = "PASS" if all(v > 0 for v in stable) else "FAIL"
        if cfg["eigenvectors"] and bound.values.size:
            extra.append(("spectrum_eigenvectors.csv",
                          _vectors_csv(finest, range(bound.values.size))))
    verdicts["residuals"] = "PASS" if finest.max_relative_residual() <= 1e-9 else "FAIL"
    if cfg["export_matrix"]:
        text, meta = matrix_export(finest.matrix)
        extra += [("channel_matrix.csv", text), ("channel_matrix.json", meta)]
    header = ("index", "eigenvalue", "stable", "drift")
    rows = []
    if params.rest_energy > 0:
        for k, value in enumerate(bound.values):
            rows.append({"index": k, "eigenvalue": float(value / params.rest_energy),
                         "stable": bool(bound.stable[k]), "drift": bound.drifts[k][-1]})
    return payload, verdicts, emit_csv(header, rows), extra


def cmd_virial(cfg: dict):
    from .virial import solution_residuals

    params, tol, bound = _spectrum(cfg)
    limit = cfg["tol"] if cfg["tol"] is not None else 1e-3
    rows = []
    for N, solution in zip(bound.nodes, bound.solutions):
        lam = float(solution.values[0])
        if lam >= params.rest_energy:
            continue
        cor, thm = solution_residuals(solution, 0)
        rows.append({"N": N, "eigenvalue": cor.eigenvalue,
                     "residual_corollary": cor.relative_residual,
                     "residual_theorem": thm.relative_residual,
                     "corollary": cor.to_dict(), "theorem": thm.to_dict()})
    verdicts = {}
    if len(rows) != len(bound.nodes) or not bound.stable.size or not bound.stable[0]:
        verdicts["admissible"] = "NO_ADMISSIBLE_EIGENPAIR"
    else:
        rc = [r["residual_corollary"] for r in rows]
        rt = [r["residual_theorem"] for r in rows]
        verdicts["admissible"] = "PASS"
        verdicts["decreasing"] = "PASS" if all(b < a for a, b in zip(rc, rc[1:])) else "FAIL"
        verdicts["finest_within_tol"] = "PASS" if rc[-1] <= limit else "FAIL"
        agree = all(max(a, b) <= 2 * min(a, b) or max(a, b) <= 1e-14 for a, b in zip(rc, rt))
        verdicts["forms_agree"] = "PASS" if agree else "FAIL"
    payload = {"units": "mc2", "ground_state": rows, "tolerance": limit}
    header = ("N", "eigenvalue", "residual_corollary", "residual_theorem")
    return payload, verdicts, emit_csv(header, rows), ()


def cmd_bounds(cfg: dict):
    import numpy as np

    from .virial import PROFILE_IDS, bound_profile, envelope, psi_coefficient_check

    nu = cfg["nus"][0]
    tol = cfg["tol"] if cfg["tol"] is not None else 1e-6
    profiles = {pid: bound_profile(pid, nu=nu) for pid in PROFILE_IDS}
    verdicts = {
        "ratio_r_min": "PASS" if abs(profiles["ratio_r"].extremum - 0.75) <= tol else "FAIL",
        "ratio_s_sup": "PASS" if abs(profiles["ratio_s"].extremum - 2.0) <= tol else "FAIL",
    }
    for pid in ("Phi", "Theta"):
        ok = profiles[pid].extremum <= envelope(pid, nu) + 1e-9
        verdicts[f"{pid}_envelope"] = "PASS" if ok else "FAIL"
    psi = psi_coefficient_check()
    verdicts["psi_coefficient"] = psi["verdict"]
    payload = {"nu": nu, "profiles": {k: v.to_dict() for k, v in profiles.items()},
               "psi_coefficient": psi}
    p = profiles["ratio_r"].p
    columns = np.column_stack([p] + [profiles[k].values for k in PROFILE_IDS])
    return payload, verdicts, emit_csv(("p",) + PROFILE_IDS, columns.tolist()), ()


def cmd_sweep(cfg: dict):
    from .virial import SWEEP_COLUMNS, z_sweep

    tol = 1e-4 if cfg["tol"] is None else cfg["tol"]
    rows = z_sweep(cfg["channel"], cfg["nus"], cfg["nodes"], cfg["sigma"], tol,
                   alpha=cfg["alpha"], allow_supercritical=cfg["allow_supercritical"])
    verdicts = {
        "embedded": "PASS" if all(r["embedded_verdict"] == "PASS" for r in rows) else "FAIL",
        "lower_bound": "PASS" if all(r["lower_bound_ok"] for r in rows) else "FAIL",
    }
    payload = {"units": {"lambda_min_over_mc2": "mc2", "lower_bound": "mc2",
                         "residual_corollary": "dimensionless",
                         "residual_theorem": "dimensionless"},
               "rows": rows}
    return payload, verdicts, emit_csv(SWEEP_COLUMNS, rows), ()


_HANDLERS = {
    "identities": cmd_identities,
    "spectrum": cmd_spectrum,
    "virial": cmd_virial,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
}


# --- entry point ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override its keys")
    common.add_argument("--channel", help="partial wave as L,S (e.g. 0,1/2 or 1,-1/2)")
    common.add_argument("--nu", help="alpha*Z; comma-separated list for sweep")
    common.add_argument("--alpha", help="fine-structure constant (with --Z)")
    common.add_argument("--Z", help="nuclear charge (with --alpha)")
    common.add_argument("--nodes", help="grid refinement sequence, e.g. 100,200,400")
    common.add_argument("--sigma", help="scale of the rational momentum map")
    common.add_argument("--tol", help="command tolerance (see README)")
    common.add_argument("--level", help="quadrature level for identities")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", help="json,csv or a subset")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="omit timestamps so reruns are byte-identical")
    common.add_argument("--allow-supercritical", dest="allow_supercritical",
                        action="store_true", default=None)
    common.add_argument("--massless", action="store_true", default=None,
                        help="m = 0 (spectrum only)")
    common.add_argument("--eigenvectors", action="store_true", default=None,
                        help="spectrum: also write bound-state eigenvectors as CSV")
    common.add_argument("--export-matrix", dest="export_matrix", action="store_true",
                        default=None, help="spectrum: write the finest channel matrix")
    parser = _Parser(prog="bravl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _apply_threads() -> None:
    value = os.environ.get("BRAVL_THREADS")
    if value is None:
        return
    if not value.isdigit() or int(value) < 1:
        raise UsageError("BRAVL_THREADS must be a positive integer")
    if "numpy" not in sys.modules:
        for var in _THREAD_VARS:
            os.environ[var] = value


def main(argv=None) -> int:
    import warnings

    try:
        _apply_threads()
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args.command, args)
    except UsageError as exc:
        print(f"bravl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            payload, verdicts, csv_text, extra = _HANDLERS[cfg["command"]](cfg)
        messages = sorted({str(w.message) for w in caught})
        if messages:
            payload["warnings"] = messages
        record = build_record(cfg, payload, verdicts)
        written = _write(cfg, cfg["command"], record, csv_text, extra)
    except FloatingPointError as exc:
        print(f"bravl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except ValueError as exc:
        print(f"bravl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    failed = sorted(k for k, v in verdicts.items() if v == "FAIL")
    for path in written:
        print(path)
    for key in sorted(verdicts):
        print(f"{key}: {verdicts[key]}")
    return EXIT_VERIFY if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
