"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 invariant
failure, 3 numerical failure.
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
import warnings
from pathlib import Path

import numpy as np

from . import config as cfg
from . import cutoffs, experiments
from .extension import extend
from .fields import field_from_name
from .geometry import (
    GeometryError,
    RegionTag,
    build_comb,
    build_cusp,
    build_mushroom,
    classify,
    classify_many,
    region_log2_measure,
    validate_placement,
)
from .norms import NumericalError, integrate

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so reports are strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def to_csv(header, rows, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _emit(text: str, path) -> None:
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Domain construction from config
# ---------------------------------------------------------------------------


def _mushroom(config):
    d = config["domain"]
    if d["type"] != "mushroom":
        raise cfg.ConfigError("this command needs a mushroom domain")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_mushroom(d["n"], d["p"], d["q"], d["m"])


def _field(name, spec):
    try:
        return field_from_name(name, spec)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad --field {name!r}: {exc}") from None


def _load(args):
    return cfg.load(args.config) if args.config else cfg.default_config()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_config(args) -> int:
    if args.action == "print-defaults":
        sys.stdout.write(cfg.dumps(cfg.default_config()))
        return EXIT_OK
    sys.stdout.write(cfg.dumps(_load(args)))
    return EXIT_OK


def cmd_domain(args) -> int:
    config = _load(args)
    d = config["domain"]
    if args.action == "describe":
        if d["type"] == "mushroom":
            spec = _mushroom(config)
            out = spec.to_dict()
            out["log2_measure"] = {
                str(t): region_log2_measure(spec, t)
                for t in [RegionTag("Cube"), RegionTag("Slab")]
                + [RegionTag(kind, k) for k in spec.ks for kind in ("Stem", "Head")]
            }
            out["placement_report"] = validate_placement(spec).to_dict()
        elif d["type"] == "comb":
            comb = build_comb(d["n"], d["kmax"], d["aspect_shrink"])
            out = {
                "type": "comb", "n": comb.n, "kmax": comb.kmax, "aspect_shrink": comb.aspect_shrink,
                "centers": [comb.center(k).tolist() for k in comb.ks],
                "log2_radius": [comb.log2_radius(k) for k in comb.ks],
                "height": [comb.height(k) for k in comb.ks],
            }
        else:
            cusp = build_cusp(d["n"], d["psi"])
            out = {"type": "cusp", "n": cusp.n, "profile": cusp.label, "diameter": cusp.diameter()}
        _emit(to_json(out), args.out)
        return EXIT_OK
    spec = _mushroom(config)
    if args.action == "classify":
        try:
            point = [float(v) for v in args.point.split(",")]
        except (AttributeError, ValueError):
            raise UsageError("--point needs comma-separated coordinates") from None
        print(classify(spec, point))
        return EXIT_OK
    report = validate_placement(spec)
    _emit(to_json(report.to_dict()), args.out)
    if not report.ok:
        print(f"placement check failed: {report.first()} ({len(report.violations)} violations)", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_cutoff(args) -> int:
    r = args.r
    s = np.linspace(r / 2, r, args.n_s)
    x = np.linspace(0.0, 1.0, args.n_x)
    S, X = (a.ravel() for a in np.meshgrid(s, x, indexing="ij"))
    corner = (np.abs(S - r / 2) <= 1e-15 * r) & ((X == 0) | (X == 1))
    S, X = S[~corner], X[~corner]
    Li, Lo = cutoffs.eval_Li(S, X, r), cutoffs.eval_Lo(S, X, r)
    ds, dx = cutoffs.local_grad_Li(S, X, r)
    bound = cutoffs.gradient_bound(S, X, r)
    rows = zip(S, X, Li, Lo, np.hypot(ds, dx), bound)
    _emit(to_csv(("s", "xn", "Li", "Lo", "grad_Li_norm", "bound"), rows), args.out)
    return EXIT_OK


def _grid(spec_n, text):
    try:
        counts = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError("--grid needs comma-separated integers") from None
    if len(counts) != spec_n or min(counts) < 1:
        raise UsageError(f"--grid needs {spec_n} positive counts")
    axes = [(np.arange(c) + 0.5) / c * (3.0 if i == spec_n - 1 else 1.0) for i, c in enumerate(counts)]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def cmd_extend(args) -> int:
    config = _load(args)
    spec = _mushroom(config)
    u = _field(args.field, spec)
    E = extend(spec, u)
    X = _grid(spec.n, args.grid)
    vals = E(X)
    grads = np.linalg.norm(E.gradient(X), axis=1)
    cls = classify_many(spec, X)
    if not np.all(np.isfinite(vals)) or not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite extension values on the grid")
    header = [f"x{i + 1}" for i in range(spec.n)] + ["region", "E", "grad_E_norm"]
    rows = [list(X[i]) + [str(cls.tag(i)), vals[i], grads[i]] for i in range(X.shape[0])]
    _emit(to_csv(header, rows), args.out)
    return EXIT_OK


def cmd_norm(args) -> int:
    config = _load(args)
    spec = _mushroom(config)
    quad = cfg.quad_spec(config)
    u = _field(args.field, spec)
    report = integrate(extend(spec, u), args.regions, args.p, args.integrand, quad, spec)
    payload = {"config": config, "seed": quad.seed, "field": args.field, "regions": args.regions, "report": report.to_dict()}
    _emit(to_json(payload), args.out)
    if args.csv:
        write_atomic(args.csv, to_csv(("region", "value", "log2_value", "stderr"), report.csv_rows()))
    print(f"{report.integrand} p={report.p:g} total={report.total:.12g} log2={report.log2_total:.12g}", file=sys.stderr)
    return EXIT_OK


def _experiment_passes(name: str, table: experiments.RateTable) -> bool:
    if name == "homog":
        ok = all(table.verdicts.values())
        if max(table.meta["mlist"]) >= 12:
            ok = ok and table.meta["log2_mass_last_over_first"] > math.log2(1e3)
        return ok
    if name == "opnorm":
        ok = table.verdicts["collar_series_convergent"] == table.verdicts["strict_regime"]
        return ok and table.meta.get("max_ratio_rel_change", 0.0) <= 0.2
    fit = table.fits["norm_W1p"]
    return fit["rel_error"] <= 0.05 and table.verdicts["consistent"]


def run_experiment(config: dict, name: str) -> experiments.RateTable:
    d = config["domain"]
    ex = config["experiment"]
    quad = cfg.quad_spec(config)
    window = tuple(ex["window"])
    if name == "rate6":
        if d["type"] != "comb":
            raise cfg.ConfigError("rate6 needs a comb domain")
        comb = build_comb(d["n"], d["kmax"], d["aspect_shrink"])
        return experiments.rate_section6(comb, min(ex["kmax"], comb.kmax), d["p"], d["q"], quad, window)
    spec = _mushroom(config)
    if name == "homog":
        return experiments.homog_counterexample_report(spec, [m for m in ex["mlist"] if m <= spec.m], quad)
    if name == "opnorm":
        return experiments.operator_norm_sweep(spec, ex["fields"], ex["mlist"], quad)
    return experiments.rate_section7(spec, min(ex["kmax"], spec.m), quad, window)


def cmd_experiment(args) -> int:
    config = _load(args)
    name = args.name
    table = run_experiment(config, name)
    quad = cfg.quad_spec(config)
    payload = {"config": config, "seed": quad.seed, "experiment": name, "table": table.to_dict()}
    out = args.out or config["output"]["json"]
    csv_path = args.csv or config["output"]["csv"]
    _emit(to_json(payload), out)
    if csv_path:
        slopes = {q: f["slope"] for q, f in table.fits.items()}
        rows = [row + (slopes.get(row[1]),) for row in table.csv_rows()]
        comment = "config " + json.dumps(config, sort_keys=True, separators=(",", ":"))
        write_atomic(csv_path, to_csv(experiments.CSV_HEADER + ("fitted_slope",), rows, comment))
    passed = _experiment_passes(name, table)
    print(f"experiment {name}: {'pass' if passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_INVARIANT


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sobexlab", description="Extension-domain numerics for mushroom, comb and cusp domains.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config", help="print or check configurations")
    p.add_argument("action", choices=("print-defaults", "check"))
    p.add_argument("--config")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("domain", help="describe, classify or validate a domain")
    p.add_argument("action", choices=("describe", "classify", "validate"))
    p.add_argument("--config")
    p.add_argument("--point", help="comma-separated coordinates (classify)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_domain)

    p = sub.add_parser("cutoff", help="tabulate the collar cut-offs")
    p.add_argument("action", choices=("sample",))
    p.add_argument("--r", type=float, default=0.5, help="outer collar radius")
    p.add_argument("--n-s", type=int, default=21)
    p.add_argument("--n-x", type=int, default=21)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cutoff)

    p = sub.add_parser("extend", help="sample the extension on a grid")
    p.add_argument("action", choices=("sample",))
    p.add_argument("--config")
    p.add_argument("--field", default="poly:1")
    p.add_argument("--grid", default="8,8,24")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("norm", help="integrate |E u|^p or |grad E u|^p over regions")
    p.add_argument("--config")
    p.add_argument("--field", default="poly:1")
    p.add_argument("--integrand", choices=("lp", "grad"), default="lp")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument(
        "--regions", default="all",
        choices=("all", "omega", "cube", "stems", "heads", "slab", "collars", "stem_collars", "head_collars"),
    )
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("experiment", help="run a rate table or sweep")
    p.add_argument("name", choices=experiments_names())
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_experiment)
    return parser


def experiments_names():
    return cfg.EXPERIMENT_NAMES


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "cutoff" and not 0 < args.r <= 1:
            raise UsageError("--r must lie in (0, 1]")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (cfg.ConfigError, GeometryError) as exc:
        print(f"sobexlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"sobexlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
