"""Command-line interface: ``ampute``, ``impute``, ``select``, ``simulate``,
``metrics``, and ``replay``.

Every run writes a ``manifest.json`` into its output directory recording the
command, the fully resolved configuration, the seed, per-stage timings,
failure counts, and the package version; ``replay <manifest>`` re-executes
the recorded run and reproduces its outputs byte for byte. All randomness
flows from the single ``--seed`` flag (environment-variable seed overrides
are deliberately not supported), and no subcommand writes outside its output
directory. Errors are reported as one JSON object on stderr with exit code 2
(usage), 3 (file I/O), or 4 (computation).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .ampute import ampute, load_plan
from .data import RngHandle, TransformSpec, load_csv, save_csv
from .errors import BivselError, ParseError
from .impute import ChainedEquations, IterativeForest, bootstrap_impute
from .metrics import TruthSpec, aggregate, score
from .select import DEFAULT_PI, METHOD_NAMES, default_method_spec, select_with_missing
from .sim import (
    FREQUENCY_COLUMNS,
    METRICS_COLUMNS,
    POWER_COLUMNS,
    DgpSpec,
    Missingness,
    ScenarioSpec,
    run_scenarios,
    write_table,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_COMPUTE = 4

_SCENARIO_NAMES = tuple(m.value for m in Missingness)


def _emit_error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(
        json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n"
    )
    return code


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as JSON (exit 2)."""

    def error(self, message):
        _emit_error("UsageError", message, EXIT_USAGE)
        raise SystemExit(EXIT_USAGE)


def _seed_type(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _pi_grid_type(text: str):
    try:
        grid = tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad pi grid {text!r}: {exc}") from exc
    if not grid:
        raise argparse.ArgumentTypeError("pi grid is empty")
    for pi in grid:
        if not 0.0 <= pi <= 1.0:
            raise argparse.ArgumentTypeError("pi values must lie in [0, 1]")
    return grid


class _UsageError(Exception):
    pass


def _resolve_out(outdir: str, name: str) -> str:
    if os.path.isabs(name) or ".." in name.split(os.sep):
        raise _UsageError(f"output path {name!r} must stay inside --outdir")
    return os.path.join(outdir, name)


def _impute_method(name, iterations, trees, pmm_k):
    if name == "mice":
        return ChainedEquations(iterations=iterations, pmm_k=pmm_k)
    if name == "forest":
        return IterativeForest(max_iterations=iterations, trees_per_forest=trees)
    return None  # "none"


def _write_manifest(outdir, command, argv, config, seed, timings, failures, outputs):
    manifest = {
        "artifact": "bivsel",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "failures": failures,
        "outputs": sorted(outputs),
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_outdir(path: str):
    os.makedirs(path, exist_ok=True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_ampute(args, argv):
    t0 = time.monotonic()
    out_rel = _resolve_out(args.outdir, args.out)
    plan, transforms = load_plan(args.config)
    d = load_csv(args.infile)
    t1 = time.monotonic()
    masked = ampute(d, transforms, plan, rng=RngHandle(args.seed))
    t2 = time.monotonic()
    _ensure_outdir(args.outdir)
    save_csv(masked, out_rel)
    t3 = time.monotonic()
    _write_manifest(
        args.outdir,
        "ampute",
        argv,
        {"config": args.config, "in": args.infile, "out": args.out,
         "outdir": args.outdir, "seed": args.seed},
        args.seed,
        {"load_s": t1 - t0, "compute_s": t2 - t1, "write_s": t3 - t2,
         "total_s": t3 - t0},
        0,
        [args.out],
    )
    return EXIT_OK


def _cmd_impute(args, argv):
    t0 = time.monotonic()
    d = load_csv(args.infile)
    t1 = time.monotonic()
    method = _impute_method(args.method, args.iterations, args.trees, args.pmm_k)
    result = bootstrap_impute(d, args.b_reps, method, rng=RngHandle(args.seed))
    t2 = time.monotonic()
    _ensure_outdir(args.outdir)
    outputs = []
    for i, rep in enumerate(result.replicates, start=1):
        name = f"rep_{i:04d}.csv"
        save_csv(rep, os.path.join(args.outdir, name))
        outputs.append(name)
    t3 = time.monotonic()
    _write_manifest(
        args.outdir,
        "impute",
        argv,
        {"method": args.method, "B": args.b_reps, "in": args.infile,
         "outdir": args.outdir, "seed": args.seed,
         "iterations": args.iterations, "trees": args.trees,
         "pmm_k": args.pmm_k},
        args.seed,
        {"load_s": t1 - t0, "compute_s": t2 - t1, "write_s": t3 - t2,
         "total_s": t3 - t0},
        result.n_failed,
        outputs,
    )
    return EXIT_OK


def _cmd_select(args, argv):
    t0 = time.monotonic()
    out_rel = _resolve_out(args.outdir, args.out)
    d = load_csv(args.infile)
    t1 = time.monotonic()
    method_spec = default_method_spec(args.method)
    impute_method = _impute_method(args.impute, args.iterations, args.trees, args.pmm_k)
    pi_star = DEFAULT_PI[args.method]
    run = select_with_missing(
        d, method_spec, impute_method, args.b_reps, pi_star, rng=RngHandle(args.seed)
    )
    t2 = time.monotonic()
    grid = args.pi if args.pi is not None else (pi_star,)
    doc = {
        "method": args.method,
        "impute": args.impute,
        "b": args.b_reps,
        "n_failed": len(run.failures),
        "variables": list(run.names),
        "frequencies": {nm: run.frequencies[i] for i, nm in enumerate(run.names)},
        "pi_grid": list(grid),
        "selected": {repr(pi): sorted(run.at(pi)) for pi in grid},
        "default_pi": pi_star,
        "replicates": [sorted(s) for s in run.per_replicate],
    }
    _ensure_outdir(args.outdir)
    with open(out_rel, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    t3 = time.monotonic()
    _write_manifest(
        args.outdir,
        "select",
        argv,
        {"method": args.method, "impute": args.impute, "B": args.b_reps,
         "pi": list(grid), "in": args.infile, "out": args.out,
         "outdir": args.outdir, "seed": args.seed,
         "iterations": args.iterations, "trees": args.trees,
         "pmm_k": args.pmm_k},
        args.seed,
        {"load_s": t1 - t0, "compute_s": t2 - t1, "write_s": t3 - t2,
         "total_s": t3 - t0},
        len(run.failures),
        [args.out],
    )
    return EXIT_OK


def _cmd_metrics(args, argv):
    t0 = time.monotonic()
    out_rel = _resolve_out(args.outdir, args.out)
    power_rel = _resolve_out(args.outdir, args.power_out) if args.power_out else None
    with open(args.infile, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid selection JSON {args.infile}: {exc}") from exc
    useful = tuple(tok for tok in args.useful.split(",") if tok.strip())
    names = tuple(doc["variables"])
    truth = TruthSpec.from_names(useful, names)
    t1 = time.monotonic()
    rows, power_rows = [], []
    for pi_text, selected in sorted(
        doc["selected"].items(), key=lambda kv: float(kv[0])
    ):
        rep = aggregate([score(frozenset(selected), truth)], truth)
        rows.append(
            {"method": doc.get("method", ""), "variant": args.label,
             "pi": float(pi_text), "precision": rep.precision,
             "recall": rep.recall, "f1": rep.f1, "f1_mean": rep.f1_mean,
             "type1": rep.type1, "m_effective": 1}
        )
        for v in sorted(rep.power):
            power_rows.append(
                {"method": doc.get("method", ""), "variant": args.label,
                 "pi": float(pi_text), "variable": v, "power": rep.power[v]}
            )
    t2 = time.monotonic()
    _ensure_outdir(args.outdir)
    outputs = [args.out]
    write_table(out_rel, rows, METRICS_COLUMNS)
    if power_rel:
        write_table(power_rel, power_rows, POWER_COLUMNS)
        outputs.append(args.power_out)
    t3 = time.monotonic()
    _write_manifest(
        args.outdir,
        "metrics",
        argv,
        {"in": args.infile, "useful": args.useful, "out": args.out,
         "power_out": args.power_out, "label": args.label,
         "outdir": args.outdir},
        0,
        {"load_s": t1 - t0, "compute_s": t2 - t1, "write_s": t3 - t2,
         "total_s": t3 - t0},
        0,
        outputs,
    )
    return EXIT_OK


def _load_scenario_config(text: str):
    """--scenario accepts a scenario name or a JSON config file path."""
    if text in _SCENARIO_NAMES:
        return {"scenario": text}
    if not os.path.exists(text):
        raise ParseError(
            f"--scenario {text!r} is neither one of {list(_SCENARIO_NAMES)} "
            "nor an existing config file"
        )
    with open(text, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid scenario config {text}: {exc}") from exc
    if not isinstance(cfg, dict) or "scenario" not in cfg:
        raise ParseError("scenario config must be a JSON object with a 'scenario' key")
    return cfg


def _cmd_simulate(args, argv):
    t0 = time.monotonic()
    cfg = _load_scenario_config(args.scenario)

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return cfg.get(key, default)

    n = int(pick(args.n, "n", 1000))
    m_reps = pick(args.m_reps, "M", None)
    if m_reps is None:
        m_reps = 25 if n >= 1000 else 100
    b_reps = int(pick(args.b_reps, "B", 100))
    seed = int(pick(args.seed, "seed", 0))
    methods = pick(args.methods, "methods", list(METHOD_NAMES))
    if isinstance(methods, str):
        methods = [tok for tok in methods.split(",") if tok.strip()]
    impute_name = pick(args.impute, "impute", "mice")
    pi_grid = pick(args.pi_grid, "pi_grid",
                   (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0))
    complete_case = bool(pick(None if not args.no_cc else False, "complete_case", True))
    noise_cont = int(pick(args.noise_cont, "noise_cont", 20))
    noise_bin = int(pick(args.noise_bin, "noise_bin", 20))
    gamma_param = pick(args.gamma_param, "gamma_param", "shape-rate")
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)

    try:
        missingness = Missingness(cfg["scenario"])
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    impute_method = (
        None
        if missingness is Missingness.COMPLETE
        else _impute_method(impute_name, args.iterations, args.trees, args.pmm_k)
    )
    spec = ScenarioSpec(
        missingness=missingness,
        impute=impute_method,
        methods=tuple(methods),
        pi_grid=tuple(float(p) for p in pi_grid),
        m=int(m_reps),
        b=b_reps,
        complete_case=complete_case,
    )
    dgp = DgpSpec(n=n, n_noise_cont=noise_cont, n_noise_bin=noise_bin,
                  gamma_param=gamma_param, seed=seed)
    t1 = time.monotonic()
    result = run_scenarios(spec, dgp, rng=RngHandle(seed), n_threads=threads)
    t2 = time.monotonic()
    _ensure_outdir(args.outdir)
    write_table(os.path.join(args.outdir, "metrics.csv"),
                result.metrics_rows, METRICS_COLUMNS)
    write_table(os.path.join(args.outdir, "power.csv"),
                result.power_rows, POWER_COLUMNS)
    write_table(os.path.join(args.outdir, "frequencies.csv"),
                result.frequency_rows, FREQUENCY_COLUMNS)
    t3 = time.monotonic()
    _write_manifest(
        args.outdir,
        "simulate",
        argv,
        {"scenario": missingness.value, "n": n, "M": int(m_reps), "B": b_reps,
         "seed": seed, "methods": list(methods), "impute": impute_name,
         "pi_grid": [float(p) for p in pi_grid],
         "complete_case": complete_case, "noise_cont": noise_cont,
         "noise_bin": noise_bin, "gamma_param": gamma_param,
         "outdir": args.outdir,
         "iterations": args.iterations, "trees": args.trees,
         "pmm_k": args.pmm_k},
        seed,
        {"config_s": t1 - t0, "compute_s": t2 - t1, "write_s": t3 - t2,
         "total_s": t3 - t0},
        len(result.failures),
        ["metrics.csv", "power.csv", "frequencies.csv"],
    )
    return EXIT_OK


def _cmd_replay(args, argv):
    with open(args.manifest, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid manifest {args.manifest}: {exc}") from exc
    recorded = manifest.get("argv")
    if not recorded:
        raise ParseError("manifest records no argv to replay")
    new_argv = list(recorded)
    if args.outdir is not None:
        if "--outdir" in new_argv:
            idx = new_argv.index("--outdir")
            new_argv[idx + 1] = args.outdir
        else:
            new_argv += ["--outdir", args.outdir]
    return _dispatch(new_argv)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common_impute_knobs(p):
    p.add_argument("--iterations", type=int, default=10,
                   help="imputation sweeps (chained equations) or refit rounds (forest)")
    p.add_argument("--trees", type=int, default=100,
                   help="trees per forest for the forest imputer")
    p.add_argument("--pmm-k", type=int, default=5, dest="pmm_k",
                   help="predictive-mean-matching donor pool size")


def _build_parser() -> _Parser:
    parser = _Parser(prog="bivsel",
                     description="Variable selection under missing data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ampute", help="mask values per an amputation config",
                       description="Apply a configured missingness plan to a CSV.")
    p.add_argument("--config", required=True, help="amputation plan JSON")
    p.add_argument("--in", dest="infile", required=True, help="input CSV")
    p.add_argument("--out", required=True, help="output CSV (relative to --outdir)")
    p.add_argument("--outdir", default=".", help="output directory")
    p.add_argument("--seed", type=_seed_type, default=0)
    p.set_defaults(func=_cmd_ampute)

    p = sub.add_parser("impute", help="bootstrap-then-impute replicates",
                       description="Write B imputed bootstrap replicates as rep_0001.csv ...")
    p.add_argument("--method", choices=("mice", "forest"), required=True)
    p.add_argument("--B", dest="b_reps", type=int, required=True,
                   help="number of bootstrap replicates")
    p.add_argument("--in", dest="infile", required=True, help="input CSV")
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=_seed_type, default=0)
    _add_common_impute_knobs(p)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("select", help="bootstrap-stabilized variable selection",
                       description="Impute bootstrap replicates, select on each, "
                                   "and report selection frequencies.")
    p.add_argument("--method", choices=METHOD_NAMES, required=True)
    p.add_argument("--impute", choices=("mice", "forest", "none"), default="mice")
    p.add_argument("--B", dest="b_reps", type=int, default=100)
    p.add_argument("--pi", type=_pi_grid_type, default=None,
                   help="threshold or comma-separated grid in [0,1]")
    p.add_argument("--in", dest="infile", required=True, help="input CSV")
    p.add_argument("--out", required=True, help="output JSON (relative to --outdir)")
    p.add_argument("--outdir", default=".")
    p.add_argument("--seed", type=_seed_type, default=0)
    _add_common_impute_knobs(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("metrics", help="score a selection against known truth",
                       description="Compute precision/recall/F1/type-1 from a "
                                   "select JSON and a declared useful set.")
    p.add_argument("--in", dest="infile", required=True, help="select output JSON")
    p.add_argument("--useful", required=True,
                   help="comma-separated names of truly useful variables")
    p.add_argument("--out", required=True, help="metrics CSV (relative to --outdir)")
    p.add_argument("--power-out", dest="power_out", default=None,
                   help="optional per-variable power CSV")
    p.add_argument("--label", default="", help="scenario label for the variant column")
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("simulate", help="run a benchmark scenario",
                       description="Monte Carlo benchmark: generate, mask, impute, "
                                   "select, and score; emits metrics/power/frequencies CSVs.")
    p.add_argument("--scenario", required=True,
                   help=f"one of {', '.join(_SCENARIO_NAMES)} or a JSON config path")
    p.add_argument("--n", type=int, default=None, help="sample size per replication")
    p.add_argument("--M", dest="m_reps", type=int, default=None,
                   help="Monte Carlo replications (default 25 if n>=1000 else 100)")
    p.add_argument("--B", dest="b_reps", type=int, default=None,
                   help="bootstrap replicates per replication")
    p.add_argument("--seed", type=_seed_type, default=None)
    p.add_argument("--outdir", required=True)
    p.add_argument("--methods", default=None,
                   help=f"comma-separated subset of {','.join(METHOD_NAMES)}")
    p.add_argument("--impute", choices=("mice", "forest"), default=None)
    p.add_argument("--pi-grid", dest="pi_grid", type=_pi_grid_type, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all cores); results do not depend on it")
    p.add_argument("--no-cc", dest="no_cc", action="store_true",
                   help="skip complete-case comparison rows")
    p.add_argument("--noise-cont", dest="noise_cont", type=int, default=None)
    p.add_argument("--noise-bin", dest="noise_bin", type=int, default=None)
    p.add_argument("--gamma-param", dest="gamma_param",
                   choices=("shape-rate", "shape-scale"), default=None)
    _add_common_impute_knobs(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="re-run a recorded manifest",
                       description="Re-execute a previous run from its manifest; "
                                   "outputs are byte-identical.")
    p.add_argument("manifest", help="path to a manifest.json")
    p.add_argument("--outdir", default=None,
                   help="redirect outputs (default: the recorded directory)")
    p.set_defaults(func=_cmd_replay)

    return parser


def _dispatch(argv) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except _UsageError as exc:
        return _emit_error("UsageError", str(exc), EXIT_USAGE)
    except ParseError as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_IO)
    except OSError as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_IO)
    except BivselError as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_COMPUTE)
    except (ValueError, KeyError) as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_COMPUTE)


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if argv is None:
        argv = sys.argv[1:]
    try:
        return _dispatch(list(argv))
    except SystemExit as exc:  # argparse usage errors / --help
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return code


if __name__ == "__main__":
    sys.exit(main())
