"""
Command-line harness: microbenchmarks, bootstrap report, encrypted LR and test vectors.

Every subcommand prints one JSON document (or CSV rows for ``bench
--format csv``). Failures print an error envelope and exit with status 1.
"""

import argparse
import csv
import functools
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from dotenv import load_dotenv

from . import __version__
from .bench import BENCH_OPS, SweepSpec, run_bootstrap_report, run_microbench
from .config import PRESETS, Parameters, RuntimeSettings
from .lr import DEFAULT_ALIGNMENT, DEFAULT_SAMPLES, LOAN_DATASET_SHAPE, LrConfig, run_lr_demo
from .vectors import check_test_vectors, dump_test_vectors

logger = logging.getLogger(__name__)

PARAM_FLAGS = {"logn": "log_n", "depth": "depth", "delta_bits": "delta_bits", "dnum": "dnum", "slots": "slots"}


def configure_logging(level: Optional[str] = None) -> None:
    """Root logger on stderr; LOG_LEVEL from the environment (after .env) unless given."""
    level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(stream=sys.stderr)
        handler.setFormatter(logging.Formatter(
            fmt="%(asctime)s %(levelname)s [%(name)s] %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        ))
        root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))


def _err(msg: str, **extra: Any) -> str:
    d = {"error": msg}
    d.update(extra)
    return json.dumps(d, indent=2, ensure_ascii=False)


def _ok(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)


def _timed(func: Callable[[argparse.Namespace], str]) -> Callable[[argparse.Namespace], str]:
    """
    Measure a subcommand and inject ``elapsed_seconds`` as the first key of
    its JSON output. Exceptions become an error envelope naming the command.
    Non-JSON output (CSV) is passed through unchanged.
    """
    @functools.wraps(func)
    def wrapper(args: argparse.Namespace) -> str:
        t0 = time.monotonic()
        try:
            result = func(args)
        except Exception as ex:
            elapsed = round(time.monotonic() - t0, 3)
            logger.exception("Command %s raised after %.3fs", args.command, elapsed)
            return json.dumps(
                {
                    "elapsed_seconds": elapsed,
                    "error": str(ex) or repr(ex),
                    "error_type": type(ex).__name__,
                    "command": args.command,
                },
                indent=2,
                ensure_ascii=False,
            )
        elapsed = round(time.monotonic() - t0, 3)
        try:
            parsed = json.loads(result)
        except ValueError:
            return result
        if isinstance(parsed, dict):
            new_dict: Dict[str, Any] = {"elapsed_seconds": elapsed}
            new_dict.update(parsed)
            return json.dumps(new_dict, indent=2, ensure_ascii=False)
        return json.dumps({"elapsed_seconds": elapsed, "result": parsed}, indent=2, ensure_ascii=False)
    return wrapper


# --- helpers ------------------------------------------------------------------------------------

def params_from_args(args: argparse.Namespace) -> Parameters:
    """The preset named by ``--preset`` with any explicit parameter flags applied."""
    if args.preset not in PRESETS:
        raise ValueError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
    base = PRESETS[args.preset]
    update = {field: getattr(args, flag) for flag, field in PARAM_FLAGS.items() if getattr(args, flag, None) is not None}
    params = base.model_copy(update=update) if update else base
    params.validate_params()
    return params


def _output_path(args: argparse.Namespace, default_name: Optional[str] = None) -> Optional[Path]:
    out = args.out or default_name
    if out is None:
        return None
    path = Path(out)
    if not path.is_absolute():
        path = Path(args.runtime.output_dir) / path
    return path


def _csv_rows(rows: List[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    if rows:
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return buffer.getvalue()


def _emit(args: argparse.Namespace, text: str) -> str:
    """Write ``text`` to ``--out`` when given; the returned text goes to stdout."""
    path = _output_path(args)
    if path is None:
        return text
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info("Wrote %s", path)
    return _ok({"command": args.command, "written": str(path)})


def _precomp_path(args: argparse.Namespace) -> Optional[Path]:
    """``--precomp`` resolved like ``--out``: relative paths land in the output directory."""
    if not args.precomp:
        return None
    path = Path(args.precomp)
    return path if path.is_absolute() else Path(args.runtime.output_dir) / path


def _lr_samples(args: argparse.Namespace, params: Parameters) -> int:
    if args.samples is not None:
        return args.samples
    return max(1, min(DEFAULT_SAMPLES, params.ring_degree // 2 // args.align))


def _seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    return args.runtime.seed if args.runtime.seed is not None else 0


# --- commands ------------------------------------------------------------------------------------

@_timed
def cmd_bench(args: argparse.Namespace) -> str:
    params = params_from_args(args)
    sweep = SweepSpec(
        levels=args.level or [],
        limb_batches=args.limb_batch or [args.runtime.limb_batch],
        param_sets=[PRESETS[name] for name in args.param_set or []],
        iterations=args.iters,
        workers=args.workers or args.runtime.workers,
        seed=_seed(args),
    )
    ops = args.op or ["mult"]
    results = list(run_microbench(ops, params, sweep))
    if args.format == "csv":
        return _emit(args, _csv_rows([r.as_row() for r in results]))
    return _emit(args, _ok({
        "command": "bench",
        "version": __version__,
        "results": [r.model_dump() for r in results],
    }))


@_timed
def cmd_bootstrap_report(args: argparse.Namespace) -> str:
    params = params_from_args(args)
    entries = run_bootstrap_report(
        args.slots_list or [params.slot_count],
        params,
        cts_levels=args.cts_levels,
        stc_levels=args.stc_levels,
        trials=args.trials,
        seed=_seed(args),
        precomp_path=_precomp_path(args),
    )
    rows = [e.model_dump() for e in entries]
    if args.format == "csv":
        flat = [{**row, "params": "-".join(str(v) for v in row["params"])} for row in rows]
        return _emit(args, _csv_rows(flat))
    return _emit(args, _ok({"command": "bootstrap-report", "version": __version__, "entries": rows}))


@_timed
def cmd_lr(args: argparse.Namespace) -> str:
    params = params_from_args(args)
    samples_total, features = args.synthetic_samples, args.features
    if args.loan_shape:
        samples_total, features = LOAN_DATASET_SHAPE
    cfg = LrConfig(
        dataset_path=args.dataset,
        samples=_lr_samples(args, params),
        feature_alignment=args.align,
        learning_rate=args.lr,
        iterations=args.iters,
        bootstrap=args.bootstrap,
        sigmoid_degree=args.sigmoid_degree,
        synthetic_samples=samples_total,
        synthetic_features=features,
        seed=_seed(args),
    )
    precomp_path = _precomp_path(args)
    report = run_lr_demo(cfg, params, precomp_path=precomp_path)
    return _emit(args, _ok({"command": "lr", "version": __version__, "report": report.model_dump()}))


@_timed
def cmd_dump_vectors(args: argparse.Namespace) -> str:
    if args.check:
        mismatches = check_test_vectors(args.check)
        if mismatches:
            raise ValueError(f"test vectors differ in sections: {', '.join(mismatches)}")
        return _ok({"command": "dump-vectors", "checked": args.check, "mismatches": []})
    params = params_from_args(args)
    seed = _seed(args)
    path = _output_path(args, default_name=f"vectors-{params.fingerprint()}-{seed}.bin")
    dump_test_vectors(params, seed, path)
    return _ok({
        "command": "dump-vectors",
        "written": str(path),
        "fingerprint": params.fingerprint(),
        "seed": seed,
    })


# --- argument parser ------------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, preset: str) -> None:
    p.add_argument("--preset", default=preset, help=f"Parameter preset ({', '.join(PRESETS)}; default {preset})")
    p.add_argument("--logn", type=int, default=None, help="log2 of the ring degree N")
    p.add_argument("--depth", type=int, default=None, help="Multiplicative depth L")
    p.add_argument("--delta-bits", dest="delta_bits", type=int, default=None, help="log2 of the scale")
    p.add_argument("--dnum", type=int, default=None, help="Key-switching digits")
    p.add_argument("--slots", type=int, default=None, help="Slot count (power of two <= N/2)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default CKKS_SEED or 0)")
    p.add_argument("--out", default=None, help="Output file, relative to CKKS_OUTPUT_DIR (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="Output format (default json)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rns-ckks",
        description="RNS-CKKS benchmarks, bootstrap report, encrypted logistic regression and test vectors.",
    )
    parser.add_argument("--version", action="version", version=f"rns-ckks {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    # bench
    p_bench = sub.add_parser("bench", help="Time primitives over level, limb-batch and parameter-set sweeps.")
    _add_common(p_bench, "toy")
    p_bench.add_argument("--op", action="append", choices=BENCH_OPS,
                         help="Operation to time (repeatable, default mult)")
    p_bench.add_argument("--level", type=int, action="append",
                         help="Level to run at (repeatable, default the top level)")
    p_bench.add_argument("--limb-batch", dest="limb_batch", type=int, action="append",
                         help="Limbs per task (repeatable, default CKKS_LIMB_BATCH)")
    p_bench.add_argument("--param-set", dest="param_set", action="append", choices=list(PRESETS),
                         help="Sweep over presets instead of --preset (repeatable)")
    p_bench.add_argument("--workers", type=int, default=None, help="Thread-pool width (default CKKS_WORKERS)")
    p_bench.add_argument("--iters", type=int, default=20, help="Timed iterations per point (default 20)")
    p_bench.set_defaults(func=cmd_bench)

    # bootstrap-report
    p_boot = sub.add_parser("bootstrap-report", help="Bootstrap time, amortized time, precision and levels.")
    _add_common(p_boot, "desk-boot")
    p_boot.add_argument("--report-slots", dest="slots_list", type=int, action="append",
                        help="Slot count to bootstrap (repeatable, default the parameter slot count)")
    p_boot.add_argument("--cts-levels", dest="cts_levels", type=int, default=3, help="CoeffToSlot stages")
    p_boot.add_argument("--stc-levels", dest="stc_levels", type=int, default=3, help="SlotToCoeff stages")
    p_boot.add_argument("--trials", type=int, default=1, help="Ciphertexts per slot count")
    p_boot.add_argument("--precomp", default=None,
                        help="Bootstrap precomputation file: loaded when present, built and saved otherwise")
    p_boot.set_defaults(func=cmd_bootstrap_report)

    # lr
    p_lr = sub.add_parser("lr", help="Train logistic regression encrypted and in the clear.")
    _add_common(p_lr, "desk-boot")
    p_lr.add_argument("--dataset", default=None, help="CSV file (header, numeric columns, 0/1 label last)")
    p_lr.add_argument("--synthetic-samples", dest="synthetic_samples", type=int, default=4096,
                      help="Synthetic rows when no dataset is given")
    p_lr.add_argument("--features", type=int, default=2, help="Synthetic feature count")
    p_lr.add_argument("--loan-shape", dest="loan_shape", action="store_true",
                      help=f"Synthetic data shaped like the loan set ({LOAN_DATASET_SHAPE[0]} x {LOAN_DATASET_SHAPE[1]})")
    p_lr.add_argument("--samples", type=int, default=None,
                      help=f"Samples per ciphertext (default {DEFAULT_SAMPLES}, capped so samples x align fit in N/2)")
    p_lr.add_argument("--align", type=int, default=DEFAULT_ALIGNMENT,
                      help=f"Slots per sample, a power of two (default {DEFAULT_ALIGNMENT})")
    p_lr.add_argument("--lr", type=float, default=1.0, help="Learning rate")
    p_lr.add_argument("--iters", type=int, default=5, help="Training iterations")
    p_lr.add_argument("--bootstrap", action="store_true", help="Bootstrap the weights every iteration")
    p_lr.add_argument("--precomp", default=None,
                      help="Bootstrap precomputation file: loaded when present, built and saved otherwise")
    p_lr.add_argument("--sigmoid-degree", dest="sigmoid_degree", type=int, default=3, help="Sigmoid fit degree")
    p_lr.set_defaults(func=cmd_lr)

    # dump-vectors
    p_vec = sub.add_parser("dump-vectors", help="Write (or --check) deterministic test vectors.")
    _add_common(p_vec, "toy")
    p_vec.add_argument("--check", default=None, help="Replay this vector file instead of writing one")
    p_vec.set_defaults(func=cmd_dump_vectors)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    args.runtime = RuntimeSettings.from_env()
    output = args.func(args)
    sys.stdout.write(output if output.endswith("\n") else output + "\n")
    try:
        parsed = json.loads(output)
    except ValueError:
        return 0
    return 1 if isinstance(parsed, dict) and "error" in parsed else 0


if __name__ == "__main__":
    sys.exit(main())
