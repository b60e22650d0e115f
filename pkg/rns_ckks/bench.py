"""
Microbenchmarks and the bootstrap report.

Every benchmark point first runs its operation once and checks the result
(decrypting where the operation works on ciphertexts); only then is it
timed. Context creation and key generation are never timed.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from .bootstrap import bootstrap, bootstrap_keygen, bootstrap_setup
from .ciphertext import Ciphertext
from .client import EvaluationKeys, SecretKey, decrypt, encrypt, evaluation_keygen, keygen
from .config import (
    DEFAULT_BENCH_ITERATIONS,
    DEFAULT_LIMB_BATCH,
    DEFAULT_WORKERS,
    MIN_BENCH_ITERATIONS,
    BootstrapConfig,
    Parameters,
    RuntimeSettings,
)
from .context import Context, create_context
from .encoding import decode, encode
from .evaluator import (
    adjust_level,
    encode_for_mult,
    fused_weighted_sum,
    h_add,
    h_mult,
    h_rotate,
    h_square,
    hoisted_rotations,
    pt_mult,
    rescale,
)
from .exceptions import BenchmarkError, LevelError, ParameterError
from .keyswitch import ExtendedPolynomial, key_switch, mod_down, mod_up
from .rns_poly import Format, RnsPolynomial, automorphism, elementwise, to_coeff, to_eval
from .serialization import load_or_build_precomputation
from .utils import create_timing_stats, format_duration_ms, precision_bits, safe_divide

logger = logging.getLogger(__name__)

BENCH_OPS = (
    "ntt", "intt", "add", "pt_mult", "mult", "square", "rescale", "rotate",
    "hoisted_rotate", "key_switch", "mod_up", "mod_down", "weighted_sum",
)
# Ops whose check needs a rescale, so they cannot run at level 0
_NEEDS_LEVEL = {"pt_mult", "mult", "square", "rescale", "weighted_sum"}
HOISTED_STEPS = (1, 2, 3, 4)
CHECK_TOLERANCE = 2.0 ** -10
WEIGHTS = (0.5, -0.25, 1.5, 2.0)


class BenchResult(BaseModel):
    """Timing of one op at one sweep point."""

    op: str
    params: List[int] = Field(..., description="[log N, L, log delta, dnum]")
    fingerprint: str
    limb_batch: int
    workers: int
    level: int
    iterations: int
    median_seconds: float
    p10_seconds: float
    p90_seconds: float
    min_seconds: float
    max_seconds: float
    throughput: float = Field(..., description="Operations per second at the median")

    def as_row(self) -> Dict[str, object]:
        row = self.model_dump()
        row["params"] = "-".join(str(v) for v in self.params)
        return row


class SweepSpec(BaseModel):
    """What to sweep. Empty lists mean: the top level, the given params."""

    levels: List[int] = Field(default_factory=list)
    limb_batches: List[int] = Field(default_factory=lambda: [DEFAULT_LIMB_BATCH])
    param_sets: List[Parameters] = Field(default_factory=list)
    iterations: int = DEFAULT_BENCH_ITERATIONS
    workers: int = DEFAULT_WORKERS
    seed: int = 0

    def validate_sweep(self) -> None:
        if self.iterations < MIN_BENCH_ITERATIONS:
            raise ParameterError(f"iterations must be >= {MIN_BENCH_ITERATIONS}, got {self.iterations}")
        if not self.limb_batches:
            raise ParameterError("limb_batches must not be empty")


@dataclass
class BenchFixture:
    """Keys, inputs and their cleartext values for one context."""

    ctx: Context
    sk: SecretKey
    keys: EvaluationKeys
    a: Ciphertext
    b: Ciphertext
    va: np.ndarray
    vb: np.ndarray

    def at(self, level: int) -> Tuple[Ciphertext, Ciphertext]:
        return adjust_level(self.a, level), adjust_level(self.b, level)


def make_fixture(ctx: Context, seed: int = 0) -> BenchFixture:
    rng = np.random.default_rng(seed)
    sk, pk = keygen(ctx, rng)
    keys = evaluation_keygen(ctx, sk, rotations=HOISTED_STEPS, rng=rng)
    n = ctx.slot_count
    va = rng.uniform(-1.0, 1.0, n)
    vb = rng.uniform(-1.0, 1.0, n)
    a = encrypt(encode(ctx, va, slot_count=n), pk, rng)
    b = encrypt(encode(ctx, vb, slot_count=n), pk, rng)
    return BenchFixture(ctx=ctx, sk=sk, keys=keys, a=a, b=b, va=va, vb=vb)


def _decrypted(ct: Ciphertext, sk: SecretKey) -> np.ndarray:
    return decode(decrypt(ct, sk))


def _close(op: str, got: np.ndarray, expected: np.ndarray) -> None:
    error = float(np.max(np.abs(got - expected)))
    if not error <= CHECK_TOLERANCE:
        raise BenchmarkError(f"{op}: max error {error:.3g} exceeds {CHECK_TOLERANCE:.3g}")


def _exact(op: str, got: RnsPolynomial, expected: RnsPolynomial) -> None:
    if got != expected:
        raise BenchmarkError(f"{op}: result differs from the reference")


Prepared = Tuple[Callable[[], object], Callable[[object], None]]


def prepare_op(op: str, fx: BenchFixture, level: int) -> Prepared:
    """``(run, check)`` for ``op`` on inputs at ``level``."""
    if op not in BENCH_OPS:
        raise ParameterError(f"unknown benchmark op {op!r}; choose from {', '.join(BENCH_OPS)}")
    if not 0 <= level <= fx.ctx.depth:
        raise LevelError(f"level must be in [0, {fx.ctx.depth}], got {level}")
    if op in _NEEDS_LEVEL and level < 1:
        raise LevelError(f"{op} needs level >= 1")
    ctx, sk, keys = fx.ctx, fx.sk, fx.keys
    a, b = fx.at(level)
    va, vb = fx.va, fx.vb

    if op == "ntt":
        x = to_coeff(a.c1)
        return (lambda: to_eval(x)), (lambda out: _exact(op, to_coeff(out), x))
    if op == "intt":
        y = a.c1
        return (lambda: to_coeff(y)), (lambda out: _exact(op, to_eval(out), y))
    if op == "add":
        return (lambda: h_add(a, b)), (lambda out: _close(op, _decrypted(out, sk), va + vb))
    if op == "pt_mult":
        pt = encode_for_mult(ctx, vb, a)
        return (lambda: pt_mult(a, pt)), (lambda out: _close(op, _decrypted(rescale(out), sk), va * vb))
    if op == "mult":
        return (lambda: h_mult(a, b, keys)), (lambda out: _close(op, _decrypted(rescale(out), sk), va * vb))
    if op == "square":
        return (lambda: h_square(a, keys)), (lambda out: _close(op, _decrypted(rescale(out), sk), va * va))
    if op == "rescale":
        product = pt_mult(a, encode_for_mult(ctx, vb, a))
        return (lambda: rescale(product)), (lambda out: _close(op, _decrypted(out, sk), va * vb))
    if op == "rotate":
        return (lambda: h_rotate(a, 1, keys)), (lambda out: _close(op, _decrypted(out, sk), np.roll(va, -1)))
    if op == "hoisted_rotate":
        def check_all(outs) -> None:
            for step, out in zip(HOISTED_STEPS, outs):
                _close(op, _decrypted(out, sk), np.roll(va, -step))

        return (lambda: hoisted_rotations(a, HOISTED_STEPS, keys)), check_all
    if op == "key_switch":
        g = ctx.galois_element(1)
        key = keys.galois_key(g)
        c1 = automorphism(a.c1, g)

        def check_switch(out) -> None:
            u0, u1 = out
            rotated = a.with_parts(automorphism(a.c0, g) + u0, u1)
            _close(op, _decrypted(rotated, sk), np.roll(va, -1))

        return (lambda: key_switch(c1, key)), check_switch
    if op == "mod_up":
        digit = ctx.digit_bases(level)[0]
        x = a.c1

        def check_raise(out: ExtendedPolynomial) -> None:
            _exact(op, out.poly, mod_up(x, digit, fused=False).poly)
            _exact(op, out.poly.subset(digit), x.subset(digit))

        return (lambda: mod_up(x, digit)), check_raise
    if op == "mod_down":
        # P * x on the chain and zero on the extension divides back to x exactly
        x = a.c1
        chain = elementwise("scalar_mul", x, ctx.p_product)
        ext = RnsPolynomial.zeros(ctx, ctx.extension_indices, Format.EVAL)
        raised = ExtendedPolynomial(RnsPolynomial(ctx, list(chain.limbs) + list(ext.limbs)))
        return (lambda: mod_down(raised)), (lambda out: _exact(op, out, x))
    # weighted_sum
    cts = [a, b, a, b]
    expected = WEIGHTS[0] * va + WEIGHTS[1] * vb + WEIGHTS[2] * va + WEIGHTS[3] * vb
    return (
        (lambda: fused_weighted_sum(cts, list(WEIGHTS))),
        (lambda out: _close(op, _decrypted(rescale(out), sk), expected)),
    )


def time_op(run: Callable[[], object], iterations: int) -> List[float]:
    """Wall times of ``iterations`` sequential calls after one warm-up call."""
    run()
    samples = []
    for _ in range(iterations):
        started = time.perf_counter()
        run()
        samples.append(max(time.perf_counter() - started, 1e-9))
    return samples


def bench_point(op: str, fx: BenchFixture, level: int, iterations: int) -> BenchResult:
    run, check = prepare_op(op, fx, level)
    check(run())
    stats = create_timing_stats(time_op(run, iterations))
    ctx = fx.ctx
    result = BenchResult(
        op=op,
        params=ctx.params.as_list(),
        fingerprint=ctx.fingerprint(),
        limb_batch=ctx.runtime.limb_batch,
        workers=ctx.runtime.workers,
        level=level,
        iterations=stats["count"],
        median_seconds=stats["median"],
        p10_seconds=stats["p10"],
        p90_seconds=stats["p90"],
        min_seconds=stats["min"],
        max_seconds=stats["max"],
        throughput=safe_divide(1.0, stats["median"]),
    )
    logger.debug("%s at level %d: median %s", op, level, format_duration_ms(result.median_seconds * 1000))
    return result


def run_microbench(ops: Sequence[str], params: Parameters, sweep: Optional[SweepSpec] = None) -> Iterator[BenchResult]:
    """Yield one BenchResult per (param set, limb batch, level, op)."""
    sweep = sweep or SweepSpec()
    sweep.validate_sweep()
    unknown = [op for op in ops if op not in BENCH_OPS]
    if unknown:
        raise ParameterError(f"unknown benchmark ops {unknown}; choose from {', '.join(BENCH_OPS)}")
    for param_set in sweep.param_sets or [params]:
        for limb_batch in sweep.limb_batches:
            runtime = RuntimeSettings(limb_batch=limb_batch, workers=sweep.workers)
            ctx = create_context(param_set, runtime)
            try:
                fx = make_fixture(ctx, sweep.seed)
                levels = sweep.levels or [ctx.depth]
                logger.info(
                    "Benchmarking %s at %s, limb_batch=%d, levels=%s",
                    ",".join(ops), param_set.as_list(), limb_batch, levels,
                )
                for level in levels:
                    for op in ops:
                        yield bench_point(op, fx, level, sweep.iterations)
            finally:
                ctx.close()


# --- bootstrap report -----------------------------------------------------------------------------------

class BootstrapReportEntry(BaseModel):
    slots: int
    params: List[int]
    fingerprint: str
    cts_levels: int
    stc_levels: int
    depth: int
    rotation_keys: int
    seconds: float
    amortized_us: float = Field(..., description="Microseconds per slot per remaining level")
    max_error: float
    precision_bits: float
    remaining_levels: int


def amortized_microseconds(seconds: float, slots: int, levels: int) -> float:
    """``time / (slots * levels)`` in microseconds."""
    if slots < 1 or levels < 1:
        return float("inf")
    return seconds * 1e6 / (slots * levels)


def _slot_path(path: Union[str, Path], slots: int, count: int) -> Path:
    path = Path(path)
    return path if count == 1 else path.with_name(f"{path.stem}-{slots}{path.suffix}")


def run_bootstrap_report(
    slots_list: Sequence[int],
    params: Parameters,
    cts_levels: int = 3,
    stc_levels: int = 3,
    trials: int = 1,
    seed: int = 0,
    precomp_path: Optional[Union[str, Path]] = None,
) -> List[BootstrapReportEntry]:
    """Bootstrap random ciphertexts for every slot count; time, precision and remaining levels.

    With ``precomp_path`` the precomputation is loaded from that file when it
    exists and saved there otherwise. Several slot counts get one file each,
    named ``<stem>-<slots><suffix>``.
    """
    entries = []
    ctx = create_context(params)
    try:
        rng = np.random.default_rng(seed)
        sk, pk = keygen(ctx, rng)
        for slots in slots_list:
            config = BootstrapConfig(slots=slots, cts_levels=cts_levels, stc_levels=stc_levels)
            if precomp_path is None:
                precomp = bootstrap_setup(ctx, config)
            else:
                precomp = load_or_build_precomputation(ctx, config, _slot_path(precomp_path, slots, len(slots_list)))
            keys = bootstrap_keygen(ctx, sk, precomp, rng)
            precomp.materialize(ctx)
            times, errors, level = [], [], precomp.output_level
            for _ in range(max(1, trials)):
                values = rng.uniform(-1.0, 1.0, slots) + 1j * rng.uniform(-1.0, 1.0, slots)
                ct = encrypt(encode(ctx, values, slot_count=slots), pk, rng)
                started = time.perf_counter()
                out = bootstrap(ct, precomp, keys)
                times.append(time.perf_counter() - started)
                errors.append(float(np.max(np.abs(_decrypted(out, sk) - values))))
                level = out.level
            seconds = float(np.median(times))
            max_error = max(errors)
            entries.append(BootstrapReportEntry(
                slots=slots,
                params=params.as_list(),
                fingerprint=params.fingerprint(),
                cts_levels=len(precomp.cts_stages),
                stc_levels=len(precomp.stc_stages),
                depth=precomp.depth,
                rotation_keys=len(keys.rotations),
                seconds=seconds,
                amortized_us=amortized_microseconds(seconds, slots, level),
                max_error=max_error,
                precision_bits=precision_bits(max_error),
                remaining_levels=level,
            ))
            logger.info(
                "Bootstrap report: slots=%d time=%.2fs precision=%.1f bits levels=%d",
                slots, seconds, entries[-1].precision_bits, level,
            )
    finally:
        ctx.close()
    return entries
