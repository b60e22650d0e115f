"""
CKKS bootstrapping: ModRaise, CoeffToSlot, ApproxModEval and SlotToCoeff.

The pipeline for an n-slot ciphertext:

1. ModRaise reinterprets the level-0 residues modulo the whole chain; the
   plaintext becomes ``t = m + q0*I`` and the tracked scale is set to q0.
2. For sparse packing (n < N/2) a trace sums ``log2(N/2n)`` automorphisms
   so only the coefficients carrying slots survive.
3. CoeffToSlot puts ``(t_real + i*t_imag) / (2K)`` into the slots in
   bit-reversed order; a conjugation splits real and imaginary parts.
4. ApproxModEval removes ``I`` from each part.
5. SlotToCoeff recombines the parts and maps back, folding the
   ``q0 / (2*pi*S_0)`` correction into its first stage.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Sequence, Set, Tuple, Union

import numpy as np

from .approx_mod import approx_mod_depth, approx_mod_eval, cosine_coefficients
from .ciphertext import Ciphertext
from .client import EvaluationKeys, SecretKey, evaluation_keygen
from .config import BootstrapConfig
from .context import Context
from .evaluator import apply_galois, conjugate, h_add, h_negate, h_sub, multiply_by_i
from .exceptions import BootstrapError
from .linear_transform import LinearTransformStage, fft_stages, homomorphic_linear_transform
from .ntt import forward_ntt, inverse_ntt
from .rns_poly import Format, Limb, RnsPolynomial, drop_limbs, switch_modulus
from .utils import is_power_of_two

logger = logging.getLogger(__name__)


@dataclass
class BootstrapPrecomputation:
    """Everything bootstrapping needs that does not depend on the secret key."""

    config: BootstrapConfig
    fingerprint: str
    ring_degree: int
    cts_stages: List[LinearTransformStage]
    stc_stages: List[LinearTransformStage]
    cheb_coeffs: np.ndarray
    sub_sum_steps: Tuple[int, ...]
    rotation_indices: Tuple[int, ...]
    start_level: int
    eval_mod_level: int
    output_level: int

    @property
    def slots(self) -> int:
        return self.config.slots

    @property
    def double_angle_iters(self) -> int:
        return self.config.double_angle

    @property
    def depth(self) -> int:
        return self.start_level - self.output_level

    @property
    def bsgs_dims(self) -> List[Tuple[int, int]]:
        """(baby count, giant count) per stage, CoeffToSlot first."""
        return [(s.plan.baby_count, len(s.plan.groups)) for s in self.cts_stages + self.stc_stages]

    def dry_run_rotations(self) -> Set[int]:
        """Every rotation amount a bootstrap would request."""
        used: Set[int] = set(self.sub_sum_steps)
        for stage in self.cts_stages + self.stc_stages:
            used.update(stage.rotations())
        return used

    def materialize(self, ctx: Context) -> int:
        """Encode every diagonal at its scheduled level; returns the plaintext count."""
        return sum(stage.materialize(ctx) for stage in self.cts_stages + self.stc_stages)


def _schedule(
    slots: int, diagonals: Sequence[Dict[int, np.ndarray]], level: int, scale: float, ctx: Context
) -> Tuple[List[LinearTransformStage], int]:
    stages = []
    for diags in diagonals:
        stages.append(LinearTransformStage(slots, diags, level=level, input_scale=scale))
        level -= 1
        scale = ctx.scale_by_level[level]
    return stages, level


def bootstrap_setup(ctx: Context, config: BootstrapConfig) -> BootstrapPrecomputation:
    """Factor the encoder FFT into stages, fit the cosine and lay out the level schedule."""
    n = config.slots
    ring_degree = ctx.ring_degree
    if not is_power_of_two(n) or not 2 <= n <= ring_degree // 2:
        raise BootstrapError(f"slots must be a power of two in [2, N/2], got {n}")
    if config.k_range <= 0:
        raise BootstrapError("k_range must be positive")
    gap = ring_degree // (2 * n)
    q0 = float(ctx.primes[0].value)

    cts = fft_stages(ring_degree, n, config.cts_levels, inverse=True, constant=1.0 / (2.0 * config.k_range * gap))
    stc = fft_stages(ring_degree, n, config.stc_levels, inverse=False,
                     constant=q0 / (2.0 * math.pi * ctx.scale_by_level[0]))
    mod_depth = approx_mod_depth(config.cheb_degree, config.double_angle)
    depth = len(cts) + mod_depth + len(stc)
    if depth > ctx.depth - 1:
        raise BootstrapError(
            f"bootstrapping needs {depth} levels but L={ctx.depth} leaves none for the result"
        )

    cts_stages, level = _schedule(n, cts, ctx.depth, q0, ctx)
    eval_mod_level = level
    stc_stages, output_level = _schedule(n, stc, level - mod_depth, ctx.scale_by_level[level - mod_depth], ctx)

    sub_sum_steps = tuple(n << i for i in range(gap.bit_length() - 1))
    rotations: Set[int] = set(sub_sum_steps)
    for stage in cts_stages + stc_stages:
        rotations.update(stage.rotations())

    precomp = BootstrapPrecomputation(
        config=config,
        fingerprint=ctx.fingerprint(),
        ring_degree=ring_degree,
        cts_stages=cts_stages,
        stc_stages=stc_stages,
        cheb_coeffs=cosine_coefficients(config.k_range, config.double_angle, config.cheb_degree),
        sub_sum_steps=sub_sum_steps,
        rotation_indices=tuple(sorted(rotations)),
        start_level=ctx.depth,
        eval_mod_level=eval_mod_level,
        output_level=output_level,
    )
    logger.info(
        "Bootstrap setup: slots=%d stages=%d+%d depth=%d output level=%d rotations=%d",
        n, len(cts_stages), len(stc_stages), depth, output_level, len(precomp.rotation_indices),
    )
    return precomp


def bootstrap_keygen(
    ctx: Context, sk: SecretKey, precomp: BootstrapPrecomputation, rng: Union[None, int, np.random.Generator] = None
) -> EvaluationKeys:
    """Relinearization, conjugation and every rotation key the precomputation uses."""
    return evaluation_keygen(ctx, sk, rotations=precomp.rotation_indices, conjugation=True, relin=True, rng=rng)


# --- pipeline --------------------------------------------------------------------------------------

def mod_raise(ct: Ciphertext) -> Ciphertext:
    """Lift a level-0 ciphertext to level L; the tracked scale becomes q0.

    Higher-level input is first dropped to level 0.
    """
    ctx = ct.ctx
    if ct.level > 0:
        ct = ct.with_parts(drop_limbs(ct.c0, ct.level), drop_limbs(ct.c1, ct.level))
    q0 = ctx.primes[0]

    def lift(poly: RnsPolynomial) -> RnsPolynomial:
        coeffs = inverse_ntt(poly.limbs[0].coeffs, ctx.ntt_tables[0], variant=ctx.ntt_variant)

        def one(i: int) -> Limb:
            lifted = switch_modulus(coeffs, q0, ctx.primes[i])
            return Limb(i, forward_ntt(lifted, ctx.ntt_tables[i], variant=ctx.ntt_variant), Format.EVAL)

        return RnsPolynomial(ctx, ctx.map_limbs(one, ctx.chain_indices))

    return Ciphertext(lift(ct.c0), lift(ct.c1), scale=float(q0.value), slot_count=ct.slot_count)


def sub_sum(ct: Ciphertext, precomp: BootstrapPrecomputation, keys: EvaluationKeys) -> Ciphertext:
    """Trace onto the sparse subring; every surviving coefficient is multiplied by N/(2n)."""
    ctx = ct.ctx
    for step in precomp.sub_sum_steps:
        ct = h_add(ct, apply_galois(ct, ctx.galois_element(step), keys))
    return ct


def coeff_to_slot(
    ct: Ciphertext, precomp: BootstrapPrecomputation, keys: EvaluationKeys, hoisted: bool = True
) -> Tuple[Ciphertext, Ciphertext]:
    """Real and imaginary coefficient parts (each divided by K) in bit-reversed slot order."""
    w = homomorphic_linear_transform(ct, precomp.cts_stages, keys, hoisted)
    w_bar = conjugate(w, keys)
    real = h_add(w, w_bar)
    imag = h_negate(multiply_by_i(h_sub(w, w_bar)))
    return real, imag


def slot_to_coeff(
    real: Ciphertext, imag: Ciphertext, precomp: BootstrapPrecomputation, keys: EvaluationKeys, hoisted: bool = True
) -> Ciphertext:
    return homomorphic_linear_transform(h_add(real, multiply_by_i(imag)), precomp.stc_stages, keys, hoisted)


def bootstrap(
    ct: Ciphertext, precomp: BootstrapPrecomputation, keys: EvaluationKeys, hoisted: bool = True
) -> Ciphertext:
    """Refresh ``ct`` to ``precomp.output_level`` keeping its slot values."""
    ctx = ct.ctx
    if ct.slot_count != precomp.slots:
        raise BootstrapError(f"precomputation is for {precomp.slots} slots, ciphertext has {ct.slot_count}")
    if precomp.fingerprint != ctx.fingerprint():
        raise BootstrapError("precomputation was built for a different parameter set")
    input_scale = ct.scale
    started = time.perf_counter()

    raised = sub_sum(mod_raise(ct), precomp, keys)
    real, imag = coeff_to_slot(raised, precomp, keys, hoisted)
    logger.debug("CoeffToSlot done at level %d", real.level)
    coeffs, iters = precomp.cheb_coeffs, precomp.double_angle_iters
    real = approx_mod_eval(real, coeffs, iters, keys)
    imag = approx_mod_eval(imag, coeffs, iters, keys)
    out = slot_to_coeff(real, imag, precomp, keys, hoisted)

    out = out.with_parts(out.c0, out.c1, scale=out.scale * input_scale / ctx.scale_by_level[0], noise_estimate=None)
    logger.info("Bootstrapped %d slots to level %d in %.2fs", ct.slot_count, out.level, time.perf_counter() - started)
    return out
