"""
Homomorphic operations on ciphertexts.

Scales are tracked exactly as reals. Rescale is explicit; ``mult_and_rescale``
is the convenience wrapper. Operands at different levels are aligned with
:func:`adjust_level`, which keeps the lower level's canonical scale.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .ciphertext import Ciphertext, Plaintext
from .client import EvaluationKeys, KeySwitchingKey
from .config import SCALE_TOLERANCE
from .context import Context
from .encoding import encode
from .exceptions import EncodingError, KeyMissingError, LevelError, ParameterError, ScaleMismatchError
from .keyswitch import decompose_and_raise, key_switch, key_switch_raised
from .ntt import WideAccumulator
from .rns_poly import (
    Format,
    Limb,
    RnsPolynomial,
    automorphism,
    drop_limbs,
    elementwise,
    monomial_multiply,
    rescale as rescale_poly,
)

logger = logging.getLogger(__name__)

Complex = Union[int, float, complex]


# --- advisory noise --------------------------------------------------------------------

def _log_sum(*bits: Optional[float]) -> Optional[float]:
    if any(b is None for b in bits):
        return None
    return math.log2(sum(2.0 ** b for b in bits))


def _noise_after_rescale(bits: Optional[float], prime: int, ring_degree: int) -> Optional[float]:
    if bits is None:
        return None
    return _log_sum(bits - math.log2(prime), 0.5 * math.log2(ring_degree) + 1)


def _noise_after_mult(a: Ciphertext, b_bits: Optional[float], b_scale: float) -> Optional[float]:
    if a.noise_estimate is None or b_bits is None:
        return None
    return _log_sum(a.noise_estimate + math.log2(b_scale), b_bits + math.log2(a.scale))


# --- scale and level management -----------------------------------------------------------

def _same_scale(a: float, b: float) -> bool:
    return abs(a - b) <= SCALE_TOLERANCE * max(a, b)


def _scalar_mul_ct(ct: Ciphertext, factor: int, scale: float) -> Ciphertext:
    return ct.with_parts(
        elementwise("scalar_mul", ct.c0, factor),
        elementwise("scalar_mul", ct.c1, factor),
        scale=scale,
        noise_estimate=None if ct.noise_estimate is None else ct.noise_estimate + math.log2(abs(factor) or 1),
    )


def rescale(ct: Ciphertext, fused: bool = True) -> Ciphertext:
    """Divide by the top prime ``q_l``; level drops by one and the scale by ``q_l``."""
    if ct.level < 1:
        raise LevelError("cannot rescale a level-0 ciphertext")
    ctx = ct.ctx
    q = ctx.primes[ct.level].value
    return ct.with_parts(
        rescale_poly(ct.c0, fused),
        rescale_poly(ct.c1, fused),
        scale=ct.scale / q,
        noise_estimate=_noise_after_rescale(ct.noise_estimate, q, ctx.ring_degree),
    )


def adjust_level(ct: Ciphertext, level: int) -> Ciphertext:
    """Bring ``ct`` down to ``level`` landing on the canonical scale ``S_level``.

    Drops limbs to ``level + 1``, multiplies by ``round(S_level * q_{level+1} / scale)``
    and rescales.
    """
    if level == ct.level:
        return ct
    if not 0 <= level < ct.level:
        raise LevelError(f"cannot adjust a level-{ct.level} ciphertext to level {level}")
    ctx = ct.ctx
    dropped = ct.with_parts(drop_limbs(ct.c0, ct.level - level - 1), drop_limbs(ct.c1, ct.level - level - 1))
    q = ctx.primes[level + 1].value
    factor = round(ctx.scale_by_level[level] * q / ct.scale)
    if factor < 1:
        raise ScaleMismatchError(f"scale 2^{math.log2(ct.scale):.1f} is too large to land on level {level}")
    return rescale(_scalar_mul_ct(dropped, factor, ct.scale * factor))


def _align_levels(a: Ciphertext, b: Ciphertext) -> Tuple[Ciphertext, Ciphertext]:
    if a.level > b.level:
        return adjust_level(a, b.level), b
    if b.level > a.level:
        return a, adjust_level(b, a.level)
    return a, b


def _match_scales(a: Ciphertext, b: Ciphertext) -> Tuple[Ciphertext, Ciphertext]:
    """Equalize scales of two same-level ciphertexts for addition."""
    if _same_scale(a.scale, b.scale):
        return a, b
    swapped = a.scale > b.scale
    small, big = (b, a) if swapped else (a, b)
    ratio = big.scale / small.scale
    nearest = round(ratio)
    if abs(ratio - nearest) <= SCALE_TOLERANCE * ratio:
        small = _scalar_mul_ct(small, nearest, small.scale * nearest)
    else:
        if small.level == 0:
            raise ScaleMismatchError(
                f"scales 2^{math.log2(a.scale):.2f} and 2^{math.log2(b.scale):.2f} differ at level 0"
            )
        q = small.ctx.primes[small.level].value
        factor = round(ratio * q)
        small = rescale(_scalar_mul_ct(small, factor, small.scale * factor))
        big = big.with_parts(drop_limbs(big.c0, 1), drop_limbs(big.c1, 1))
    logger.debug("Matched scales with factor %.6g", ratio)
    return (big, small) if swapped else (small, big)


def _aligned_pair(a: Ciphertext, b: Ciphertext) -> Tuple[Ciphertext, Ciphertext]:
    if a.ctx is not b.ctx:
        raise ParameterError("ciphertexts belong to different contexts")
    if a.slot_count != b.slot_count:
        raise EncodingError(f"slot counts differ: {a.slot_count} vs {b.slot_count}")
    return _match_scales(*_align_levels(a, b))


def _plaintext_at(pt: Plaintext, ct: Ciphertext) -> Tuple[Plaintext, Ciphertext]:
    if pt.ctx is not ct.ctx:
        raise ParameterError("plaintext and ciphertext belong to different contexts")
    if pt.level > ct.level:
        pt = Plaintext(pt.poly.subset(ct.ctx.level_indices(ct.level)), pt.scale, pt.slot_count)
    elif pt.level < ct.level:
        ct = adjust_level(ct, pt.level)
    return pt, ct


# --- additive operations ---------------------------------------------------------------------------

def h_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    a, b = _aligned_pair(a, b)
    return a.with_parts(a.c0 + b.c0, a.c1 + b.c1, noise_estimate=_log_sum(a.noise_estimate, b.noise_estimate))


def h_sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    a, b = _aligned_pair(a, b)
    return a.with_parts(a.c0 - b.c0, a.c1 - b.c1, noise_estimate=_log_sum(a.noise_estimate, b.noise_estimate))


def h_negate(ct: Ciphertext) -> Ciphertext:
    return ct.with_parts(-ct.c0, -ct.c1)


def _match_plaintext_scale(pt: Plaintext, ct: Ciphertext) -> Tuple[Plaintext, Ciphertext]:
    """Equalize a same-level plaintext and ciphertext, scaling whichever is smaller."""
    if _same_scale(ct.scale, pt.scale):
        return pt, ct
    if pt.scale > ct.scale:
        ratio = pt.scale / ct.scale
        nearest = round(ratio)
        if abs(ratio - nearest) <= SCALE_TOLERANCE * ratio:
            return pt, _scalar_mul_ct(ct, nearest, ct.scale * nearest)
        if ct.level == 0:
            raise ScaleMismatchError(
                f"plaintext scale 2^{math.log2(pt.scale):.2f} and ciphertext scale "
                f"2^{math.log2(ct.scale):.2f} differ at level 0"
            )
        factor = round(ratio * ct.ctx.primes[ct.level].value)
        ct = rescale(_scalar_mul_ct(ct, factor, ct.scale * factor))
        return Plaintext(drop_limbs(pt.poly, 1), pt.scale, pt.slot_count), ct

    ratio = ct.scale / pt.scale
    nearest = round(ratio)
    if abs(ratio - nearest) <= SCALE_TOLERANCE * ratio:
        return Plaintext(elementwise("scalar_mul", pt.poly, nearest), pt.scale * nearest, pt.slot_count), ct
    if ct.level == 0:
        raise ScaleMismatchError(
            f"plaintext scale 2^{math.log2(pt.scale):.2f} and ciphertext scale "
            f"2^{math.log2(ct.scale):.2f} differ at level 0"
        )
    q = ct.ctx.primes[ct.level].value
    factor = round(ratio * q)
    scaled = rescale_poly(elementwise("scalar_mul", pt.poly, factor))
    dropped = ct.with_parts(drop_limbs(ct.c0, 1), drop_limbs(ct.c1, 1))
    return Plaintext(scaled, pt.scale * factor / q, pt.slot_count), dropped


def pt_add(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    pt, ct = _match_plaintext_scale(*_plaintext_at(pt, ct))
    return ct.with_parts(ct.c0 + pt.poly, ct.c1)


def pt_sub(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    pt, ct = _match_plaintext_scale(*_plaintext_at(pt, ct))
    return ct.with_parts(ct.c0 - pt.poly, ct.c1)


def _constant_poly(ctx: Context, value: complex, scale: float, level: int) -> RnsPolynomial:
    real = round(value.real * scale)
    imag = round(value.imag * scale)
    bound = ctx.level_product(level) // 2
    if max(abs(real), abs(imag)) >= bound:
        raise EncodingError(f"constant {value} overflows the level-{level} modulus at this scale")
    coeffs = [0] * ctx.ring_degree
    coeffs[0] = real
    coeffs[ctx.ring_degree // 2] = imag
    if imag == 0:
        # a constant polynomial evaluates to itself everywhere
        return RnsPolynomial(
            ctx,
            [
                Limb(i, np.full(ctx.ring_degree, real % ctx.primes[i].value, dtype=np.uint64), Format.EVAL)
                for i in ctx.level_indices(level)
            ],
        )
    return RnsPolynomial.from_integers(ctx, coeffs, ctx.level_indices(level), Format.EVAL)


def scalar_add(ct: Ciphertext, c: Complex) -> Ciphertext:
    """Add ``c`` to every slot."""
    value = complex(c)
    if value == 0:
        return ct.copy()
    const = _constant_poly(ct.ctx, value, ct.scale, ct.level)
    return ct.with_parts(ct.c0 + const, ct.c1)


def constant_scale_for(ct: Ciphertext) -> float:
    """Scale for a multiplicative constant or plaintext so the product rescales onto ``S_{l-1}``."""
    if ct.level < 1:
        raise LevelError("no level left to absorb a non-integer constant")
    ctx = ct.ctx
    return ctx.scale_by_level[ct.level - 1] * ctx.primes[ct.level].value / ct.scale


def scalar_mult(ct: Ciphertext, c: Complex, constant_scale: Optional[float] = None) -> Ciphertext:
    """Multiply every slot by ``c``; the scale grows by the constant's scale.

    Complex constants use ``a + b*i`` with the ``i`` part applied as a free
    monomial shift. Rescale afterwards.
    """
    value = complex(c)
    delta = constant_scale_for(ct) if constant_scale is None else float(constant_scale)
    real = round(value.real * delta)
    imag = round(value.imag * delta)
    if max(abs(real), abs(imag)) >= ct.ctx.level_product(ct.level) // 2:
        raise EncodingError(f"constant {value} overflows the level-{ct.level} modulus")
    out = _scalar_mul_ct(ct, real, ct.scale * delta)
    if imag:
        rotated = multiply_by_i(_scalar_mul_ct(ct, imag, ct.scale * delta))
        out = out.with_parts(out.c0 + rotated.c0, out.c1 + rotated.c1)
    return out


def scalar_mult_int(ct: Ciphertext, k: int) -> Ciphertext:
    """Exact multiplication by an integer; scale and level unchanged."""
    return _scalar_mul_ct(ct, int(k), ct.scale)


def multiply_by_i(ct: Ciphertext) -> Ciphertext:
    """Multiply every slot by ``i`` (monomial X^{N/2}); no level consumed."""
    half = ct.ctx.ring_degree // 2
    return ct.with_parts(monomial_multiply(ct.c0, half), monomial_multiply(ct.c1, half))


# --- multiplicative operations ----------------------------------------------------------------------

def encode_for_mult(ctx: Context, values, ct: Ciphertext) -> Plaintext:
    """Encode ``values`` at ``ct``'s level with the scale that rescales onto ``S_{l-1}``."""
    return encode(ctx, values, level=ct.level, scale=constant_scale_for(ct), slot_count=ct.slot_count)


def pt_mult(ct: Ciphertext, pt: Plaintext) -> Ciphertext:
    pt, ct = _plaintext_at(pt, ct)
    return ct.with_parts(
        ct.c0 * pt.poly,
        ct.c1 * pt.poly,
        scale=ct.scale * pt.scale,
        noise_estimate=_noise_after_mult(ct, 0.0, pt.scale),
    )


def relinearize(d0: RnsPolynomial, d1: RnsPolynomial, d2: RnsPolynomial, relin_key: KeySwitchingKey,
                fused: bool = True) -> Tuple[RnsPolynomial, RnsPolynomial]:
    u0, u1 = key_switch(d2, relin_key, fused)
    return d0 + u0, d1 + u1


def h_mult(a: Ciphertext, b: Ciphertext, keys: EvaluationKeys, fused: bool = True) -> Ciphertext:
    """Tensor product and relinearization; the result is not rescaled."""
    if a.ctx is not b.ctx:
        raise ParameterError("ciphertexts belong to different contexts")
    a, b = _align_levels(a, b)
    relin_key = keys.relin_key()
    d0 = a.c0 * b.c0
    d1 = a.c0 * b.c1 + a.c1 * b.c0
    d2 = a.c1 * b.c1
    c0, c1 = relinearize(d0, d1, d2, relin_key, fused)
    return a.with_parts(c0, c1, scale=a.scale * b.scale, noise_estimate=_noise_after_mult(a, b.noise_estimate, b.scale))


def h_square(ct: Ciphertext, keys: EvaluationKeys, fused: bool = True) -> Ciphertext:
    """``h_mult(ct, ct)`` with one cross product instead of two."""
    relin_key = keys.relin_key()
    d0 = ct.c0 * ct.c0
    cross = ct.c0 * ct.c1
    d1 = cross + cross
    d2 = ct.c1 * ct.c1
    c0, c1 = relinearize(d0, d1, d2, relin_key, fused)
    return ct.with_parts(c0, c1, scale=ct.scale * ct.scale,
                         noise_estimate=_noise_after_mult(ct, ct.noise_estimate, ct.scale))


def mult_and_rescale(a: Ciphertext, b: Union[Ciphertext, Plaintext], keys: Optional[EvaluationKeys] = None) -> Ciphertext:
    if isinstance(b, Plaintext):
        return rescale(pt_mult(a, b))
    if keys is None:
        raise KeyMissingError("ciphertext multiplication needs evaluation keys")
    if b is a:
        return rescale(h_square(a, keys))
    return rescale(h_mult(a, b, keys))


# --- rotations -------------------------------------------------------------------------------------

def _rotation_key(ct: Ciphertext, steps: int, keys: EvaluationKeys) -> Tuple[int, KeySwitchingKey]:
    ctx = ct.ctx
    candidates = [steps, steps % ct.slot_count]
    for k in candidates:
        g = ctx.galois_element(k)
        if g in keys.rotations:
            return g, keys.rotations[g]
    raise KeyMissingError(f"no rotation key for {steps} steps")


def _galois_switch(ct: Ciphertext, g: int, key: KeySwitchingKey, fused: bool) -> Ciphertext:
    u0, u1 = key_switch(automorphism(ct.c1, g), key, fused)
    return ct.with_parts(automorphism(ct.c0, g) + u0, u1)


def h_rotate(ct: Ciphertext, steps: int, keys: EvaluationKeys, fused: bool = True) -> Ciphertext:
    """Rotate the slots left by ``steps`` (cyclic over the slot count)."""
    if steps % ct.slot_count == 0:
        return ct.copy()
    g, key = _rotation_key(ct, steps, keys)
    return _galois_switch(ct, g, key, fused)


def conjugate(ct: Ciphertext, keys: EvaluationKeys, fused: bool = True) -> Ciphertext:
    return _galois_switch(ct, ct.ctx.conjugation_element, keys.conjugation_key(), fused)


def apply_galois(ct: Ciphertext, galois_element: int, keys: EvaluationKeys, fused: bool = True) -> Ciphertext:
    """X -> X^g on both parts, key-switched back to the secret key.

    Unlike :func:`h_rotate` nothing is reduced modulo the slot count, so this
    also reaches automorphisms that act trivially on sparse slots.
    """
    return _galois_switch(ct, galois_element, keys.galois_key(galois_element), fused)


def hoisted_rotations(
    ct: Ciphertext, steps: Sequence[int], keys: EvaluationKeys, fused: bool = True
) -> List[Ciphertext]:
    """Rotations of one ciphertext sharing a single digit decomposition and ModUp."""
    if not steps:
        return []
    lookups = [None if k % ct.slot_count == 0 else _rotation_key(ct, k, keys) for k in steps]
    if all(entry is None for entry in lookups):
        return [ct.copy() for _ in steps]
    raised = decompose_and_raise(ct.c1, fused)
    out = []
    for entry in lookups:
        if entry is None:
            out.append(ct.copy())
            continue
        g, key = entry
        u0, u1 = key_switch_raised([r.automorphism(g) for r in raised], key, fused)
        out.append(ct.with_parts(automorphism(ct.c0, g) + u0, u1))
    logger.debug("Hoisted %d rotations over %d raised digits", len(steps), len(raised))
    return out


# --- weighted sums ---------------------------------------------------------------------------------

def _weight_polys(cts: Sequence[Ciphertext], weights: Sequence[Union[Plaintext, Complex]]) -> Tuple[List, float]:
    first = cts[0]
    if all(isinstance(w, Plaintext) for w in weights):
        scale = weights[0].scale
        if any(not _same_scale(w.scale, scale) for w in weights):
            raise ScaleMismatchError("weight plaintexts must share a scale")
        indices = first.c0.indices
        return [w.poly.subset(indices) if w.level > first.level else w.poly for w in weights], scale
    if any(isinstance(w, Plaintext) for w in weights):
        raise ParameterError("weights must be all plaintexts or all scalars")
    delta = constant_scale_for(first)
    ints = [round(float(np.real(w)) * delta) for w in weights]
    if any(complex(w).imag for w in weights):
        raise ParameterError("scalar weights of a fused weighted sum must be real")
    return ints, delta


def fused_weighted_sum(
    cts: Sequence[Ciphertext], weights: Sequence[Union[Plaintext, Complex]]
) -> Ciphertext:
    """``sum_i w_i * ct_i`` in one multiply-accumulate pass per limb (not rescaled)."""
    if not cts:
        raise ParameterError("fused_weighted_sum needs at least one term")
    if len(cts) != len(weights):
        raise ParameterError(f"{len(cts)} ciphertexts but {len(weights)} weights")
    first = cts[0]
    if any(ct.level != first.level for ct in cts):
        raise LevelError("fused_weighted_sum needs ciphertexts at one level")
    if any(not _same_scale(ct.scale, first.scale) for ct in cts):
        raise ScaleMismatchError("fused_weighted_sum needs ciphertexts at one scale")
    polys, weight_scale = _weight_polys(cts, weights)
    if any(isinstance(p, RnsPolynomial) and p.level != first.level for p in polys):
        raise LevelError("weight plaintexts sit below the ciphertext level")
    ctx = first.ctx
    indices = first.c0.indices

    def one(position: int) -> Tuple[Limb, Limb]:
        i = indices[position]
        m = ctx.primes[i]
        acc0 = WideAccumulator((ctx.ring_degree,), m)
        acc1 = WideAccumulator((ctx.ring_degree,), m)
        for ct, w in zip(cts, polys):
            if isinstance(w, RnsPolynomial):
                factor = w.limbs[position].coeffs
            else:
                factor = np.uint64(w % m.value)
            acc0.add_product(ct.c0.limbs[position].coeffs, factor)
            acc1.add_product(ct.c1.limbs[position].coeffs, factor)
        return Limb(i, acc0.reduce(), Format.EVAL), Limb(i, acc1.reduce(), Format.EVAL)

    pairs = ctx.map_limbs(one, range(len(indices)))
    return first.with_parts(
        RnsPolynomial(ctx, [p[0] for p in pairs]),
        RnsPolynomial(ctx, [p[1] for p in pairs]),
        scale=first.scale * weight_scale,
        noise_estimate=None,
    )
