"""
Hybrid key switching.

A level-l polynomial is split into digits of ``alpha`` chain limbs. Each
digit is raised to ``Q_l * P`` (ModUp), multiplied against its key pair,
accumulated, and divided back down by ``P`` (ModDown).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .client import KeySwitchingKey
from .context import ConversionTable, Context
from .exceptions import FormatMismatchError, KeyMissingError, LimbMismatchError
from .ntt import (
    KskMultiplyAccumulate,
    ScaleBy,
    ScaleSubtract,
    WideAccumulator,
    forward_ntt,
    inverse_ntt,
    ksk_multiply_accumulate,
    scale_subtract,
)
from .rns_poly import (
    Format,
    Limb,
    RnsPolynomial,
    automorphism,
    convert_scaled,
    fast_base_convert,
    scale_by_q_hat_inv,
    to_coeff,
    to_eval,
)

logger = logging.getLogger(__name__)


@dataclass
class ExtendedPolynomial:
    """EVAL polynomial over chain limbs ``0..level`` plus every extension limb."""

    poly: RnsPolynomial
    origin_digit: Optional[int] = None

    def __post_init__(self) -> None:
        ctx = self.poly.ctx
        expected = ctx.level_indices(self.poly.level) + ctx.extension_indices
        if self.poly.indices != expected:
            raise LimbMismatchError(f"extended polynomial limbs {self.poly.indices} != {expected}")
        if self.poly.format != Format.EVAL:
            raise FormatMismatchError("extended polynomials are kept in EVAL format")

    @property
    def level(self) -> int:
        return self.poly.level

    @property
    def ctx(self) -> Context:
        return self.poly.ctx

    def automorphism(self, galois_exponent: int) -> "ExtendedPolynomial":
        return ExtendedPolynomial(automorphism(self.poly, galois_exponent), self.origin_digit)


def _digit_layout(ctx: Context, level: int, owned: Sequence[int]) -> Tuple[Tuple[int, ...], ConversionTable]:
    chain = ctx.level_indices(level)
    missing = set(owned) - set(chain)
    if missing:
        raise LimbMismatchError(f"digit limbs {sorted(missing)} are above level {level}")
    rest = tuple(i for i in chain if i not in owned) + ctx.extension_indices
    return rest, ctx.conversion_table(tuple(owned), rest)


def _scaled_digit(x: RnsPolynomial, owned: Sequence[int], table: ConversionTable, fused: bool) -> List[np.ndarray]:
    """``[x_i * q_hat_i^-1]_{q_i}`` in COEFF form for the digit's own limbs."""
    ctx = x.ctx
    if x.format == Format.COEFF:
        return scale_by_q_hat_inv(x.subset(owned), table)
    if not fused:
        return scale_by_q_hat_inv(to_coeff(x.subset(owned)), table)

    def one(pair: Tuple[int, int]) -> np.ndarray:
        i, q_hat_inv = pair
        return inverse_ntt(x.limb_by_index(i).coeffs, ctx.ntt_tables[i], ScaleBy(q_hat_inv), variant=ctx.ntt_variant)

    return ctx.map_limbs(one, zip(owned, table.q_hat_inv))


def mod_up(
    x: RnsPolynomial, digit: Sequence[int], level: Optional[int] = None, fused: bool = True
) -> ExtendedPolynomial:
    """Raise the limbs ``digit`` of ``x`` to the base ``Q_level * P``.

    Owned limbs pass through unchanged; every other limb holds
    ``[x]_digit + u * Q_digit`` for some small ``u``. ``x`` may be in either
    format; with EVAL input the inverse transform is fused with the
    ``q_hat^-1`` scaling unless ``fused`` is False.
    """
    ctx = x.ctx
    owned = tuple(digit)
    level = x.level if level is None else level
    rest, table = _digit_layout(ctx, level, owned)
    scaled = _scaled_digit(x, owned, table, fused)
    rows = convert_scaled(ctx, scaled, table)

    def forward(pair: Tuple[int, np.ndarray]) -> np.ndarray:
        i, row = pair
        return forward_ntt(row, ctx.ntt_tables[i], variant=ctx.ntt_variant)

    limbs: Dict[int, np.ndarray] = dict(zip(rest, ctx.map_limbs(forward, zip(rest, rows))))
    for i in owned:
        limb = x.limb_by_index(i)
        coeffs = limb.coeffs
        if limb.format == Format.COEFF:
            coeffs = forward_ntt(coeffs, ctx.ntt_tables[i], variant=ctx.ntt_variant)
        limbs[i] = coeffs
    indices = ctx.level_indices(level) + ctx.extension_indices
    poly = RnsPolynomial(ctx, [Limb(i, limbs[i], Format.EVAL) for i in indices])
    return ExtendedPolynomial(poly, origin_digit=owned[0] // ctx.alpha)


def mod_down(x: ExtendedPolynomial, fused: bool = True) -> RnsPolynomial:
    """Approximate ``x / P`` on the chain limbs.

    Each chain limb becomes ``P^-1 * (x_i - [x]_P)`` with the extension part
    brought down by fast base conversion.
    """
    ctx = x.ctx
    chain = ctx.level_indices(x.level)
    converted = fast_base_convert(to_coeff(x.poly.subset(ctx.extension_indices)), chain)

    def one(limb: Limb) -> Limb:
        i = limb.modulus_index
        minuend = x.poly.limb_by_index(i).coeffs
        table = ctx.ntt_tables[i]
        if fused:
            out = forward_ntt(limb.coeffs, table, ScaleSubtract(minuend, ctx.p_inv_mod_q[i]), variant=ctx.ntt_variant)
        else:
            out = scale_subtract(
                forward_ntt(limb.coeffs, table, variant=ctx.ntt_variant), minuend, ctx.p_inv_mod_q[i], ctx.primes[i]
            )
        return Limb(i, out, Format.EVAL)

    return RnsPolynomial(ctx, ctx.map_limbs(one, converted.limbs))


def _check_input(d: RnsPolynomial, ksk: KeySwitchingKey) -> RnsPolynomial:
    if d.has_extension:
        raise LimbMismatchError("key switching input must hold chain limbs only")
    digits = d.ctx.digit_bases(d.level)
    if ksk.digit_count < len(digits):
        raise KeyMissingError(f"key has {ksk.digit_count} digits, level {d.level} needs {len(digits)}")
    return to_eval(d)


def decompose_and_raise(d: RnsPolynomial, fused: bool = True) -> List[ExtendedPolynomial]:
    """ModUp of every active digit of ``d``; the shareable half of a key switch."""
    d = to_eval(d)
    return [mod_up(d, digit, fused=fused) for digit in d.ctx.digit_bases(d.level)]


def _accumulate(raised: Sequence[ExtendedPolynomial], ksk: KeySwitchingKey, fused: bool) -> Tuple[RnsPolynomial, RnsPolynomial]:
    ctx = raised[0].ctx
    indices = raised[0].poly.indices
    keys = [ksk.digit_at(j, indices) for j in range(len(raised))]
    if not fused:
        sum0 = raised[0].poly * keys[0][0]
        sum1 = raised[0].poly * keys[0][1]
        for r, (k0, k1) in zip(raised[1:], keys[1:]):
            sum0 = sum0 + r.poly * k0
            sum1 = sum1 + r.poly * k1
        return sum0, sum1

    def one(position: int) -> Tuple[Limb, Limb]:
        i = indices[position]
        m = ctx.primes[i]
        acc0 = WideAccumulator((ctx.ring_degree,), m)
        acc1 = WideAccumulator((ctx.ring_degree,), m)
        for r, (k0, k1) in zip(raised, keys):
            ksk_multiply_accumulate(
                r.poly.limbs[position].coeffs, k0.limbs[position].coeffs, k1.limbs[position].coeffs, acc0, acc1
            )
        return Limb(i, acc0.reduce(), Format.EVAL), Limb(i, acc1.reduce(), Format.EVAL)

    pairs = ctx.map_limbs(one, range(len(indices)))
    return RnsPolynomial(ctx, [p[0] for p in pairs]), RnsPolynomial(ctx, [p[1] for p in pairs])


def key_switch_raised(
    raised: Sequence[ExtendedPolynomial], ksk: KeySwitchingKey, fused: bool = True
) -> Tuple[RnsPolynomial, RnsPolynomial]:
    """Inner product of already-raised digits with ``ksk``, then ModDown."""
    if not raised:
        raise LimbMismatchError("no raised digits to key-switch")
    if ksk.digit_count < len(raised):
        raise KeyMissingError(f"key has {ksk.digit_count} digits, {len(raised)} were raised")
    sum0, sum1 = _accumulate(raised, ksk, fused)
    return mod_down(ExtendedPolynomial(sum0), fused), mod_down(ExtendedPolynomial(sum1), fused)


def key_switch(d: RnsPolynomial, ksk: KeySwitchingKey, fused: bool = True) -> Tuple[RnsPolynomial, RnsPolynomial]:
    """``(u0, u1)`` with ``u0 + u1*s_to ≈ d * s_from`` at the level of ``d``.

    The fused path streams one digit at a time: its converted limbs are
    transformed with the key multiply-accumulate epilogue and only the two
    wide accumulators per limb stay alive. The unfused path materializes
    every raised digit first; both produce identical limbs.
    """
    d = _check_input(d, ksk)
    if not fused:
        return key_switch_raised(decompose_and_raise(d, fused=False), ksk, fused=False)

    ctx = d.ctx
    indices = ctx.level_indices(d.level) + ctx.extension_indices
    accumulators = {
        i: (WideAccumulator((ctx.ring_degree,), ctx.primes[i]), WideAccumulator((ctx.ring_degree,), ctx.primes[i]))
        for i in indices
    }
    for j, digit in enumerate(ctx.digit_bases(d.level)):
        owned = tuple(digit)
        rest, table = _digit_layout(ctx, d.level, owned)
        rows = convert_scaled(ctx, _scaled_digit(d, owned, table, fused=True), table)
        k0, k1 = ksk.digits[j]

        def converted(pair: Tuple[int, np.ndarray]) -> None:
            i, row = pair
            acc0, acc1 = accumulators[i]
            epilogue = KskMultiplyAccumulate(k0.limb_by_index(i).coeffs, k1.limb_by_index(i).coeffs, acc0, acc1)
            forward_ntt(row, ctx.ntt_tables[i], epilogue, variant=ctx.ntt_variant)

        ctx.map_limbs(converted, zip(rest, rows))
        for i in owned:
            acc0, acc1 = accumulators[i]
            ksk_multiply_accumulate(
                d.limb_by_index(i).coeffs, k0.limb_by_index(i).coeffs, k1.limb_by_index(i).coeffs, acc0, acc1
            )

    sum0 = RnsPolynomial(ctx, [Limb(i, accumulators[i][0].reduce(), Format.EVAL) for i in indices])
    sum1 = RnsPolynomial(ctx, [Limb(i, accumulators[i][1].reduce(), Format.EVAL) for i in indices])
    return mod_down(ExtendedPolynomial(sum0)), mod_down(ExtendedPolynomial(sum1))
