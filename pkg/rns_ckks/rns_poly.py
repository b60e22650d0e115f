"""RNS polynomials: limb stacks and the cross-limb algorithms on them."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .context import ConversionTable, Context
from .exceptions import FormatMismatchError, LevelError, LimbMismatchError, ParameterError
from .modarith import PrimeModulus, barrett_mul, mod_add, mod_neg, mod_sub, to_residues
from .ntt import (
    ScaleSubtract,
    WideAccumulator,
    forward_ntt,
    inverse_ntt,
    scale_subtract,
)
from .utils import bit_reverse_permutation

logger = logging.getLogger(__name__)


class Format(str, Enum):
    COEFF = "coeff"
    EVAL = "eval"


@dataclass
class Limb:
    """Residues of one polynomial under the prime ``ctx.primes[modulus_index]``."""

    modulus_index: int
    coeffs: np.ndarray
    format: Format


Scalars = Union[int, Sequence[int]]


class RnsPolynomial:
    """A polynomial mod (X^N + 1) as a stack of limbs sharing one format.

    Chain limbs come first (indices 0..level), optional extension limbs after.
    """

    def __init__(self, ctx: Context, limbs: Sequence[Limb]):
        self.ctx = ctx
        self.limbs: List[Limb] = list(limbs)
        if not self.limbs:
            raise LimbMismatchError("a polynomial needs at least one limb")
        fmt = self.limbs[0].format
        seen = set()
        for limb in self.limbs:
            if limb.format != fmt:
                raise FormatMismatchError("limbs of one polynomial must share a format")
            if limb.coeffs.shape != (ctx.ring_degree,):
                raise LimbMismatchError(f"limb length {limb.coeffs.shape} != N={ctx.ring_degree}")
            if limb.modulus_index in seen:
                raise LimbMismatchError(f"duplicate limb index {limb.modulus_index}")
            seen.add(limb.modulus_index)

    # --- construction -------------------------------------------------------------

    @classmethod
    def zeros(cls, ctx: Context, indices: Sequence[int], fmt: Format = Format.EVAL) -> "RnsPolynomial":
        return cls(ctx, [Limb(i, np.zeros(ctx.ring_degree, dtype=np.uint64), fmt) for i in indices])

    @classmethod
    def from_block(cls, ctx: Context, block: np.ndarray, indices: Sequence[int], fmt: Format) -> "RnsPolynomial":
        """Limbs as row views into one contiguous ``(len(indices), N)`` array."""
        block = np.ascontiguousarray(block, dtype=np.uint64)
        if block.shape != (len(indices), ctx.ring_degree):
            raise LimbMismatchError(f"block shape {block.shape} != ({len(indices)}, {ctx.ring_degree})")
        return cls(ctx, [Limb(i, block[row], fmt) for row, i in enumerate(indices)])

    @classmethod
    def from_integers(
        cls, ctx: Context, values, indices: Sequence[int], fmt: Format = Format.COEFF
    ) -> "RnsPolynomial":
        """Reduce one signed integer polynomial into every limb of ``indices``.

        ``values`` is an int64 array or a sequence of Python ints; with
        ``fmt=EVAL`` the limbs are transformed after reduction.
        """
        arr = np.asarray(values)
        limbs = []
        for i in indices:
            p = ctx.primes[i]
            if arr.dtype == np.int64:
                pv = np.int64(p.value)
                residues = np.remainder(arr, pv).astype(np.uint64)
            else:
                residues = to_residues(arr, p)
            limbs.append(Limb(i, residues, Format.COEFF))
        poly = cls(ctx, limbs)
        return poly.to_eval() if fmt == Format.EVAL else poly

    def copy(self) -> "RnsPolynomial":
        return RnsPolynomial(self.ctx, [Limb(l.modulus_index, l.coeffs.copy(), l.format) for l in self.limbs])

    # --- shape -------------------------------------------------------------------------

    @property
    def format(self) -> Format:
        return self.limbs[0].format

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(l.modulus_index for l in self.limbs)

    @property
    def chain_count(self) -> int:
        return sum(1 for i in self.indices if i <= self.ctx.depth)

    @property
    def level(self) -> int:
        return self.chain_count - 1

    @property
    def has_extension(self) -> bool:
        return self.chain_count < len(self.limbs)

    def limb_by_index(self, modulus_index: int) -> Limb:
        for limb in self.limbs:
            if limb.modulus_index == modulus_index:
                return limb
        raise LimbMismatchError(f"no limb for modulus index {modulus_index}")

    def subset(self, indices: Iterable[int]) -> "RnsPolynomial":
        """Polynomial sharing the arrays of the requested limbs."""
        return RnsPolynomial(self.ctx, [self.limb_by_index(i) for i in indices])

    def chain_part(self) -> "RnsPolynomial":
        return RnsPolynomial(self.ctx, self.limbs[: self.chain_count])

    def extension_part(self) -> "RnsPolynomial":
        if not self.has_extension:
            raise LimbMismatchError("polynomial has no extension limbs")
        return RnsPolynomial(self.ctx, self.limbs[self.chain_count:])

    def as_block(self) -> np.ndarray:
        return np.stack([l.coeffs for l in self.limbs])

    def is_zero(self) -> bool:
        return all(not l.coeffs.any() for l in self.limbs)

    def __repr__(self) -> str:
        return f"RnsPolynomial(N={self.ctx.ring_degree}, limbs={list(self.indices)}, format={self.format.value})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RnsPolynomial):
            return NotImplemented
        return (
            self.indices == other.indices
            and self.format == other.format
            and all(np.array_equal(a.coeffs, b.coeffs) for a, b in zip(self.limbs, other.limbs))
        )

    __hash__ = None

    # --- operators ------------------------------------------------------------------------

    def __add__(self, other: "RnsPolynomial") -> "RnsPolynomial":
        return elementwise("add", self, other)

    def __sub__(self, other: "RnsPolynomial") -> "RnsPolynomial":
        return elementwise("sub", self, other)

    def __mul__(self, other: "RnsPolynomial") -> "RnsPolynomial":
        return elementwise("mul", self, other)

    def __neg__(self) -> "RnsPolynomial":
        return elementwise("neg", self)

    def to_eval(self) -> "RnsPolynomial":
        return to_eval(self)

    def to_coeff(self) -> "RnsPolynomial":
        return to_coeff(self)


# --- elementwise ------------------------------------------------------------------------------

_ELEMENTWISE_OPS = ("add", "sub", "mul", "scalar_mul", "neg")


def _per_limb_scalars(poly: RnsPolynomial, scalars: Scalars) -> List[int]:
    if isinstance(scalars, (int, np.integer)):
        return [int(scalars) % poly.ctx.primes[i].value for i in poly.indices]
    scalars = [int(s) for s in scalars]
    if len(scalars) != len(poly.limbs):
        raise LimbMismatchError(f"{len(scalars)} scalars for {len(poly.limbs)} limbs")
    return [s % poly.ctx.primes[i].value for s, i in zip(scalars, poly.indices)]


def elementwise(
    op: str, a: RnsPolynomial, b: Optional[Union[RnsPolynomial, Scalars]] = None
) -> RnsPolynomial:
    """Per-limb modular add / sub / mul / scalar_mul / neg."""
    if op not in _ELEMENTWISE_OPS:
        raise ParameterError(f"unknown elementwise op {op!r}")
    ctx = a.ctx
    primes = ctx.primes

    if op == "neg":
        def neg(limb: Limb) -> Limb:
            return Limb(limb.modulus_index, mod_neg(limb.coeffs, primes[limb.modulus_index]), limb.format)
        return RnsPolynomial(ctx, ctx.map_limbs(neg, a.limbs))

    if op == "scalar_mul":
        scalars = _per_limb_scalars(a, b)

        def scale(pair: Tuple[Limb, int]) -> Limb:
            limb, s = pair
            out = barrett_mul(limb.coeffs, np.uint64(s), primes[limb.modulus_index])
            return Limb(limb.modulus_index, out, limb.format)
        return RnsPolynomial(ctx, ctx.map_limbs(scale, zip(a.limbs, scalars)))

    if not isinstance(b, RnsPolynomial):
        raise ParameterError(f"{op} needs a polynomial operand")
    if a.indices != b.indices:
        raise LimbMismatchError(f"limb sets differ: {a.indices} vs {b.indices}")
    if a.format != b.format:
        raise FormatMismatchError(f"cannot {op} {a.format.value} and {b.format.value} polynomials")
    if op == "mul" and a.format != Format.EVAL:
        raise FormatMismatchError("polynomial multiplication requires EVAL format")

    kernel = {"add": mod_add, "sub": mod_sub, "mul": barrett_mul}[op]

    def apply(pair: Tuple[Limb, Limb]) -> Limb:
        x, y = pair
        return Limb(x.modulus_index, kernel(x.coeffs, y.coeffs, primes[x.modulus_index]), x.format)

    return RnsPolynomial(ctx, ctx.map_limbs(apply, zip(a.limbs, b.limbs)))


# --- representation switching ----------------------------------------------------------------

def to_eval(x: RnsPolynomial) -> RnsPolynomial:
    if x.format == Format.EVAL:
        return x
    ctx = x.ctx

    def fwd(limb: Limb) -> Limb:
        table = ctx.ntt_tables[limb.modulus_index]
        return Limb(limb.modulus_index, forward_ntt(limb.coeffs, table, variant=ctx.ntt_variant), Format.EVAL)

    return RnsPolynomial(ctx, ctx.map_limbs(fwd, x.limbs))


def to_coeff(x: RnsPolynomial) -> RnsPolynomial:
    if x.format == Format.COEFF:
        return x
    ctx = x.ctx

    def inv(limb: Limb) -> Limb:
        table = ctx.ntt_tables[limb.modulus_index]
        return Limb(limb.modulus_index, inverse_ntt(limb.coeffs, table, variant=ctx.ntt_variant), Format.COEFF)

    return RnsPolynomial(ctx, ctx.map_limbs(inv, x.limbs))


# --- base conversion -------------------------------------------------------------------------

def scale_by_q_hat_inv(x: RnsPolynomial, table: ConversionTable) -> List[np.ndarray]:
    """``[x_i * q_hat_i^-1]_{q_i}`` for every source limb."""
    primes = x.ctx.primes
    return [
        barrett_mul(x.limb_by_index(i).coeffs, np.uint64(inv), primes[i])
        for i, inv in zip(table.source, table.q_hat_inv)
    ]


def convert_scaled(ctx: Context, scaled: Sequence[np.ndarray], table: ConversionTable) -> List[np.ndarray]:
    """Matrix-vector half of fast base conversion, 128-bit accumulation per target."""

    def one_target(column: int) -> np.ndarray:
        m = ctx.primes[table.target[column]]
        acc = WideAccumulator((ctx.ring_degree,), m)
        for row, y in enumerate(scaled):
            acc.add_product(y, table.q_hat_mod[row, column])
        return acc.reduce()

    return ctx.map_limbs(one_target, range(len(table.target)))


def fast_base_convert(
    x: RnsPolynomial, target: Sequence[int], prescaled: Optional[Sequence[np.ndarray]] = None
) -> RnsPolynomial:
    """Convert a COEFF polynomial from its own base to ``target``.

    Each output coefficient equals ``x + u*Q'`` modulo the target prime for
    some ``0 <= u < len(source)``, where ``Q'`` is the source product.
    ``prescaled`` supplies ``[x_i * q_hat_i^-1]_{q_i}`` when already computed.
    """
    if x.format != Format.COEFF:
        raise FormatMismatchError("fast base conversion needs COEFF format")
    table = x.ctx.conversion_table(x.indices, tuple(target))
    scaled = prescaled if prescaled is not None else scale_by_q_hat_inv(x, table)
    rows = convert_scaled(x.ctx, scaled, table)
    return RnsPolynomial(x.ctx, [Limb(j, row, Format.COEFF) for j, row in zip(table.target, rows)])


# --- modulus switching and rescale ------------------------------------------------------------

def switch_modulus(coeffs: np.ndarray, source: PrimeModulus, target: PrimeModulus) -> np.ndarray:
    """Centered lift of residues mod ``source`` into residues mod ``target``."""
    q = source.u64
    p = target.u64
    negative = coeffs > np.uint64(source.value // 2)
    positive_part = coeffs % p
    negative_part = mod_neg((q - coeffs) % p, target)
    return np.where(negative, negative_part, positive_part)


def rescale(x: RnsPolynomial, fused: bool = True) -> RnsPolynomial:
    """Divide by the top chain prime ``q_l`` with rounding and drop that limb.

    Every remaining limb becomes ``q_l^-1 * (x_i - [x]_{q_l})`` mod ``q_i``.
    """
    if x.format != Format.EVAL:
        raise FormatMismatchError("rescale operates on EVAL polynomials")
    if x.has_extension:
        raise LimbMismatchError("rescale expects chain limbs only")
    level = x.level
    if level < 1:
        raise LevelError("cannot rescale at level 0")
    ctx = x.ctx
    top_index = x.limbs[level].modulus_index
    top_prime = ctx.primes[top_index]
    top = inverse_ntt(x.limbs[level].coeffs, ctx.ntt_tables[top_index], variant=ctx.ntt_variant)
    inverses = ctx.rescale_inverses[top_index]

    def one(limb: Limb) -> Limb:
        i = limb.modulus_index
        lifted = switch_modulus(top, top_prime, ctx.primes[i])
        table = ctx.ntt_tables[i]
        if fused:
            out = forward_ntt(lifted, table, ScaleSubtract(limb.coeffs, inverses[i]), variant=ctx.ntt_variant)
        else:
            out = scale_subtract(
                forward_ntt(lifted, table, variant=ctx.ntt_variant), limb.coeffs, inverses[i], ctx.primes[i]
            )
        return Limb(i, out, Format.EVAL)

    return RnsPolynomial(ctx, ctx.map_limbs(one, x.limbs[:level]))


def drop_limbs(x: RnsPolynomial, count: int) -> RnsPolynomial:
    """Remove the ``count`` highest chain limbs (no division)."""
    if count < 0:
        raise ParameterError("count must be non-negative")
    if count == 0:
        return x
    if x.has_extension:
        raise LimbMismatchError("drop_limbs expects chain limbs only")
    if count > x.level:
        raise LevelError(f"cannot drop {count} limbs from a level-{x.level} polynomial")
    return RnsPolynomial(x.ctx, x.limbs[: len(x.limbs) - count])


# --- ring maps -----------------------------------------------------------------------------------

def automorphism(x: RnsPolynomial, galois_exponent: int) -> RnsPolynomial:
    """X -> X^k, in either format."""
    ctx = x.ctx
    k = galois_exponent
    if k % 2 == 0:
        raise ParameterError(f"Galois exponent must be odd, got {k}")
    k %= 2 * ctx.ring_degree
    if x.format == Format.EVAL:
        perm = ctx.eval_permutation(k)
        return RnsPolynomial(ctx, [Limb(l.modulus_index, l.coeffs[perm], l.format) for l in x.limbs])

    dest, negate = ctx.coeff_map(k)

    def one(limb: Limb) -> Limb:
        m = ctx.primes[limb.modulus_index]
        out = np.empty_like(limb.coeffs)
        out[dest] = np.where(negate, mod_neg(limb.coeffs, m), limb.coeffs)
        return Limb(limb.modulus_index, out, limb.format)

    return RnsPolynomial(ctx, ctx.map_limbs(one, x.limbs))


def monomial_multiply(x: RnsPolynomial, power: int) -> RnsPolynomial:
    """Multiply by X^power (negacyclic)."""
    ctx = x.ctx
    n = ctx.ring_degree
    power %= 2 * n
    if x.format == Format.COEFF:
        sign_flip = power >= n
        shift = power % n

        def one_coeff(limb: Limb) -> Limb:
            m = ctx.primes[limb.modulus_index]
            rolled = np.roll(limb.coeffs, shift)
            wrapped = np.arange(n) < shift
            if sign_flip:
                wrapped = ~wrapped
            return Limb(limb.modulus_index, np.where(wrapped, mod_neg(rolled, m), rolled), limb.format)

        return RnsPolynomial(ctx, ctx.map_limbs(one_coeff, x.limbs))

    br = bit_reverse_permutation(n)
    exponents = ((2 * br.astype(np.int64) + 1) * power) % (2 * n)

    def one_eval(limb: Limb) -> Limb:
        table = ctx.ntt_tables[limb.modulus_index]
        m = table.modulus
        # psi_powers is bit-reversed: psi^e sits at bitrev(e)
        values = table.psi_powers[br[exponents % n]]
        values = np.where(exponents >= n, mod_neg(values, m), values)
        return Limb(limb.modulus_index, barrett_mul(limb.coeffs, values, m), limb.format)

    return RnsPolynomial(ctx, ctx.map_limbs(one_eval, x.limbs))


# --- reconstruction -----------------------------------------------------------------------------

def crt_reconstruct(
    x: RnsPolynomial, positions: Optional[Sequence[int]] = None, centered: bool = True
) -> np.ndarray:
    """Big-integer coefficients (object array) modulo the product of the limb primes."""
    x = to_coeff(x)
    ctx = x.ctx
    values = [ctx.primes[i].value for i in x.indices]
    modulus = 1
    for v in values:
        modulus *= v
    idx = slice(None) if positions is None else np.asarray(positions, dtype=np.int64)
    total = np.zeros(ctx.ring_degree if positions is None else len(positions), dtype=object)
    for limb, q in zip(x.limbs, values):
        q_hat = modulus // q
        inv = pow(q_hat % q, -1, q)
        y = barrett_mul(limb.coeffs[idx], np.uint64(inv), ctx.primes[limb.modulus_index])
        total += y.astype(object) * q_hat
    total %= modulus
    if centered:
        half = modulus // 2
        total = np.where(total > half, total - modulus, total)
    return total
