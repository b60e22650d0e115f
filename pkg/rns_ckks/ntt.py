"""Negacyclic NTT over one prime, flat and hierarchical, with fused epilogues.

Forward transforms take natural-order coefficients and return evaluations in
bit-reversed order: output slot ``k`` holds the evaluation at
``psi^(2*bitrev(k)+1)``. Inverse transforms undo this exactly, N^-1 included.

Butterflies run lazily (values below 4p) and normalize once at the end.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .config import NTT_VARIANT_FLAT, NTT_VARIANT_HIERARCHICAL, NTT_VARIANTS
from .exceptions import LimbMismatchError, ParameterError
from .modarith import (
    PrimeModulus,
    barrett_mul,
    mod_add,
    mod_inv,
    mod_sub,
    mul_wide,
    normalize_lazy,
    shoup_mul_lazy,
    shoup_quotients,
)
from .utils import bit_reverse_permutation, is_power_of_two

logger = logging.getLogger(__name__)

# Terms a WideAccumulator may take before its high word has to be folded
WIDE_FOLD_INTERVAL = 64


def _powers(base: int, count: int, m: PrimeModulus) -> np.ndarray:
    """``[base^0, ..., base^(count-1)] mod p`` by repeated doubling."""
    out = np.ones(count, dtype=np.uint64)
    if count <= 1:
        return out
    out[1] = base % m.value
    filled = 2
    while filled < count:
        take = min(filled, count - filled)
        step = pow(base, filled, m.value)
        out[filled:filled + take] = barrett_mul(out[:take], np.uint64(step), m)
        filled += take
    return out


def find_primitive_root(ring_degree: int, m: PrimeModulus) -> int:
    """Smallest-generator 2N-th root of unity psi with psi^N = -1."""
    p = m.value
    order = 2 * ring_degree
    if (p - 1) % order:
        raise ParameterError(f"{p} is not 1 mod {order}")
    exponent = (p - 1) // order
    for g in range(2, p):
        psi = pow(g, exponent, p)
        if pow(psi, ring_degree, p) == p - 1:
            return psi
    raise ParameterError(f"no primitive {order}-th root of unity modulo {p}")


class WideAccumulator:
    """Sum of 128-bit products kept as (hi, lo) uint64 words.

    The high word is folded back into a residue every ``WIDE_FOLD_INTERVAL``
    terms so it can never overflow.
    """

    def __init__(self, shape: Tuple[int, ...], modulus: PrimeModulus):
        self.modulus = modulus
        self.hi = np.zeros(shape, dtype=np.uint64)
        self.lo = np.zeros(shape, dtype=np.uint64)
        self.terms = 0

    def add_product(self, a: np.ndarray, b: np.ndarray) -> None:
        self.add_wide(*mul_wide(a, b))

    def add_wide(self, hi: np.ndarray, lo: np.ndarray) -> None:
        new_lo = self.lo + lo
        carry = (new_lo < self.lo).astype(np.uint64)
        self.hi = self.hi + hi + carry
        self.lo = new_lo
        self.terms += 1
        if self.terms >= WIDE_FOLD_INTERVAL:
            self.lo = self.reduce()
            self.hi = np.zeros_like(self.lo)
            self.terms = 1

    def reduce(self) -> np.ndarray:
        m = self.modulus
        high = barrett_mul(self.hi % m.u64, m.r64, m)
        return mod_add(high, self.lo % m.u64, m)


# --- epilogues ------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleSubtract:
    """``(minuend - x) * scalar`` on the transform output.

    Used by Rescale (scalar ``q_l^-1``) and ModDown (scalar ``P^-1``).
    """

    minuend: np.ndarray
    scalar: int

    def apply(self, x: np.ndarray, m: PrimeModulus, bound: int) -> np.ndarray:
        lazy = self.minuend + np.uint64(bound * m.value) - x
        w = np.uint64(self.scalar % m.value)
        wq = shoup_quotients(np.array([self.scalar % m.value], dtype=np.uint64), m)[0]
        return normalize_lazy(shoup_mul_lazy(lazy, w, wq, m), m)


@dataclass(frozen=True)
class KskMultiplyAccumulate:
    """Multiply the transform output by two key rows and add into wide sums."""

    ksk0: np.ndarray
    ksk1: np.ndarray
    acc0: WideAccumulator
    acc1: WideAccumulator

    def apply(self, x: np.ndarray, m: PrimeModulus, bound: int) -> np.ndarray:
        x = normalize_lazy(x, m, bound)
        self.acc0.add_product(x, self.ksk0)
        self.acc1.add_product(x, self.ksk1)
        return x


@dataclass(frozen=True)
class ScaleBy:
    """Inverse-transform epilogue multiplying by a constant, folded into N^-1."""

    scalar: int


ForwardEpilogue = Union[ScaleSubtract, KskMultiplyAccumulate]


def scale_subtract(x: np.ndarray, minuend: np.ndarray, scalar: int, m: PrimeModulus) -> np.ndarray:
    """Standalone ``(minuend - x) * scalar mod p`` for normalized ``x``."""
    return barrett_mul(mod_sub(minuend, x, m), np.uint64(scalar % m.value), m)


def ksk_multiply_accumulate(
    x: np.ndarray, ksk0: np.ndarray, ksk1: np.ndarray, acc0: WideAccumulator, acc1: WideAccumulator
) -> None:
    acc0.add_product(x, ksk0)
    acc1.add_product(x, ksk1)


# --- tables -----------------------------------------------------------------------

class NttTable:
    """Twiddles for one prime and ring degree, immutable once built."""

    def __init__(self, modulus: PrimeModulus, ring_degree: int, psi: Optional[int] = None):
        if not is_power_of_two(ring_degree) or ring_degree < 2:
            raise ParameterError(f"ring degree must be a power of two >= 2, got {ring_degree}")
        self.modulus = modulus
        self.ring_degree = ring_degree
        self.log_n = ring_degree.bit_length() - 1
        p = modulus.value
        self.psi = psi if psi is not None else find_primitive_root(ring_degree, modulus)
        if pow(self.psi, ring_degree, p) != p - 1:
            raise ParameterError(f"psi={self.psi} is not a primitive {2 * ring_degree}-th root mod {p}")
        self.psi_inv = mod_inv(self.psi, p)

        perm = bit_reverse_permutation(ring_degree)
        self.psi_powers = _powers(self.psi, ring_degree, modulus)[perm]
        self.psi_inv_powers = _powers(self.psi_inv, ring_degree, modulus)[perm]
        self.psi_shoup = shoup_quotients(self.psi_powers, modulus)
        self.psi_inv_shoup = shoup_quotients(self.psi_inv_powers, modulus)
        self.n_inv = mod_inv(ring_degree, p)
        for arr in (self.psi_powers, self.psi_inv_powers, self.psi_shoup, self.psi_inv_shoup):
            arr.setflags(write=False)

    def __repr__(self) -> str:
        return f"NttTable(p={self.modulus.value}, N={self.ring_degree})"

    def _check(self, limb: np.ndarray) -> np.ndarray:
        limb = np.asarray(limb, dtype=np.uint64)
        if limb.shape != (self.ring_degree,):
            raise LimbMismatchError(
                f"limb of shape {limb.shape} does not match NTT table of size {self.ring_degree}"
            )
        return limb

    @cached_property
    def hierarchical(self) -> "_HierarchicalTables":
        return _HierarchicalTables(self)


class _HierarchicalTables:
    """Four-step tables: N = N1 * N2 with N1 = 2^ceil(logN / 2)."""

    def __init__(self, table: NttTable):
        m = table.modulus
        p = m.value
        n = table.ring_degree
        self.n1 = 1 << ((table.log_n + 1) // 2)
        self.n2 = n // self.n1
        omega = table.psi * table.psi % p
        omega_inv = mod_inv(omega, p)
        self.forward = self._build(omega, m)
        self.inverse = self._build(omega_inv, m)
        self.pre_twist = _powers(table.psi, n, m)
        # psi^-j * N^-1, the ScaleBy constant is folded in per call
        self.post_twist = barrett_mul(_powers(table.psi_inv, n, m), np.uint64(table.n_inv), m)

    def _build(self, omega: int, m: PrimeModulus):
        p = m.value
        n1, n2 = self.n1, self.n2
        w1 = pow(omega, n2, p)
        w2 = pow(omega, n1, p)
        f1 = np.array([[pow(w1, j * k, p) for j in range(n1)] for k in range(n1)], dtype=np.uint64)
        f2 = np.array([[pow(w2, j * k, p) for k in range(n2)] for j in range(n2)], dtype=np.uint64)
        twiddle = np.array([[pow(omega, j2 * k1, p) for j2 in range(n2)] for k1 in range(n1)], dtype=np.uint64)
        return f1, twiddle, f2


def _mod_matmul(left: np.ndarray, right: np.ndarray, m: PrimeModulus) -> np.ndarray:
    """``left @ right mod p`` with 128-bit accumulation."""
    acc = WideAccumulator((left.shape[0], right.shape[1]), m)
    for j in range(left.shape[1]):
        acc.add_product(left[:, j:j + 1], right[j:j + 1, :])
    return acc.reduce()


def _cyclic_four_step(b: np.ndarray, tables, n1: int, n2: int, m: PrimeModulus) -> np.ndarray:
    """``A[k] = sum_j b_j omega^(jk)`` via N1 x N2 sub-transforms."""
    f1, twiddle, f2 = tables
    block = b.reshape(n1, n2)
    c = _mod_matmul(f1, block, m)
    c = barrett_mul(c, twiddle, m)
    d = _mod_matmul(c, f2, m)
    return np.ascontiguousarray(d.T).reshape(n1 * n2)


# --- transforms -------------------------------------------------------------------

def _forward_flat(a: np.ndarray, table: NttTable) -> np.ndarray:
    m = table.modulus
    n = table.ring_degree
    a = a.copy()
    t, k = n, 1
    while k < n:
        t //= 2
        view = a.reshape(k, 2, t)
        w = table.psi_powers[k:2 * k, None]
        wq = table.psi_shoup[k:2 * k, None]
        x = view[:, 0, :]
        x = np.where(x >= m.two_p, x - m.two_p, x)
        y = shoup_mul_lazy(view[:, 1, :], w, wq, m)
        view[:, 1, :] = x + m.two_p - y
        view[:, 0, :] = x + y
        k *= 2
    return a


def _inverse_flat(a: np.ndarray, table: NttTable, n_inv: int) -> np.ndarray:
    m = table.modulus
    n = table.ring_degree
    a = a.copy()
    t, k = 1, n
    while k > 1:
        h = k // 2
        view = a.reshape(h, 2, t)
        w = table.psi_inv_powers[h:2 * h, None]
        wq = table.psi_inv_shoup[h:2 * h, None]
        x = view[:, 0, :]
        y = view[:, 1, :]
        s = x + y
        view[:, 1, :] = shoup_mul_lazy(x + m.two_p - y, w, wq, m)
        view[:, 0, :] = np.where(s >= m.two_p, s - m.two_p, s)
        t *= 2
        k = h
    n_inv_arr = np.array([n_inv], dtype=np.uint64)
    a = shoup_mul_lazy(a, n_inv_arr, shoup_quotients(n_inv_arr, m), m)
    return normalize_lazy(a, m)


def _forward_hierarchical(a: np.ndarray, table: NttTable) -> np.ndarray:
    m = table.modulus
    ht = table.hierarchical
    b = barrett_mul(a % m.u64, ht.pre_twist, m)
    spectrum = _cyclic_four_step(b, ht.forward, ht.n1, ht.n2, m)
    return spectrum[bit_reverse_permutation(table.ring_degree)]


def _inverse_hierarchical(a: np.ndarray, table: NttTable, scale: int) -> np.ndarray:
    m = table.modulus
    ht = table.hierarchical
    spectrum = (a % m.u64)[bit_reverse_permutation(table.ring_degree)]
    b = _cyclic_four_step(spectrum, ht.inverse, ht.n1, ht.n2, m)
    out = barrett_mul(b, ht.post_twist, m)
    if scale != 1:
        out = barrett_mul(out, np.uint64(scale % m.value), m)
    return out


def _check_variant(variant: str) -> str:
    if variant not in NTT_VARIANTS:
        raise ParameterError(f"unknown NTT variant {variant!r}, expected one of {NTT_VARIANTS}")
    return variant


def forward_ntt(
    coeffs: np.ndarray,
    table: NttTable,
    epilogue: Optional[ForwardEpilogue] = None,
    variant: str = NTT_VARIANT_FLAT,
) -> np.ndarray:
    """Natural-order coefficients to bit-reversed evaluations, then ``epilogue``."""
    a = table._check(coeffs)
    if _check_variant(variant) == NTT_VARIANT_HIERARCHICAL:
        out, bound = _forward_hierarchical(a, table), 1
    else:
        out, bound = _forward_flat(a, table), 4
    if epilogue is None:
        return normalize_lazy(out, table.modulus, bound)
    if not isinstance(epilogue, (ScaleSubtract, KskMultiplyAccumulate)):
        raise ParameterError(f"unsupported forward epilogue {type(epilogue).__name__}")
    return epilogue.apply(out, table.modulus, bound)


def inverse_ntt(
    evals: np.ndarray,
    table: NttTable,
    epilogue: Optional[ScaleBy] = None,
    variant: str = NTT_VARIANT_FLAT,
) -> np.ndarray:
    """Bit-reversed evaluations to natural-order coefficients (N^-1 included)."""
    a = table._check(evals)
    scale = 1
    if epilogue is not None:
        if not isinstance(epilogue, ScaleBy):
            raise ParameterError(f"unsupported inverse epilogue {type(epilogue).__name__}")
        scale = epilogue.scalar % table.modulus.value
    if _check_variant(variant) == NTT_VARIANT_HIERARCHICAL:
        return _inverse_hierarchical(a, table, scale)
    n_inv = table.n_inv * scale % table.modulus.value
    return _inverse_flat(a, table, n_inv)


def negacyclic_convolve_reference(a: Sequence[int], b: Sequence[int], p: Union[int, PrimeModulus]) -> np.ndarray:
    """Schoolbook product mod (X^N + 1, p). Quadratic, for tests only."""
    if len(a) != len(b):
        raise LimbMismatchError(f"length mismatch: {len(a)} vs {len(b)}")
    value = p.value if isinstance(p, PrimeModulus) else int(p)
    n = len(a)
    out = [0] * n
    a_int = [int(v) for v in a]
    b_int = [int(v) for v in b]
    for i in range(n):
        if not a_int[i]:
            continue
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += a_int[i] * b_int[j]
            else:
                out[k - n] -= a_int[i] * b_int[j]
    return np.array([v % value for v in out], dtype=np.uint64)
