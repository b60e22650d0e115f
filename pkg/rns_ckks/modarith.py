"""Word-sized modular arithmetic: improved Barrett, Shoup and NTT-friendly primes.

Every function accepts either Python ints (scalar path, exact big-integer
emulation of the word algorithm) or ``numpy.uint64`` arrays (vector path).
Residues are always kept in ``[0, p)`` unless a function is explicitly lazy.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from .config import MAX_PRIME_BITS, MILLER_RABIN_WITNESSES
from .exceptions import ParameterError, PrimeSearchError
from .utils import is_power_of_two

logger = logging.getLogger(__name__)

Residue = Union[int, np.ndarray]

MASK64 = (1 << 64) - 1
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ZERO = np.uint64(0)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for 64-bit (and somewhat larger) integers."""
    if n < 2:
        return False
    for w in MILLER_RABIN_WITNESSES:
        if n % w == 0:
            return n == w
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for w in MILLER_RABIN_WITNESSES:
        x = pow(w, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class PrimeModulus:
    """An odd prime below 2^60 with its Barrett constant.

    ``barrett_factor`` is ``floor(2^(2k+1) / p)`` with ``k = bit_length``.
    """

    value: int
    bit_length: int = field(init=False)
    barrett_factor: int = field(init=False)
    u64: np.uint64 = field(init=False, repr=False, compare=False)
    two_p: np.uint64 = field(init=False, repr=False, compare=False)
    four_p: np.uint64 = field(init=False, repr=False, compare=False)
    # 2^64 mod p, folds the high word of a 128-bit accumulator
    r64: np.uint64 = field(init=False, repr=False, compare=False)
    mu_u64: np.uint64 = field(init=False, repr=False, compare=False)
    pre_shift: np.uint64 = field(init=False, repr=False, compare=False)
    post_shift: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        p = int(self.value)
        if p < 3 or p % 2 == 0 or p.bit_length() > MAX_PRIME_BITS:
            raise ParameterError(f"modulus must be an odd prime below 2^{MAX_PRIME_BITS}, got {p}")
        if not is_prime(p):
            raise ParameterError(f"modulus {p} is not prime")
        k = p.bit_length()
        setattr_ = object.__setattr__
        setattr_(self, "value", p)
        setattr_(self, "bit_length", k)
        setattr_(self, "barrett_factor", (1 << (2 * k + 1)) // p)
        setattr_(self, "u64", np.uint64(p))
        setattr_(self, "two_p", np.uint64(2 * p))
        setattr_(self, "four_p", np.uint64(4 * p))
        setattr_(self, "r64", np.uint64((1 << 64) % p))
        setattr_(self, "mu_u64", np.uint64(self.barrett_factor))
        setattr_(self, "pre_shift", np.uint64(k - 2))
        setattr_(self, "post_shift", k + 3)

    def __int__(self) -> int:
        return self.value

    def __str__(self) -> str:
        return f"{self.value} ({self.bit_length}-bit)"


@dataclass(frozen=True)
class ShoupConstant:
    """Operand ``w`` and ``floor(w * 2^64 / p)``."""

    operand: int
    quotient: int


def _value(p: Union[int, PrimeModulus]) -> int:
    return p.value if isinstance(p, PrimeModulus) else int(p)


def _modulus(p: Union[int, PrimeModulus]) -> PrimeModulus:
    return p if isinstance(p, PrimeModulus) else PrimeModulus(int(p))


def _lift(x) -> Tuple[np.ndarray, tuple]:
    arr = np.asarray(x, dtype=np.uint64)
    return np.atleast_1d(arr), arr.shape


def _restore(arr: np.ndarray, shape: tuple) -> np.ndarray:
    return arr.reshape(shape) if shape != arr.shape else arr


# --- 128-bit helpers --------------------------------------------------------

def mul_wide(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128-bit product as (hi, lo) uint64 arrays (at least 1-d)."""
    a = np.atleast_1d(np.asarray(a, dtype=np.uint64))
    b = np.atleast_1d(np.asarray(b, dtype=np.uint64))
    a0, a1 = a & _MASK32, a >> _SHIFT32
    b0, b1 = b & _MASK32, b >> _SHIFT32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _SHIFT32) + (p01 & _MASK32) + (p10 & _MASK32)
    lo = (p00 & _MASK32) | (mid << _SHIFT32)
    hi = p11 + (p01 >> _SHIFT32) + (p10 >> _SHIFT32) + (mid >> _SHIFT32)
    return hi, lo


def mul_hi(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return mul_wide(a, b)[0]


def shr128(hi: np.ndarray, lo: np.ndarray, shift: int) -> np.ndarray:
    """Low 64 bits of ``(hi:lo) >> shift``."""
    if shift == 0:
        return lo
    if shift < 64:
        return (lo >> np.uint64(shift)) | (hi << np.uint64(64 - shift))
    return hi >> np.uint64(shift - 64)


# --- reduction ----------------------------------------------------------------

def _barrett_int(x: int, m: PrimeModulus) -> int:
    a = x >> (m.bit_length - 2)
    q = (a * m.barrett_factor) >> m.post_shift
    r = (x - q * m.value) & MASK64
    return r - m.value if r >= m.value else r


def barrett_reduce_wide(hi: np.ndarray, lo: np.ndarray, m: PrimeModulus) -> np.ndarray:
    """Reduce 128-bit values ``hi:lo < p^2`` into ``[0, p)``."""
    a = shr128(hi, lo, m.bit_length - 2)
    qh, ql = mul_wide(a, m.mu_u64)
    q = shr128(qh, ql, m.post_shift)
    r = lo - q * m.u64
    return np.where(r >= m.u64, r - m.u64, r)


def barrett_reduce(x: Residue, p: Union[int, PrimeModulus]) -> Residue:
    """``x mod p`` for ``x < p^2`` by improved Barrett reduction.

    Array inputs are single 64-bit words; use :func:`barrett_reduce_wide`
    for 128-bit products.
    """
    m = _modulus(p)
    if isinstance(x, np.ndarray):
        lo, shape = _lift(x)
        return _restore(barrett_reduce_wide(np.zeros_like(lo), lo, m), shape)
    return _barrett_int(int(x), m)


def barrett_mul(a: Residue, b: Residue, p: Union[int, PrimeModulus]) -> Residue:
    m = _modulus(p)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        shape = np.broadcast(np.asarray(a), np.asarray(b)).shape
        hi, lo = mul_wide(a, b)
        return _restore(barrett_reduce_wide(hi, lo, m), shape)
    return _barrett_int(int(a) * int(b), m)


def shoup_precompute(operand: int, p: Union[int, PrimeModulus]) -> ShoupConstant:
    value = _value(p)
    operand = int(operand) % value
    return ShoupConstant(operand=operand, quotient=(operand << 64) // value)


def shoup_quotients(operands: np.ndarray, p: Union[int, PrimeModulus]) -> np.ndarray:
    """Vector form of :func:`shoup_precompute`, returns the quotient array."""
    value = _value(p)
    wide = np.asarray(operands, dtype=np.uint64).astype(object)
    return ((wide << 64) // value).astype(np.uint64)


def shoup_mul_lazy(a: np.ndarray, w: np.ndarray, w_quot: np.ndarray, m: PrimeModulus) -> np.ndarray:
    """``a * w mod p`` in ``[0, 2p)``; any ``a < 2^64`` is accepted."""
    q = mul_hi(a, w_quot)
    return a * w - q * m.u64


def shoup_mul(a: Residue, s: ShoupConstant, p: Union[int, PrimeModulus]) -> Residue:
    m = _modulus(p)
    if isinstance(a, np.ndarray):
        arr, shape = _lift(a)
        r = shoup_mul_lazy(arr, np.uint64(s.operand), np.uint64(s.quotient), m)
        return _restore(np.where(r >= m.u64, r - m.u64, r), shape)
    a = int(a)
    q = (a * s.quotient) >> 64
    r = (a * s.operand - q * m.value) & MASK64
    return r - m.value if r >= m.value else r


# --- elementwise ---------------------------------------------------------------

def mod_add(a: Residue, b: Residue, p: Union[int, PrimeModulus]) -> Residue:
    value = _value(p)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        pv = np.uint64(value)
        s = np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)
        return np.where(s >= pv, s - pv, s)
    s = int(a) + int(b)
    return s - value if s >= value else s


def mod_sub(a: Residue, b: Residue, p: Union[int, PrimeModulus]) -> Residue:
    value = _value(p)
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        pv = np.uint64(value)
        a_arr = np.asarray(a, dtype=np.uint64)
        b_arr = np.asarray(b, dtype=np.uint64)
        return np.where(a_arr >= b_arr, a_arr - b_arr, a_arr + (pv - b_arr))
    d = int(a) - int(b)
    return d + value if d < 0 else d


def mod_neg(a: Residue, p: Union[int, PrimeModulus]) -> Residue:
    value = _value(p)
    if isinstance(a, np.ndarray):
        pv = np.uint64(value)
        return np.where(a == _ZERO, a, pv - a)
    return (value - int(a)) % value


def normalize_lazy(x: np.ndarray, m: PrimeModulus, bound: int = 2) -> np.ndarray:
    """Bring values from ``[0, bound*p)`` (bound 2 or 4) back into ``[0, p)``."""
    if bound >= 4:
        x = np.where(x >= m.two_p, x - m.two_p, x)
    return np.where(x >= m.u64, x - m.u64, x)


def mod_pow(a: int, e: int, p: Union[int, PrimeModulus]) -> int:
    if e < 0:
        return pow(mod_inv(a, p), -e, _value(p))
    return pow(int(a), int(e), _value(p))


def mod_inv(a: int, p: Union[int, PrimeModulus]) -> int:
    value = _value(p)
    a = int(a) % value
    if a == 0:
        raise ParameterError(f"0 has no inverse modulo {value}")
    return pow(a, -1, value)


def to_residues(values, p: Union[int, PrimeModulus]) -> np.ndarray:
    """Signed Python/numpy integers to residues in ``[0, p)``."""
    value = _value(p)
    obj = np.asarray(values, dtype=object)
    return (obj % value).astype(np.uint64)


# --- prime chain -------------------------------------------------------------------

def _walk(start_k: int, step: int, direction: int, low: int, high: int, used: set):
    k = start_k
    while True:
        candidate = k * step + 1
        if candidate < low or candidate >= high:
            return
        if candidate not in used and is_prime(candidate):
            yield candidate
        k += direction


def generate_prime_chain(
    ring_degree: int,
    depth: int,
    delta_bits: int,
    extension_count: int,
    first_mod_bits: int = MAX_PRIME_BITS,
) -> List[PrimeModulus]:
    """NTT-friendly primes ``q_0..q_L`` followed by ``extension_count`` primes for P.

    Extension primes are the largest ``k*2N+1`` below 2^60, then ``q_0`` is the
    largest unused candidate below ``2^first_mod_bits``. ``q_1..q_L`` alternate
    below and above ``2^delta_bits`` so the rescale drift stays balanced.
    """
    if not is_power_of_two(ring_degree):
        raise ParameterError(f"ring degree must be a power of two, got {ring_degree}")
    if not 2 <= delta_bits <= MAX_PRIME_BITS:
        raise ParameterError(f"delta_bits must be in [2, {MAX_PRIME_BITS}], got {delta_bits}")
    if not delta_bits <= first_mod_bits <= MAX_PRIME_BITS:
        raise ParameterError(f"first_mod_bits must be in [{delta_bits}, {MAX_PRIME_BITS}], got {first_mod_bits}")
    if depth < 0 or extension_count < 0:
        raise ParameterError("depth and extension_count must be non-negative")

    step = 2 * ring_degree
    top = 1 << MAX_PRIME_BITS
    used: set = set()

    def take(source, count: int, what: str) -> List[int]:
        found = []
        for candidate in source:
            found.append(candidate)
            used.add(candidate)
            if len(found) == count:
                return found
        if len(found) < count:
            raise PrimeSearchError(
                f"only {len(found)} of {count} {what} primes = 1 mod {step} found (N={ring_degree})"
            )
        return found

    extension = take(_walk((top - 2) // step, step, -1, top >> 1, top, used), extension_count, "extension") \
        if extension_count else []

    first_top = 1 << first_mod_bits
    first = take(_walk((first_top - 2) // step, step, -1, first_top >> 1, first_top, used), 1, "q0")

    anchor = 1 << delta_bits
    low, high = anchor >> 1, min(anchor << 1, top)
    below = _walk((anchor - 2) // step, step, -1, low, high, used)
    above = _walk(anchor // step + 1, step, 1, low, high, used)
    chain: List[int] = []
    sources = [below, above]
    turn = 0
    while len(chain) < depth:
        candidate = next(sources[turn], None)
        if candidate is None:
            other = next(sources[1 - turn], None)
            if other is None:
                raise PrimeSearchError(
                    f"only {len(chain)} of {depth} primes near 2^{delta_bits} = 1 mod {step} found"
                )
            candidate = other
        else:
            turn = 1 - turn
        if candidate in used:
            continue
        used.add(candidate)
        chain.append(candidate)

    largest_chain = max([first[0]] + chain)
    if extension and min(extension) < largest_chain:
        raise PrimeSearchError("extension primes must not be smaller than the chain primes")

    logger.debug(
        "prime chain N=%d L=%d delta=%d K=%d: q0=%d bits, ext=%s",
        ring_degree, depth, delta_bits, extension_count, first[0].bit_length(),
        [p.bit_length() for p in extension],
    )
    return [PrimeModulus(p) for p in first + chain + extension]
