"""Canonical-embedding encoder.

Slot ``j`` of an n-slot message is its value at ``zeta^(5^j)`` with
``zeta = exp(i*pi/N)``. Sparse messages (n < N/2) occupy every
``gap = N/(2n)``-th coefficient, real parts in the lower half of the
coefficient vector and imaginary parts in the upper half.
"""

import logging
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .ciphertext import Plaintext
from .config import ROTATION_GENERATOR
from .context import Context
from .exceptions import EncodingError
from .rns_poly import Format, RnsPolynomial, crt_reconstruct
from .utils import bit_reverse_permutation, is_power_of_two

logger = logging.getLogger(__name__)

# Coefficients at or above this magnitude are carried as Python ints
_INT64_SAFE = float(2 ** 62)


@lru_cache(maxsize=16)
def _rotation_group(ring_degree: int) -> np.ndarray:
    m = 2 * ring_degree
    half = max(ring_degree // 2, 1)
    group = np.empty(half, dtype=np.int64)
    value = 1
    for j in range(half):
        group[j] = value
        value = value * ROTATION_GENERATOR % m
    return group


@lru_cache(maxsize=16)
def _ksi_powers(ring_degree: int) -> np.ndarray:
    m = 2 * ring_degree
    return np.exp(2j * np.pi * np.arange(m + 1) / m)


def stage_twiddles(ring_degree: int, length: int, inverse: bool) -> np.ndarray:
    m = 2 * ring_degree
    lenh, lenq = length // 2, length * 4
    rot = _rotation_group(ring_degree)[:lenh] % lenq
    if inverse:
        rot = lenq - rot
    return _ksi_powers(ring_degree)[rot * m // lenq]


def special_fft(values: np.ndarray, ring_degree: int) -> np.ndarray:
    """Evaluate packed coefficients at the slot roots (decoding direction)."""
    n = len(values)
    vals = np.asarray(values, dtype=np.complex128)[bit_reverse_permutation(n)]
    length = 2
    while length <= n:
        lenh = length // 2
        w = stage_twiddles(ring_degree, length, inverse=False)
        view = vals.reshape(n // length, length)
        u = view[:, :lenh].copy()
        v = view[:, lenh:] * w
        view[:, :lenh] = u + v
        view[:, lenh:] = u - v
        length *= 2
    return vals


def special_fft_inv(values: np.ndarray, ring_degree: int) -> np.ndarray:
    """Inverse of :func:`special_fft` (encoding direction)."""
    n = len(values)
    vals = np.array(values, dtype=np.complex128)
    length = n
    while length >= 2:
        lenh = length // 2
        w = stage_twiddles(ring_degree, length, inverse=True)
        view = vals.reshape(n // length, length)
        u = view[:, :lenh] + view[:, lenh:]
        v = (view[:, :lenh] - view[:, lenh:]) * w
        view[:, :lenh] = u
        view[:, lenh:] = v
        length //= 2
    return vals[bit_reverse_permutation(n)] / n


def _slot_positions(ring_degree: int, slot_count: int) -> np.ndarray:
    gap = ring_degree // (2 * slot_count)
    base = np.arange(slot_count, dtype=np.int64) * gap
    return np.concatenate([base, base + ring_degree // 2])


def _round_coefficients(real: np.ndarray) -> Union[np.ndarray, list]:
    rounded = np.rint(real)
    if not rounded.size or np.max(np.abs(rounded)) < _INT64_SAFE:
        return rounded.astype(np.int64)
    return [int(v) for v in rounded]


def encode(
    ctx: Context,
    values: Union[Sequence[complex], np.ndarray],
    level: Optional[int] = None,
    scale: Optional[float] = None,
    slot_count: Optional[int] = None,
) -> Plaintext:
    """Encode up to ``slot_count`` complex values at ``level`` and ``scale``.

    ``level`` defaults to L and ``scale`` to the canonical scale of that level.
    """
    level = ctx.depth if level is None else level
    if not 0 <= level <= ctx.depth:
        raise EncodingError(f"level must be in [0, {ctx.depth}], got {level}")
    scale = ctx.scale_by_level[level] if scale is None else float(scale)
    vals = np.atleast_1d(np.asarray(values, dtype=np.complex128))
    n = slot_count or len(vals)
    if not is_power_of_two(n) or n > ctx.ring_degree // 2:
        raise EncodingError(f"slot count must be a power of two <= N/2, got {n}")
    if len(vals) > n:
        raise EncodingError(f"{len(vals)} values do not fit in {n} slots")
    if len(vals) < n:
        vals = np.concatenate([vals, np.zeros(n - len(vals), dtype=np.complex128)])

    packed = special_fft_inv(vals, ctx.ring_degree)
    coeffs = np.zeros(ctx.ring_degree, dtype=np.float64)
    positions = _slot_positions(ctx.ring_degree, n)
    coeffs[positions[:n]] = packed.real * scale
    coeffs[positions[n:]] = packed.imag * scale

    bound = ctx.level_product(level) // 2
    peak = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if peak >= float(bound):
        raise EncodingError(
            f"encoded coefficient 2^{np.log2(peak):.1f} overflows the level-{level} modulus"
        )
    poly = RnsPolynomial.from_integers(ctx, _round_coefficients(coeffs), ctx.level_indices(level), Format.EVAL)
    return Plaintext(poly=poly, scale=scale, slot_count=n)


def decode(pt: Plaintext) -> np.ndarray:
    """Slots of ``pt`` as a complex vector (CRT-reconstructs the signed coefficients)."""
    ctx = pt.ctx
    n = pt.slot_count
    positions = _slot_positions(ctx.ring_degree, n)
    ints = crt_reconstruct(pt.poly, positions=positions)
    floats = np.array([float(v) for v in ints], dtype=np.float64) / pt.scale
    return special_fft(floats[:n] + 1j * floats[n:], ctx.ring_degree)
