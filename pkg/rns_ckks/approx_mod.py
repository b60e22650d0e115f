"""
Homomorphic modular reduction by q0 through a scaled cosine.

Input slots hold ``y = x / K`` with ``x = m' + I`` for a small integer
``I``. A Chebyshev series approximates ``cos(2*pi*(K*y - 1/4) / 2^r)`` on
[-1, 1]; ``r`` double-angle steps turn that into ``sin(2*pi*x)``, which is
``2*pi*m'`` up to a cubic error for small ``m'``.
"""

import logging
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev as C

from .ciphertext import Ciphertext
from .client import EvaluationKeys
from .evaluator import (
    adjust_level,
    fused_weighted_sum,
    h_add,
    h_mult,
    h_square,
    h_sub,
    rescale,
    scalar_add,
    scalar_mult_int,
)
from .exceptions import BootstrapError, LevelError

logger = logging.getLogger(__name__)


def cosine_coefficients(k_range: float, double_angle: int, degree: int) -> np.ndarray:
    """Chebyshev coefficients of ``cos(2*pi*(k_range*y - 1/4) / 2^r)`` on [-1, 1]."""
    if degree < 1:
        raise BootstrapError(f"Chebyshev degree must be >= 1, got {degree}")
    divisor = 2.0 ** double_angle

    def target(y: np.ndarray) -> np.ndarray:
        return np.cos(2.0 * np.pi * (k_range * y - 0.25) / divisor)

    return C.chebinterpolate(target, degree)


def split_degree(degree: int) -> Tuple[int, int]:
    """Baby-step size ``k`` (a power of two) and giant count ``m`` with ``degree + 1 <= k * 2^m``."""
    total = max(1, math.ceil(math.log2(degree + 1)))
    k = 2 ** max(1, math.ceil(total / 2))
    m = max(0, math.ceil(math.log2((degree + 1) / k)))
    return k, m


def chebyshev_depth(degree: int) -> int:
    """Levels consumed by :func:`evaluate_chebyshev`: log2(k) + m + 1."""
    k, m = split_degree(degree)
    return int(math.log2(k)) + m + 1


def _double(ct: Ciphertext, keys: EvaluationKeys) -> Ciphertext:
    """``2*ct^2 - 1``."""
    return scalar_add(scalar_mult_int(rescale(h_square(ct, keys)), 2), -1.0)


def chebyshev_basis(ct: Ciphertext, k: int, m: int, keys: EvaluationKeys) -> Tuple[Dict[int, Ciphertext], List[Ciphertext]]:
    """Baby steps ``T_1..T_k`` and giant steps ``T_k, T_2k, ..., T_{k*2^(m-1)}``."""
    t: Dict[int, Ciphertext] = {1: ct}
    for i in range(2, k + 1):
        if i % 2 == 0:
            t[i] = _double(t[i // 2], keys)
        else:
            product = rescale(h_mult(t[i // 2], t[i // 2 + 1], keys))
            t[i] = h_sub(scalar_mult_int(product, 2), t[1])
    giants = [t[k]] if m else []
    while len(giants) < m:
        giants.append(_double(giants[-1], keys))
    return t, giants


def _leaf(coeffs: np.ndarray, babies: Sequence[Ciphertext]) -> Ciphertext:
    terms = max(len(coeffs) - 1, 1)
    weights = [float(c) for c in coeffs[1:]] or [0.0]
    out = rescale(fused_weighted_sum(list(babies[:terms]), weights[:terms]))
    return scalar_add(out, float(coeffs[0]))


def _paterson_stockmeyer(
    coeffs: np.ndarray, k: int, j: int, babies: Sequence[Ciphertext], giants: Sequence[Ciphertext],
    keys: EvaluationKeys,
) -> Ciphertext:
    coeffs = C.chebtrim(coeffs, tol=0) if len(coeffs) > 1 else coeffs
    degree = len(coeffs) - 1
    if j < 0 or degree < k:
        return _leaf(coeffs, babies)
    giant_degree = k * 2 ** j
    if degree < giant_degree:
        return _paterson_stockmeyer(coeffs, k, j - 1, babies, giants, keys)
    divisor = np.zeros(giant_degree + 1)
    divisor[-1] = 1.0
    quotient, remainder = C.chebdiv(coeffs, divisor)
    high = _paterson_stockmeyer(quotient, k, j - 1, babies, giants, keys)
    low = _paterson_stockmeyer(remainder, k, j - 1, babies, giants, keys)
    return h_add(rescale(h_mult(high, giants[j], keys)), low)


def evaluate_chebyshev(ct: Ciphertext, coeffs: Sequence[float], keys: EvaluationKeys) -> Ciphertext:
    """``sum_i coeffs[i] * T_i(ct)`` for slots in [-1, 1].

    Baby steps ``T_1..T_{k-1}`` are brought to one level so every leaf is a
    single fused weighted sum; giant steps multiply the quotients of
    Chebyshev division. The result sits exactly :func:`chebyshev_depth`
    levels below the input.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    degree = len(coeffs) - 1
    depth = chebyshev_depth(degree)
    if ct.level < depth:
        raise LevelError(f"Chebyshev degree {degree} needs {depth} levels, ciphertext has {ct.level}")
    k, m = split_degree(degree)
    t, giants = chebyshev_basis(ct, k, m, keys)
    floor = min(t[i].level for i in range(1, k))
    babies = [adjust_level(t[i], floor) for i in range(1, k)]
    out = _paterson_stockmeyer(coeffs, k, m - 1, babies, giants, keys)
    target = ct.level - depth
    return adjust_level(out, target) if out.level > target else out


def double_angle(ct: Ciphertext, iterations: int, keys: EvaluationKeys) -> Ciphertext:
    for _ in range(iterations):
        ct = _double(ct, keys)
    return ct


def approx_mod_depth(degree: int, iterations: int) -> int:
    return chebyshev_depth(degree) + iterations


def approx_mod_eval(ct: Ciphertext, coeffs: Sequence[float], iterations: int, keys: EvaluationKeys) -> Ciphertext:
    """``sin(2*pi*K*y)`` of every slot ``y``: Chebyshev cosine then ``iterations`` double angles."""
    out = double_angle(evaluate_chebyshev(ct, coeffs, keys), iterations, keys)
    logger.debug("ApproxModEval finished at level %d", out.level)
    return out
