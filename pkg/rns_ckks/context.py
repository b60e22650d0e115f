"""
Scheme context: one-time precomputation for a parameter set.

A Context owns the modulus chain, the extension primes, one NTT table per
prime, the fast-base-conversion tables used by ModUp/ModDown, per-level
scales and Galois permutations. It is immutable after creation; several
contexts may coexist.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from operator import mul
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .config import (
    ROTATION_GENERATOR,
    SECURITY_128_CLASSICAL,
    Parameters,
    RuntimeSettings,
    max_log_qp,
)
from .exceptions import ParameterError
from .modarith import PrimeModulus, generate_prime_chain, mod_inv
from .ntt import NttTable
from .utils import bit_reverse_permutation, chunked

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class ConversionTable:
    """Fast base conversion constants from ``source`` to ``target`` prime indices.

    ``q_hat_inv[i] = [(Q'/q_i)^-1]_{q_i}`` and ``q_hat_mod[i, j] = [Q'/q_i]_{p_j}``.
    """

    source: Tuple[int, ...]
    target: Tuple[int, ...]
    q_hat_inv: Tuple[int, ...]
    q_hat_mod: np.ndarray
    source_product: int
    # [Q']_{p_j}, the unit of the conversion overshoot
    source_product_mod: Tuple[int, ...]


class Context:
    """Precomputed tables for one parameter set. Build with :func:`create_context`."""

    def __init__(self, params: Parameters, primes: Sequence[PrimeModulus], runtime: Optional[RuntimeSettings] = None):
        self.params = params
        self.runtime = runtime or RuntimeSettings()
        self.ring_degree = params.ring_degree
        self.log_n = params.log_n
        self.depth = params.depth
        self.dnum = params.dnum
        self.alpha = params.alpha
        self.slot_count = params.slot_count
        self.ntt_variant = self.runtime.ntt_variant

        self.primes: Tuple[PrimeModulus, ...] = tuple(primes)
        if len(self.primes) != self.depth + 1 + params.extension_count:
            raise ParameterError(
                f"expected {self.depth + 1 + params.extension_count} primes, got {len(self.primes)}"
            )
        self.chain_indices: Tuple[int, ...] = tuple(range(self.depth + 1))
        self.extension_indices: Tuple[int, ...] = tuple(range(self.depth + 1, len(self.primes)))

        self.ntt_tables: Tuple[NttTable, ...] = tuple(NttTable(p, self.ring_degree) for p in self.primes)

        self.p_product = reduce(mul, (self.primes[i].value for i in self.extension_indices), 1)
        self.p_mod_q: Tuple[int, ...] = tuple(self.p_product % self.primes[i].value for i in self.chain_indices)
        self.p_inv_mod_q: Tuple[int, ...] = tuple(mod_inv(v, self.primes[i]) for i, v in enumerate(self.p_mod_q))
        # rescale_inverses[l][i] = [q_l^-1]_{q_i} for i < l
        self.rescale_inverses: Tuple[Tuple[int, ...], ...] = tuple(
            tuple(mod_inv(self.primes[level].value, self.primes[i]) for i in range(level))
            for level in self.chain_indices
        )

        scales = [0.0] * (self.depth + 1)
        scales[self.depth] = float(2 ** params.delta_bits)
        for level in range(self.depth, 0, -1):
            scales[level - 1] = scales[level] * scales[level] / self.primes[level].value
        self.scale_by_level: Tuple[float, ...] = tuple(scales)

        self._conversion_tables: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], ConversionTable] = {}
        self._eval_permutations: Dict[int, np.ndarray] = {}
        self._coeff_maps: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        for level in self.chain_indices:
            chain = self.level_indices(level)
            for digit in self.digit_bases(level):
                owned = tuple(digit)
                rest = tuple(i for i in chain if i not in owned) + self.extension_indices
                self.conversion_table(owned, rest)
            if self.extension_indices:
                self.conversion_table(self.extension_indices, chain)

        self._executor: Optional[ThreadPoolExecutor] = None
        if self.runtime.workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.runtime.workers, thread_name_prefix="ckks-limb")

    def __repr__(self) -> str:
        return f"Context({self.params.record()!r})"

    # --- moduli ---------------------------------------------------------------

    @property
    def chain_primes(self) -> Tuple[PrimeModulus, ...]:
        return self.primes[: self.depth + 1]

    @property
    def extension_primes(self) -> Tuple[PrimeModulus, ...]:
        return self.primes[self.depth + 1:]

    def level_indices(self, level: int) -> Tuple[int, ...]:
        return self.chain_indices[: level + 1]

    def level_product(self, level: int) -> int:
        """Q_level = q_0 * ... * q_level."""
        return reduce(mul, (self.primes[i].value for i in range(level + 1)), 1)

    def log_qp(self) -> float:
        return sum(math.log2(p.value) for p in self.primes)

    def record(self) -> str:
        return self.params.record()

    def fingerprint(self) -> str:
        return self.params.fingerprint()

    # --- key switching layout ---------------------------------------------------

    def digit_bases(self, level: int) -> List[range]:
        """Contiguous digits of ``alpha`` limbs covering limbs 0..level."""
        if not 0 <= level <= self.depth:
            raise ParameterError(f"level must be in [0, {self.depth}], got {level}")
        return [range(start, min(start + self.alpha, level + 1)) for start in range(0, level + 1, self.alpha)]

    def conversion_table(self, source: Sequence[int], target: Sequence[int]) -> ConversionTable:
        key = (tuple(source), tuple(target))
        table = self._conversion_tables.get(key)
        if table is None:
            table = self._build_conversion_table(*key)
            self._conversion_tables[key] = table
        return table

    def _build_conversion_table(self, source: Tuple[int, ...], target: Tuple[int, ...]) -> ConversionTable:
        overlap = set(source) & set(target)
        if overlap:
            raise ParameterError(f"source and target bases overlap on limbs {sorted(overlap)}")
        source_values = [self.primes[i].value for i in source]
        product = reduce(mul, source_values, 1)
        q_hat = [product // q for q in source_values]
        q_hat_inv = tuple(mod_inv(h, q) for h, q in zip(q_hat, source_values))
        q_hat_mod = np.array(
            [[h % self.primes[j].value for j in target] for h in q_hat], dtype=np.uint64
        ).reshape(len(source), len(target))
        return ConversionTable(
            source=source,
            target=target,
            q_hat_inv=q_hat_inv,
            q_hat_mod=q_hat_mod,
            source_product=product,
            source_product_mod=tuple(product % self.primes[j].value for j in target),
        )

    # --- Galois group -----------------------------------------------------------------

    def galois_element(self, steps: int) -> int:
        """Exponent ``5^steps mod 2N`` rotating slots left by ``steps``."""
        order = max(self.ring_degree // 2, 1)
        return pow(ROTATION_GENERATOR, steps % order, 2 * self.ring_degree)

    @property
    def conjugation_element(self) -> int:
        return 2 * self.ring_degree - 1

    def _check_galois(self, g: int) -> int:
        if g % 2 == 0 or not 0 < g < 2 * self.ring_degree:
            raise ParameterError(f"Galois exponent must be odd in [1, 2N), got {g}")
        return g

    def eval_permutation(self, g: int) -> np.ndarray:
        """``perm`` with ``out[k] = in[perm[k]]`` for X -> X^g on bit-reversed evaluations."""
        perm = self._eval_permutations.get(g)
        if perm is None:
            self._check_galois(g)
            n = self.ring_degree
            br = bit_reverse_permutation(n)
            exponents = ((2 * br.astype(np.int64) + 1) * g) % (2 * n)
            perm = br[(exponents - 1) // 2]
            perm.setflags(write=False)
            self._eval_permutations[g] = perm
        return perm

    def coeff_map(self, g: int) -> Tuple[np.ndarray, np.ndarray]:
        """Destination index and negation mask of each coefficient under X -> X^g."""
        entry = self._coeff_maps.get(g)
        if entry is None:
            self._check_galois(g)
            n = self.ring_degree
            t = (np.arange(n, dtype=np.int64) * g) % (2 * n)
            entry = (t % n, t >= n)
            self._coeff_maps[g] = entry
        return entry

    # --- limb-parallel execution ---------------------------------------------------------

    def map_limbs(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply ``fn`` to every item, ``limb_batch`` items per task, order preserved."""
        items = list(items)
        batches = chunked(items, self.runtime.limb_batch)
        if self._executor is None or len(batches) <= 1:
            return [fn(item) for item in items]
        futures = [self._executor.submit(lambda batch=batch: [fn(item) for item in batch]) for batch in batches]
        results: List[R] = []
        for future in futures:
            results.extend(future.result())
        return results

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "Context":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def create_context(params: Parameters, runtime: Optional[RuntimeSettings] = None) -> Context:
    """Validate ``params``, search the primes and build every table."""
    params.validate_params()
    if runtime is not None:
        runtime.validate_runtime()
    primes = generate_prime_chain(
        params.ring_degree,
        params.depth,
        params.delta_bits,
        params.extension_count,
        first_mod_bits=params.first_mod_bits,
    )
    ctx = Context(params, primes, runtime)

    largest_digit = max(
        reduce(mul, (ctx.primes[i].value for i in digit), 1) for digit in ctx.digit_bases(ctx.depth)
    )
    if ctx.p_product <= largest_digit:
        raise ParameterError("extension modulus P does not exceed the largest digit product")

    log_qp = ctx.log_qp()
    if params.security == SECURITY_128_CLASSICAL:
        bound = max_log_qp(params.ring_degree)
        if bound is None or log_qp > bound:
            raise ParameterError(
                f"log2(QP)={log_qp:.1f} exceeds the 128-bit classical bound {bound} for N={params.ring_degree}"
            )

    logger.info(
        "Context ready: N=%d L=%d delta=%d dnum=%d K=%d log2(QP)=%.1f",
        params.ring_degree, params.depth, params.delta_bits, params.dnum, params.extension_count, log_qp,
    )
    return ctx
