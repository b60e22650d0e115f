"""
Slot-space linear maps in diagonal form, applied with baby-step/giant-step.

A map on n slots is stored as ``{offset: diagonal}`` with
``out = sum_k diag_k * rot(x, k)``, where ``rot(x, k)[i] = x[(i + k) mod n]``.
The encoder's FFT factors into log2(n) butterfly layers with three
diagonals each; bootstrapping groups consecutive layers into stages that
consume one level apiece.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .ciphertext import Ciphertext, Plaintext
from .client import EvaluationKeys
from .config import SCALE_TOLERANCE
from .context import Context
from .encoding import encode, stage_twiddles
from .evaluator import constant_scale_for, fused_weighted_sum, h_add, h_rotate, hoisted_rotations, rescale
from .exceptions import BootstrapError, LevelError
from .utils import is_power_of_two

logger = logging.getLogger(__name__)

Diagonals = Dict[int, np.ndarray]


# --- diagonal algebra ------------------------------------------------------------------

def _accumulate(diags: Diagonals, offset: int, values: np.ndarray) -> None:
    if not np.any(values):
        return
    if offset in diags:
        diags[offset] = diags[offset] + values
    else:
        diags[offset] = values.astype(np.complex128)


def butterfly_layer(ring_degree: int, slots: int, length: int, inverse: bool) -> Diagonals:
    """One radix-2 layer of the encoder FFT (``inverse`` for the encoding direction)."""
    n = slots
    half = length // 2
    twiddles = stage_twiddles(ring_degree, length, inverse)
    pos = np.arange(n) % length
    first = pos < half
    tw = twiddles[np.where(first, pos, pos - half)]
    one = np.ones(n, dtype=np.complex128)
    zero = np.zeros(n, dtype=np.complex128)
    diags: Diagonals = {}
    if inverse:
        _accumulate(diags, 0, np.where(first, one, -tw))
        _accumulate(diags, half % n, np.where(first, one, zero))
        _accumulate(diags, (-half) % n, np.where(first, zero, tw))
    else:
        _accumulate(diags, 0, np.where(first, one, -tw))
        _accumulate(diags, half % n, np.where(first, tw, zero))
        _accumulate(diags, (-half) % n, np.where(first, zero, one))
    return diags


def compose(first: Diagonals, second: Diagonals, slots: int) -> Diagonals:
    """Diagonals of ``second ∘ first``."""
    out: Diagonals = {}
    for b, db in second.items():
        for a, da in first.items():
            _accumulate(out, (a + b) % slots, db * np.roll(da, -b))
    return out


def apply_diagonals(diags: Diagonals, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.complex128)
    out = np.zeros_like(values)
    for k, d in diags.items():
        out += d * np.roll(values, -k)
    return out


def dense_matrix(diags: Diagonals, slots: int) -> np.ndarray:
    """Dense n x n form; small slot counts only."""
    return np.stack([apply_diagonals(diags, e) for e in np.eye(slots, dtype=np.complex128)], axis=1)


def _split(items: Sequence, parts: int) -> List[Sequence]:
    size, extra = divmod(len(items), parts)
    out, start = [], 0
    for i in range(parts):
        end = start + size + (1 if i < extra else 0)
        out.append(items[start:end])
        start = end
    return out


# --- stages --------------------------------------------------------------------------------------

@dataclass
class BsgsPlan:
    """``out = sum_g rot(sum_j pre_{g,j} * rot(x, step*j), step*g)``."""

    step: int
    baby_count: int
    # giant (in steps) -> [(baby in steps, diagonal offset)]
    groups: Dict[int, List[Tuple[int, int]]]

    def baby_rotations(self, slots: int) -> List[int]:
        return sorted({(self.step * j) % slots for terms in self.groups.values() for j, _ in terms})

    def giant_rotations(self, slots: int) -> List[int]:
        return sorted({(self.step * g) % slots for g in self.groups})


def plan_bsgs(offsets: Iterable[int], slots: int) -> BsgsPlan:
    """Split every offset into baby + giant, choosing the baby count with fewest rotations."""
    offsets = sorted(set(offsets))
    nonzero = [k for k in offsets if k]
    step = reduce(math.gcd, nonzero, slots) if nonzero else slots
    signed = {k: (k if k <= slots // 2 else k - slots) // step for k in offsets}
    span = max((abs(v) for v in signed.values()), default=0) + 1

    best: Optional[Tuple[int, int, Dict[int, List[Tuple[int, int]]]]] = None
    baby_count = 1
    while baby_count <= max(2 * span, 1):
        groups: Dict[int, List[Tuple[int, int]]] = {}
        for k, v in signed.items():
            j = v % baby_count
            groups.setdefault(v - j, []).append((j, k))
        babies = {j for terms in groups.values() for j, _ in terms if (j * step) % slots}
        giants = {g for g in groups if (g * step) % slots}
        cost = len(babies) + len(giants)
        if best is None or cost < best[0]:
            best = (cost, baby_count, groups)
        baby_count *= 2
    _, baby_count, groups = best
    return BsgsPlan(step=step, baby_count=baby_count, groups={g: sorted(t) for g, t in sorted(groups.items())})


@dataclass
class LinearTransformStage:
    """One stage: diagonals, its BSGS plan and the (level, input scale) it is scheduled at.

    Plaintext diagonals are encoded on first use and cached per (level, scale).
    """

    slots: int
    diagonals: Diagonals
    level: Optional[int] = None
    input_scale: Optional[float] = None
    plan: BsgsPlan = field(init=False)
    _encoded: Dict[Tuple[int, int, int, float], Plaintext] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.diagonals:
            raise BootstrapError("a linear transform stage needs at least one diagonal")
        self.plan = plan_bsgs(self.diagonals, self.slots)

    def apply_cleartext(self, values: np.ndarray) -> np.ndarray:
        return apply_diagonals(self.diagonals, values)

    def rotations(self) -> List[int]:
        used = set(self.plan.baby_rotations(self.slots)) | set(self.plan.giant_rotations(self.slots))
        return sorted(used - {0})

    def pre_rotated(self, giant: int, offset: int) -> np.ndarray:
        return np.roll(self.diagonals[offset], self.plan.step * giant)

    def plaintext(self, ctx: Context, giant: int, offset: int, level: int, scale: float) -> Plaintext:
        key = (giant, offset, level, scale)
        pt = self._encoded.get(key)
        if pt is None:
            pt = encode(ctx, self.pre_rotated(giant, offset), level=level, scale=scale, slot_count=self.slots)
            self._encoded[key] = pt
        return pt

    def weight_scale(self, ctx: Context) -> float:
        """Scale the diagonals are encoded at for the scheduled input."""
        if self.level is None or self.input_scale is None:
            raise BootstrapError("stage has no scheduled level")
        return ctx.scale_by_level[self.level - 1] * ctx.primes[self.level].value / self.input_scale

    def materialize(self, ctx: Context) -> int:
        """Encode every diagonal at the scheduled level; returns the plaintext count."""
        scale = self.weight_scale(ctx)
        for g, terms in self.plan.groups.items():
            for _, offset in terms:
                self.plaintext(ctx, g, offset, self.level, scale)
        return len(self._encoded)

    def encoded_plaintexts(self) -> List[Tuple[Tuple[int, int, int, float], Plaintext]]:
        """Cached ``((giant, offset, level, scale), plaintext)`` pairs in insertion order."""
        return list(self._encoded.items())

    def preload(self, giant: int, offset: int, level: int, scale: float, pt: Plaintext) -> None:
        if offset not in self.diagonals:
            raise BootstrapError(f"stage has no diagonal at offset {offset}")
        self._encoded[(giant, offset, level, scale)] = pt


def fft_stages(ring_degree: int, slots: int, stages: int, inverse: bool, constant: complex = 1.0) -> List[Diagonals]:
    """The encoder FFT without its bit reversal, grouped into ``stages`` diagonal maps.

    ``inverse`` gives the encoding direction (including 1/n), ordered
    length n down to 2; otherwise the decoding direction, length 2 up to n.
    ``constant`` is folded into the first stage.
    """
    if not is_power_of_two(slots) or slots < 2:
        raise BootstrapError(f"slot count must be a power of two >= 2, got {slots}")
    log_n = slots.bit_length() - 1
    lengths = [slots >> i for i in range(log_n)] if inverse else [2 << i for i in range(log_n)]
    layers = [butterfly_layer(ring_degree, slots, length, inverse) for length in lengths]
    groups = _split(layers, max(1, min(stages, log_n)))
    out = [reduce(lambda acc, layer: compose(acc, layer, slots), group[1:], group[0]) for group in groups]
    factor = complex(constant) / slots if inverse else complex(constant)
    out[0] = {k: d * factor for k, d in out[0].items()}
    return out


# --- homomorphic application -------------------------------------------------------------------------

def apply_stage(
    ct: Ciphertext, stage: LinearTransformStage, keys: EvaluationKeys, hoisted: bool = True
) -> Ciphertext:
    """One BSGS matrix-vector product followed by a rescale."""
    if ct.slot_count != stage.slots:
        raise BootstrapError(f"stage built for {stage.slots} slots, ciphertext has {ct.slot_count}")
    if ct.level < 1:
        raise LevelError("linear transform needs a level to consume")
    ctx = ct.ctx
    n = stage.slots
    plan = stage.plan
    weight_scale = constant_scale_for(ct)
    if stage.level == ct.level and stage.input_scale is not None and math.isclose(
        ct.scale, stage.input_scale, rel_tol=SCALE_TOLERANCE
    ):
        # land on the scheduled scale so cached diagonals are reused
        weight_scale = stage.weight_scale(ctx)

    babies = sorted({j for terms in plan.groups.values() for j, _ in terms})
    steps = [(plan.step * j) % n for j in babies]
    if hoisted:
        rotated = dict(zip(babies, hoisted_rotations(ct, steps, keys)))
    else:
        rotated = {j: h_rotate(ct, s, keys) for j, s in zip(babies, steps)}

    total = None
    for g, terms in plan.groups.items():
        cts = [rotated[j] for j, _ in terms]
        pts = [stage.plaintext(ctx, g, offset, ct.level, weight_scale) for _, offset in terms]
        inner = fused_weighted_sum(cts, pts)
        inner = h_rotate(inner, (plan.step * g) % n, keys)
        total = inner if total is None else h_add(total, inner)
    return rescale(total)


def homomorphic_linear_transform(
    ct: Ciphertext, stages: Sequence[LinearTransformStage], keys: EvaluationKeys, hoisted: bool = True
) -> Ciphertext:
    """Apply ``stages`` in order, one level each."""
    for index, stage in enumerate(stages):
        ct = apply_stage(ct, stage, keys, hoisted)
        logger.debug("Linear transform stage %d/%d done at level %d", index + 1, len(stages), ct.level)
    return ct
