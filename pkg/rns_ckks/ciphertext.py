"""Plaintext and ciphertext containers."""

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .exceptions import FormatMismatchError, LimbMismatchError, ParameterError
from .rns_poly import RnsPolynomial

# Default for with_parts: keep the current noise estimate
_KEEP = object()


@dataclass
class Plaintext:
    """An encoded message: one polynomial with its scale and slot count."""

    poly: RnsPolynomial
    scale: float
    slot_count: int

    @property
    def level(self) -> int:
        return self.poly.level

    @property
    def ctx(self):
        return self.poly.ctx


@dataclass
class Ciphertext:
    """``(c0, c1)`` with ``c0 + c1*s ≈ scale * m``; both polynomials in EVAL form.

    ``noise_estimate`` is advisory (log2 of an additive error bound) and never
    changes behavior.
    """

    c0: RnsPolynomial
    c1: RnsPolynomial
    scale: float
    slot_count: int
    noise_estimate: Optional[float] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.c0.indices != self.c1.indices:
            raise LimbMismatchError(f"ciphertext parts differ in limbs: {self.c0.indices} vs {self.c1.indices}")
        if self.c0.format != self.c1.format:
            raise FormatMismatchError("ciphertext parts must share a format")
        if not self.scale > 0:
            raise ParameterError(f"scale must be positive, got {self.scale}")

    @property
    def level(self) -> int:
        return self.c0.level

    @property
    def ctx(self):
        return self.c0.ctx

    def copy(self) -> "Ciphertext":
        return replace(self, c0=self.c0.copy(), c1=self.c1.copy())

    def with_parts(self, c0: RnsPolynomial, c1: RnsPolynomial, scale: Optional[float] = None,
                   noise_estimate: Union[Optional[float], object] = _KEEP) -> "Ciphertext":
        """Same metadata with new parts; pass ``noise_estimate=None`` to clear the estimate."""
        return Ciphertext(
            c0, c1,
            scale=self.scale if scale is None else scale,
            slot_count=self.slot_count,
            noise_estimate=self.noise_estimate if noise_estimate is _KEEP else noise_estimate,
        )
