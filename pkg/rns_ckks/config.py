"""Configuration for the RNS-CKKS library: scheme parameters and runtime settings."""

import hashlib
import logging
import os
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from .exceptions import ParameterError

logger = logging.getLogger(__name__)


# Ring degree bounds (log2)
MIN_LOG_N = 1
MAX_LOG_N = 17

# Prime widths (bits). 60 keeps a+b and [0, 4p) butterfly values inside 64 bits.
MAX_PRIME_BITS = 60
DEFAULT_FIRST_MOD_BITS = 60

# Error distribution
DEFAULT_SIGMA = 3.19
GAUSSIAN_TAIL_SIGMAS = 6

# Deterministic Miller-Rabin witnesses, valid for every n < 3.3e24
MILLER_RABIN_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

# Slot group generator for rotations
ROTATION_GENERATOR = 5

# Security profiles
SECURITY_TOY = "toy"
SECURITY_128_CLASSICAL = "128-classical"
SECURITY_PROFILES = (SECURITY_TOY, SECURITY_128_CLASSICAL)

# Max log2(QP) for 128-bit classical security with a ternary secret
# (HomomorphicEncryption.org standard tables)
HE_STANDARD_MAX_LOG_QP: Dict[int, int] = {
    1024: 27,
    2048: 54,
    4096: 109,
    8192: 218,
    16384: 438,
    32768: 881,
    65536: 1747,
    131072: 3523,
}

# Relative scale tolerance under which two scales are treated as equal
SCALE_TOLERANCE = 2.0 ** -30

# Runtime defaults
DEFAULT_LIMB_BATCH = 0  # 0 = every limb in a single task
DEFAULT_WORKERS = 1
NTT_VARIANT_FLAT = "flat"
NTT_VARIANT_HIERARCHICAL = "hierarchical"
NTT_VARIANTS = (NTT_VARIANT_FLAT, NTT_VARIANT_HIERARCHICAL)

# Benchmark defaults
DEFAULT_BENCH_ITERATIONS = 20
MIN_BENCH_ITERATIONS = 1

# Bootstrap defaults (ApproxModEval)
DEFAULT_BOOT_K_RANGE = 16.0
DEFAULT_BOOT_DOUBLE_ANGLE = 3
DEFAULT_BOOT_CHEB_DEGREE = 31
DEFAULT_BOOT_HAMMING_WEIGHT = 64

# Slots -> levels remaining after bootstrapping at the large preset [2^16, 29, 59, 4]
BOOTSTRAP_LEVEL_TARGETS: Dict[int, int] = {
    64: 13,
    512: 11,
    16384: 9,
    32768: 9,
}

RECORD_PREFIX = "ckks-rns/1"


class Parameters(BaseModel):
    """
    CKKS scheme parameters ``[log N, L, log Δ, dnum]`` plus secondary knobs.

    ``depth`` is L, so the modulus chain has L+1 primes q_0..q_L. Hybrid key
    switching groups them into digits of ``alpha = ⌈(L+1)/dnum⌉`` primes and
    adds ``extension_count`` (= alpha) special primes whose product is P.
    """

    model_config = ConfigDict(frozen=True)

    log_n: int = Field(..., description="log2 of the ring degree N")
    depth: int = Field(..., description="Multiplicative depth L (chain has L+1 primes)")
    delta_bits: int = Field(..., description="log2 of the scaling factor Δ")
    dnum: int = Field(..., description="Number of key-switching digits")
    slots: Optional[int] = Field(None, description="Slot count n (defaults to N/2)")
    security: str = Field(SECURITY_TOY, description="Security profile: toy | 128-classical")
    first_mod_bits: int = Field(DEFAULT_FIRST_MOD_BITS, description="Bit width of q_0")
    hamming_weight: Optional[int] = Field(None, description="Sparse ternary secret weight (None = dense)")
    sigma: float = Field(DEFAULT_SIGMA, description="Standard deviation of the error distribution")

    @property
    def ring_degree(self) -> int:
        return 1 << self.log_n

    @property
    def slot_count(self) -> int:
        return self.slots if self.slots is not None else self.ring_degree // 2

    @property
    def alpha(self) -> int:
        """Number of chain primes per key-switching digit."""
        return -(-(self.depth + 1) // self.dnum)

    @property
    def extension_count(self) -> int:
        """K, the number of extension primes making up P."""
        return self.alpha

    def validate_params(self) -> None:
        """
        Validate the parameter set.

        Raises ``ParameterError`` with a message naming the offending field.
        Security bounds on log QP are checked at context creation, once the
        primes are known.
        """
        if not MIN_LOG_N <= self.log_n <= MAX_LOG_N:
            raise ParameterError(f"log_n must be in [{MIN_LOG_N}, {MAX_LOG_N}], got {self.log_n}")
        if self.depth < 0:
            raise ParameterError(f"depth must be non-negative, got {self.depth}")
        if not 1 <= self.dnum <= self.depth + 1:
            raise ParameterError(f"dnum must be in [1, L+1={self.depth + 1}], got {self.dnum}")
        if not 2 <= self.delta_bits <= MAX_PRIME_BITS:
            raise ParameterError(f"delta_bits must be in [2, {MAX_PRIME_BITS}], got {self.delta_bits}")
        if not self.delta_bits <= self.first_mod_bits <= MAX_PRIME_BITS:
            raise ParameterError(
                f"first_mod_bits must be in [delta_bits, {MAX_PRIME_BITS}], got {self.first_mod_bits}"
            )
        n = self.slot_count
        if n < 1 or n & (n - 1) or n > self.ring_degree // 2:
            raise ParameterError(f"slots must be a power of two <= N/2, got {n}")
        if self.security not in SECURITY_PROFILES:
            raise ParameterError(f"security must be one of {SECURITY_PROFILES}, got {self.security!r}")
        if self.hamming_weight is not None and not 0 < self.hamming_weight <= self.ring_degree:
            raise ParameterError(f"hamming_weight must be in (0, N], got {self.hamming_weight}")
        if self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")

    def as_list(self) -> List[int]:
        """Return the ``[log N, L, Δ bits, dnum]`` quadruple used in reports."""
        return [self.log_n, self.depth, self.delta_bits, self.dnum]

    def record(self) -> str:
        """Self-describing one-line text record (used in serialized headers)."""
        return (
            f"{RECORD_PREFIX} logn={self.log_n} depth={self.depth} delta={self.delta_bits} "
            f"dnum={self.dnum} slots={self.slot_count} security={self.security} "
            f"q0bits={self.first_mod_bits} h={self.hamming_weight or 0} sigma={self.sigma!r}"
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.record().encode("ascii")).hexdigest()[:16]

    @classmethod
    def from_record(cls, record: str) -> "Parameters":
        parts = record.strip().split()
        if not parts or parts[0] != RECORD_PREFIX:
            raise ParameterError(f"not a parameter record: {record!r}")
        try:
            kv = dict(p.split("=", 1) for p in parts[1:])
            return cls(
                log_n=int(kv["logn"]),
                depth=int(kv["depth"]),
                delta_bits=int(kv["delta"]),
                dnum=int(kv["dnum"]),
                slots=int(kv["slots"]),
                security=kv["security"],
                first_mod_bits=int(kv["q0bits"]),
                hamming_weight=int(kv["h"]) or None,
                sigma=float(kv["sigma"]),
            )
        except (KeyError, ValueError) as exc:
            raise ParameterError(f"malformed parameter record {record!r}: {exc}") from exc

    @classmethod
    def from_list(cls, values: List[int], **extra) -> "Parameters":
        """Build from ``[log N, L, Δ bits, dnum]``."""
        log_n, depth, delta_bits, dnum = values
        return cls(log_n=log_n, depth=depth, delta_bits=delta_bits, dnum=dnum, **extra)


PRESETS: Dict[str, Parameters] = {
    "toy": Parameters(log_n=13, depth=6, delta_bits=40, dnum=2),
    "mid": Parameters(log_n=14, depth=13, delta_bits=40, dnum=3),
    "boot-test": Parameters(log_n=11, depth=15, delta_bits=50, dnum=4,
                            hamming_weight=DEFAULT_BOOT_HAMMING_WEIGHT),
    "desk-boot": Parameters(log_n=14, depth=22, delta_bits=50, dnum=4,
                            hamming_weight=DEFAULT_BOOT_HAMMING_WEIGHT),
    "large": Parameters(log_n=16, depth=29, delta_bits=59, dnum=4,
                        hamming_weight=DEFAULT_BOOT_HAMMING_WEIGHT),
    "large-lr": Parameters(log_n=16, depth=26, delta_bits=59, dnum=4,
                           hamming_weight=DEFAULT_BOOT_HAMMING_WEIGHT),
}


def max_log_qp(ring_degree: int) -> Optional[int]:
    """Largest log2(QP) allowed by the 128-bit classical profile, or None if unknown."""
    return HE_STANDARD_MAX_LOG_QP.get(ring_degree)


class BootstrapConfig(BaseModel):
    """
    Bootstrapping configuration.

    ``cts_levels`` / ``stc_levels`` are the number of sparse DFT stages (one
    level each). The ApproxModEval polynomial approximates
    cos(2π(y - 1/4) / 2^r) on [-k_range, k_range] with a Chebyshev series of
    ``cheb_degree`` and is followed by ``double_angle`` squarings.
    """

    model_config = ConfigDict(frozen=True)

    slots: int = Field(..., description="Slot count n of the ciphertexts to refresh")
    cts_levels: int = Field(3, description="CoeffToSlot stages")
    stc_levels: int = Field(3, description="SlotToCoeff stages")
    k_range: float = Field(DEFAULT_BOOT_K_RANGE, description="Approximation half-range in units of q_0")
    double_angle: int = Field(DEFAULT_BOOT_DOUBLE_ANGLE, description="Double-angle iterations r")
    cheb_degree: int = Field(DEFAULT_BOOT_CHEB_DEGREE, description="Chebyshev degree")

    @property
    def log_slots(self) -> int:
        return self.slots.bit_length() - 1


class RuntimeSettings(BaseModel):
    """Process-wide runtime settings, normally loaded from the environment."""

    log_level: str = Field("INFO", description="Root logging level")
    limb_batch: int = Field(DEFAULT_LIMB_BATCH, description="Limbs per parallel task (0 = all)")
    workers: int = Field(DEFAULT_WORKERS, description="Thread-pool width for limb tasks")
    ntt_variant: str = Field(NTT_VARIANT_FLAT, description="flat | hierarchical")
    seed: Optional[int] = Field(None, description="Default RNG seed")
    output_dir: str = Field(".", description="Default directory for CLI reports")

    def validate_runtime(self) -> None:
        if self.limb_batch < 0:
            raise ParameterError("CKKS_LIMB_BATCH must be >= 0")
        if self.workers < 1:
            raise ParameterError("CKKS_WORKERS must be >= 1")
        if self.ntt_variant not in NTT_VARIANTS:
            raise ParameterError(
                f"CKKS_NTT_VARIANT must be one of {NTT_VARIANTS}, got {self.ntt_variant!r}"
            )

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        """Create settings from environment variables."""

        def _int(name: str, default: int) -> int:
            raw = os.getenv(name)
            if not raw:
                return default
            try:
                return int(raw)
            except ValueError:
                logger.warning("Ignoring non-integer %s=%r", name, raw)
                return default

        seed_raw = os.getenv("CKKS_SEED")
        return cls(
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
            limb_batch=_int("CKKS_LIMB_BATCH", DEFAULT_LIMB_BATCH),
            workers=_int("CKKS_WORKERS", DEFAULT_WORKERS),
            ntt_variant=os.getenv("CKKS_NTT_VARIANT", NTT_VARIANT_FLAT),
            seed=int(seed_raw) if seed_raw and seed_raw.lstrip("-").isdigit() else None,
            output_dir=os.getenv("CKKS_OUTPUT_DIR", "."),
        )
