"""
Client-side operations: key generation, encryption and decryption.

All randomness comes from a ``numpy.random.Generator``; a fixed seed gives
bit-identical keys and ciphertexts.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .ciphertext import Ciphertext, Plaintext
from .config import GAUSSIAN_TAIL_SIGMAS
from .context import Context
from .exceptions import KeyMissingError, LevelError
from .modarith import barrett_mul, mod_add
from .rns_poly import Format, Limb, RnsPolynomial, automorphism

logger = logging.getLogger(__name__)


# --- samplers ------------------------------------------------------------------

def sample_ternary(rng: np.random.Generator, ring_degree: int, hamming_weight: Optional[int] = None) -> np.ndarray:
    """Uniform ternary polynomial, or exactly ``hamming_weight`` nonzero ±1 entries."""
    if hamming_weight is None:
        return rng.integers(-1, 2, size=ring_degree, dtype=np.int64)
    out = np.zeros(ring_degree, dtype=np.int64)
    positions = rng.choice(ring_degree, size=hamming_weight, replace=False)
    out[positions] = rng.choice(np.array([-1, 1], dtype=np.int64), size=hamming_weight)
    return out


def sample_gaussian(rng: np.random.Generator, ring_degree: int, sigma: float) -> np.ndarray:
    """Rounded Gaussian, tail-cut at ``GAUSSIAN_TAIL_SIGMAS`` standard deviations."""
    bound = math.ceil(GAUSSIAN_TAIL_SIGMAS * sigma)
    return np.clip(np.rint(rng.normal(0.0, sigma, size=ring_degree)), -bound, bound).astype(np.int64)


def sample_uniform(ctx: Context, rng: np.random.Generator, indices: Sequence[int]) -> RnsPolynomial:
    """Uniform polynomial sampled directly in EVAL form."""
    return RnsPolynomial(
        ctx,
        [
            Limb(i, rng.integers(0, ctx.primes[i].value, size=ctx.ring_degree, dtype=np.uint64), Format.EVAL)
            for i in indices
        ],
    )


# --- key types -------------------------------------------------------------------

@dataclass
class SecretKey:
    """Ternary secret, kept as integers and as an EVAL polynomial over every prime."""

    coeffs: np.ndarray
    poly: RnsPolynomial

    def at(self, indices: Sequence[int]) -> RnsPolynomial:
        return self.poly.subset(indices)


@dataclass
class PublicKey:
    """``(b, a)`` over the chain primes with ``b = -a*s + e``."""

    b: RnsPolynomial
    a: RnsPolynomial


@dataclass
class KeySwitchingKey:
    """One ``(ksk0, ksk1)`` pair per digit over chain and extension primes.

    ``ksk0_j + ksk1_j * s_to ≈ P * [digit j] * s_from``.
    """

    digits: List[Tuple[RnsPolynomial, RnsPolynomial]]
    galois_element: Optional[int] = None

    @property
    def digit_count(self) -> int:
        return len(self.digits)

    def digit_at(self, j: int, indices: Sequence[int]) -> Tuple[RnsPolynomial, RnsPolynomial]:
        k0, k1 = self.digits[j]
        return k0.subset(indices), k1.subset(indices)


@dataclass
class EvaluationKeys:
    """Relinearization, rotation (by Galois element) and conjugation keys."""

    relin: Optional[KeySwitchingKey] = None
    rotations: Dict[int, KeySwitchingKey] = field(default_factory=dict)
    conjugation: Optional[KeySwitchingKey] = None

    def relin_key(self) -> KeySwitchingKey:
        if self.relin is None:
            raise KeyMissingError("no relinearization key")
        return self.relin

    def galois_key(self, galois_element: int) -> KeySwitchingKey:
        key = self.rotations.get(galois_element)
        if key is None:
            if self.conjugation is not None and self.conjugation.galois_element == galois_element:
                return self.conjugation
            raise KeyMissingError(f"no key for Galois element {galois_element}")
        return key

    def rotation_key(self, ctx: Context, steps: int) -> KeySwitchingKey:
        try:
            return self.galois_key(ctx.galois_element(steps))
        except KeyMissingError:
            raise KeyMissingError(f"no rotation key for {steps} steps") from None

    def conjugation_key(self) -> KeySwitchingKey:
        if self.conjugation is None:
            raise KeyMissingError("no conjugation key")
        return self.conjugation


# --- key generation ------------------------------------------------------------------

def _all_indices(ctx: Context) -> Tuple[int, ...]:
    return ctx.chain_indices + ctx.extension_indices


def _rng(seed: Union[None, int, np.random.Generator]) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def secret_keygen(ctx: Context, rng: np.random.Generator) -> SecretKey:
    coeffs = sample_ternary(rng, ctx.ring_degree, ctx.params.hamming_weight)
    poly = RnsPolynomial.from_integers(ctx, coeffs, _all_indices(ctx), Format.EVAL)
    return SecretKey(coeffs=coeffs, poly=poly)


def public_keygen(ctx: Context, sk: SecretKey, rng: np.random.Generator) -> PublicKey:
    indices = ctx.chain_indices
    a = sample_uniform(ctx, rng, indices)
    e = RnsPolynomial.from_integers(ctx, sample_gaussian(rng, ctx.ring_degree, ctx.params.sigma), indices, Format.EVAL)
    b = e - a * sk.at(indices)
    return PublicKey(b=b, a=a)


def keygen(ctx: Context, rng_seed: Union[None, int, np.random.Generator] = None) -> Tuple[SecretKey, PublicKey]:
    """Fresh ternary secret and its public key."""
    rng = _rng(rng_seed)
    sk = secret_keygen(ctx, rng)
    pk = public_keygen(ctx, sk, rng)
    logger.debug("Generated key pair (N=%d, h=%s)", ctx.ring_degree, ctx.params.hamming_weight)
    return sk, pk


def keyswitch_keygen(
    ctx: Context,
    s_from: Union[SecretKey, RnsPolynomial],
    s_to: SecretKey,
    rng: Union[None, int, np.random.Generator] = None,
    galois_element: Optional[int] = None,
) -> KeySwitchingKey:
    """Hybrid key-switching key from ``s_from`` to ``s_to``, one pair per digit."""
    rng = _rng(rng)
    indices = _all_indices(ctx)
    source = s_from.poly if isinstance(s_from, SecretKey) else s_from
    target = s_to.at(indices)
    digits = []
    for digit in ctx.digit_bases(ctx.depth):
        a = sample_uniform(ctx, rng, indices)
        e = RnsPolynomial.from_integers(
            ctx, sample_gaussian(rng, ctx.ring_degree, ctx.params.sigma), indices, Format.EVAL
        )
        b = e - a * target
        limbs = []
        for limb in b.limbs:
            i = limb.modulus_index
            if i in digit:
                m = ctx.primes[i]
                gadget = barrett_mul(source.limb_by_index(i).coeffs, np.uint64(ctx.p_mod_q[i]), m)
                limbs.append(Limb(i, mod_add(limb.coeffs, gadget, m), Format.EVAL))
            else:
                limbs.append(limb)
        digits.append((RnsPolynomial(ctx, limbs), a))
    return KeySwitchingKey(digits=digits, galois_element=galois_element)


def relin_keygen(ctx: Context, sk: SecretKey, rng: Union[None, int, np.random.Generator] = None) -> KeySwitchingKey:
    return keyswitch_keygen(ctx, sk.poly * sk.poly, sk, rng)


def rotation_keygen(
    ctx: Context, sk: SecretKey, steps: int, rng: Union[None, int, np.random.Generator] = None
) -> KeySwitchingKey:
    """Key for a left rotation by ``steps`` slots (Galois element 5^steps)."""
    g = ctx.galois_element(steps)
    return keyswitch_keygen(ctx, automorphism(sk.poly, g), sk, rng, galois_element=g)


def conjugation_keygen(ctx: Context, sk: SecretKey, rng: Union[None, int, np.random.Generator] = None) -> KeySwitchingKey:
    g = ctx.conjugation_element
    return keyswitch_keygen(ctx, automorphism(sk.poly, g), sk, rng, galois_element=g)


def evaluation_keygen(
    ctx: Context,
    sk: SecretKey,
    rotations: Iterable[int] = (),
    conjugation: bool = False,
    relin: bool = True,
    rng: Union[None, int, np.random.Generator] = None,
) -> EvaluationKeys:
    """Bundle of the requested evaluation keys, rotations given in slot steps."""
    rng = _rng(rng)
    keys = EvaluationKeys()
    if relin:
        keys.relin = relin_keygen(ctx, sk, rng)
    for steps in sorted(set(rotations)):
        g = ctx.galois_element(steps)
        if g not in keys.rotations:
            keys.rotations[g] = rotation_keygen(ctx, sk, steps, rng)
    if conjugation:
        keys.conjugation = conjugation_keygen(ctx, sk, rng)
    logger.info(
        "Generated evaluation keys: relin=%s rotations=%d conjugation=%s",
        relin, len(keys.rotations), conjugation,
    )
    return keys


# --- encryption --------------------------------------------------------------------------

def fresh_noise_bits(ctx: Context) -> float:
    """Advisory log2 bound of fresh encryption noise."""
    return math.log2(GAUSSIAN_TAIL_SIGMAS * ctx.params.sigma * math.sqrt(ctx.ring_degree) + 1)


def encrypt(
    pt: Plaintext,
    key: Union[PublicKey, SecretKey],
    rng: Union[None, int, np.random.Generator] = None,
) -> Ciphertext:
    """RLWE encryption under a public key (``v*pk + (m + e0, e1)``) or a secret key."""
    ctx = pt.ctx
    rng = _rng(rng)
    if pt.level > ctx.depth:
        raise LevelError(f"plaintext level {pt.level} exceeds L={ctx.depth}")
    indices = pt.poly.indices
    n = ctx.ring_degree
    sigma = ctx.params.sigma
    if isinstance(key, PublicKey):
        v = RnsPolynomial.from_integers(ctx, sample_ternary(rng, n), indices, Format.EVAL)
        e0 = RnsPolynomial.from_integers(ctx, sample_gaussian(rng, n, sigma), indices, Format.EVAL)
        e1 = RnsPolynomial.from_integers(ctx, sample_gaussian(rng, n, sigma), indices, Format.EVAL)
        c0 = v * key.b.subset(indices) + e0 + pt.poly
        c1 = v * key.a.subset(indices) + e1
    else:
        a = sample_uniform(ctx, rng, indices)
        e = RnsPolynomial.from_integers(ctx, sample_gaussian(rng, n, sigma), indices, Format.EVAL)
        c0 = e + pt.poly - a * key.at(indices)
        c1 = a
    return Ciphertext(c0=c0, c1=c1, scale=pt.scale, slot_count=pt.slot_count,
                      noise_estimate=fresh_noise_bits(ctx))


def decrypt(ct: Ciphertext, sk: SecretKey) -> Plaintext:
    """``c0 + c1*s`` as a plaintext at the ciphertext's level and scale."""
    ctx = ct.ctx
    if ct.level == 0 and ct.scale >= ctx.primes[0].value:
        logger.warning(
            "Decrypting at level 0 with scale 2^%.1f >= q0: the message has wrapped and precision is lost",
            math.log2(ct.scale),
        )
    m = ct.c0 + ct.c1 * sk.at(ct.c0.indices)
    return Plaintext(poly=m, scale=ct.scale, slot_count=ct.slot_count)
