"""
Binary formats for polynomials, ciphertexts and keys.

Polynomial: ``b"RNSP"``, version u16, N u32, limb count u16, format u8,
one u16 modulus index per limb, then little-endian u64 coefficients,
limb-major. Ciphertexts, keys and bootstrap precomputations add a header
carrying the context record so a payload is never read under the wrong
parameters.
"""

import json
import logging
import struct
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .bootstrap import BootstrapPrecomputation, bootstrap_setup
from .ciphertext import Ciphertext, Plaintext
from .client import KeySwitchingKey, PublicKey, SecretKey
from .config import BootstrapConfig
from .context import Context
from .exceptions import CkksError, SerializationError
from .linear_transform import LinearTransformStage
from .rns_poly import Format, Limb, RnsPolynomial

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
POLY_MAGIC = b"RNSP"
CIPHERTEXT_MAGIC = b"CKCT"
PUBLIC_KEY_MAGIC = b"CKPK"
SECRET_KEY_MAGIC = b"CKSK"
SWITCH_KEY_MAGIC = b"CKSW"
PRECOMP_MAGIC = b"CKBP"

_FORMAT_CODES = {Format.COEFF: 0, Format.EVAL: 1}
_FORMAT_BY_CODE = {v: k for k, v in _FORMAT_CODES.items()}


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.offset = 0

    def take(self, size: int) -> memoryview:
        if self.offset + size > len(self.data):
            raise SerializationError(f"truncated payload: need {size} bytes at offset {self.offset}")
        chunk = self.data[self.offset: self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def magic(self, expected: bytes) -> None:
        found = bytes(self.take(len(expected)))
        if found != expected:
            raise SerializationError(f"bad magic {found!r}, expected {expected!r}")

    def done(self) -> None:
        if self.offset != len(self.data):
            raise SerializationError(f"{len(self.data) - self.offset} trailing bytes")


# --- polynomials --------------------------------------------------------------------------------

def _write_poly(poly: RnsPolynomial, out: List[bytes]) -> None:
    n = poly.ctx.ring_degree
    out.append(POLY_MAGIC)
    out.append(struct.pack("<HIHB", FORMAT_VERSION, n, len(poly.limbs), _FORMAT_CODES[poly.format]))
    out.append(struct.pack(f"<{len(poly.limbs)}H", *poly.indices))
    for limb in poly.limbs:
        out.append(np.ascontiguousarray(limb.coeffs, dtype="<u8").tobytes())


def _read_poly(ctx: Context, reader: _Reader) -> RnsPolynomial:
    reader.magic(POLY_MAGIC)
    version, n, count, code = reader.unpack("<HIHB")
    if version != FORMAT_VERSION:
        raise SerializationError(f"unsupported polynomial version {version}")
    if n != ctx.ring_degree:
        raise SerializationError(f"payload ring degree {n} != context N={ctx.ring_degree}")
    if code not in _FORMAT_BY_CODE:
        raise SerializationError(f"unknown format code {code}")
    indices = reader.unpack(f"<{count}H")
    limbs = []
    for i in indices:
        if i >= len(ctx.primes):
            raise SerializationError(f"modulus index {i} outside the context")
        coeffs = np.frombuffer(reader.take(8 * n), dtype="<u8").astype(np.uint64)
        if np.any(coeffs >= ctx.primes[i].u64):
            raise SerializationError(f"limb {i} holds unreduced residues")
        limbs.append(Limb(i, coeffs, _FORMAT_BY_CODE[code]))
    try:
        return RnsPolynomial(ctx, limbs)
    except CkksError as e:
        raise SerializationError(str(e)) from e


def serialize_polynomial(poly: RnsPolynomial) -> bytes:
    out: List[bytes] = []
    _write_poly(poly, out)
    return b"".join(out)


def deserialize_polynomial(ctx: Context, data: bytes) -> RnsPolynomial:
    reader = _Reader(data)
    poly = _read_poly(ctx, reader)
    reader.done()
    return poly


# --- headers ------------------------------------------------------------------------------------

def _write_header(magic: bytes, ctx: Context, out: List[bytes]) -> None:
    record = ctx.record().encode("utf-8")
    out.append(magic)
    out.append(struct.pack("<HI", FORMAT_VERSION, len(record)))
    out.append(record)


def _read_header(magic: bytes, ctx: Context, reader: _Reader) -> None:
    reader.magic(magic)
    version, size = reader.unpack("<HI")
    if version != FORMAT_VERSION:
        raise SerializationError(f"unsupported format version {version}")
    record = bytes(reader.take(size)).decode("utf-8", errors="replace")
    if record != ctx.record():
        raise SerializationError(f"payload was written for {record!r}, context is {ctx.record()!r}")


# --- ciphertexts and keys ---------------------------------------------------------------------------

def serialize_ciphertext(ct: Ciphertext) -> bytes:
    out: List[bytes] = []
    _write_header(CIPHERTEXT_MAGIC, ct.ctx, out)
    out.append(struct.pack("<dI", ct.scale, ct.slot_count))
    _write_poly(ct.c0, out)
    _write_poly(ct.c1, out)
    return b"".join(out)


def deserialize_ciphertext(ctx: Context, data: bytes) -> Ciphertext:
    reader = _Reader(data)
    _read_header(CIPHERTEXT_MAGIC, ctx, reader)
    scale, slot_count = reader.unpack("<dI")
    c0 = _read_poly(ctx, reader)
    c1 = _read_poly(ctx, reader)
    reader.done()
    try:
        return Ciphertext(c0, c1, scale=scale, slot_count=slot_count)
    except CkksError as e:
        raise SerializationError(str(e)) from e


def serialize_public_key(pk: PublicKey) -> bytes:
    out: List[bytes] = []
    _write_header(PUBLIC_KEY_MAGIC, pk.b.ctx, out)
    _write_poly(pk.b, out)
    _write_poly(pk.a, out)
    return b"".join(out)


def deserialize_public_key(ctx: Context, data: bytes) -> PublicKey:
    reader = _Reader(data)
    _read_header(PUBLIC_KEY_MAGIC, ctx, reader)
    b = _read_poly(ctx, reader)
    a = _read_poly(ctx, reader)
    reader.done()
    return PublicKey(b=b, a=a)


def serialize_secret_key(sk: SecretKey) -> bytes:
    out: List[bytes] = []
    _write_header(SECRET_KEY_MAGIC, sk.poly.ctx, out)
    out.append(np.ascontiguousarray(sk.coeffs, dtype="<i1").tobytes())
    _write_poly(sk.poly, out)
    return b"".join(out)


def deserialize_secret_key(ctx: Context, data: bytes) -> SecretKey:
    reader = _Reader(data)
    _read_header(SECRET_KEY_MAGIC, ctx, reader)
    coeffs = np.frombuffer(reader.take(ctx.ring_degree), dtype="<i1").astype(np.int64)
    poly = _read_poly(ctx, reader)
    reader.done()
    return SecretKey(coeffs=coeffs, poly=poly)


def serialize_keyswitch_key(ksk: KeySwitchingKey, ctx: Optional[Context] = None) -> bytes:
    ctx = ctx or ksk.digits[0][0].ctx
    out: List[bytes] = []
    _write_header(SWITCH_KEY_MAGIC, ctx, out)
    galois = -1 if ksk.galois_element is None else ksk.galois_element
    out.append(struct.pack("<qH", galois, ksk.digit_count))
    for k0, k1 in ksk.digits:
        _write_poly(k0, out)
        _write_poly(k1, out)
    return b"".join(out)


def deserialize_keyswitch_key(ctx: Context, data: bytes) -> KeySwitchingKey:
    reader = _Reader(data)
    _read_header(SWITCH_KEY_MAGIC, ctx, reader)
    galois, count = reader.unpack("<qH")
    digits = [(_read_poly(ctx, reader), _read_poly(ctx, reader)) for _ in range(count)]
    reader.done()
    return KeySwitchingKey(digits=digits, galois_element=None if galois < 0 else galois)


# --- bootstrap precomputation -------------------------------------------------------------------

def _write_stage(stage: LinearTransformStage, out: List[bytes]) -> None:
    if stage.level is None or stage.input_scale is None:
        raise SerializationError("only scheduled stages can be serialized")
    out.append(struct.pack("<HdI", stage.level, stage.input_scale, len(stage.diagonals)))
    for offset in sorted(stage.diagonals):
        out.append(struct.pack("<I", offset))
        out.append(np.ascontiguousarray(stage.diagonals[offset], dtype="<c16").tobytes())
    encoded = stage.encoded_plaintexts()
    out.append(struct.pack("<I", len(encoded)))
    for (giant, offset, level, scale), pt in encoded:
        out.append(struct.pack("<IIHd", giant, offset, level, scale))
        _write_poly(pt.poly, out)


def _read_stage(ctx: Context, slots: int, reader: _Reader) -> LinearTransformStage:
    level, input_scale, count = reader.unpack("<HdI")
    diagonals = {}
    for _ in range(count):
        (offset,) = reader.unpack("<I")
        diagonals[offset] = np.frombuffer(reader.take(16 * slots), dtype="<c16").astype(np.complex128)
    stage = LinearTransformStage(slots, diagonals, level=level, input_scale=input_scale)
    (count,) = reader.unpack("<I")
    for _ in range(count):
        giant, offset, pt_level, scale = reader.unpack("<IIHd")
        poly = _read_poly(ctx, reader)
        stage.preload(giant, offset, pt_level, scale, Plaintext(poly, scale, slots))
    return stage


def serialize_precomputation(precomp: BootstrapPrecomputation, ctx: Context) -> bytes:
    """Stage diagonals plus every diagonal encoded at its scheduled level.

    The plaintexts are written as polynomials, so loading skips the encoding
    work entirely.
    """
    if precomp.fingerprint != ctx.fingerprint():
        raise SerializationError("precomputation was built for a different parameter set")
    precomp.materialize(ctx)
    meta = {
        "config": precomp.config.model_dump(),
        "cheb_coeffs": [float(c) for c in precomp.cheb_coeffs],
        "sub_sum_steps": list(precomp.sub_sum_steps),
        "rotation_indices": list(precomp.rotation_indices),
        "start_level": precomp.start_level,
        "eval_mod_level": precomp.eval_mod_level,
        "output_level": precomp.output_level,
        "cts_stages": len(precomp.cts_stages),
        "stc_stages": len(precomp.stc_stages),
    }
    encoded_meta = json.dumps(meta, sort_keys=True).encode("utf-8")
    out: List[bytes] = []
    _write_header(PRECOMP_MAGIC, ctx, out)
    out.append(struct.pack("<I", len(encoded_meta)))
    out.append(encoded_meta)
    for stage in precomp.cts_stages + precomp.stc_stages:
        _write_stage(stage, out)
    return b"".join(out)


def deserialize_precomputation(ctx: Context, data: bytes) -> BootstrapPrecomputation:
    reader = _Reader(data)
    _read_header(PRECOMP_MAGIC, ctx, reader)
    (size,) = reader.unpack("<I")
    try:
        meta = json.loads(bytes(reader.take(size)).decode("utf-8"))
        config = BootstrapConfig.model_validate(meta["config"])
        cts = [_read_stage(ctx, config.slots, reader) for _ in range(int(meta["cts_stages"]))]
        stc = [_read_stage(ctx, config.slots, reader) for _ in range(int(meta["stc_stages"]))]
        reader.done()
        return BootstrapPrecomputation(
            config=config,
            fingerprint=ctx.fingerprint(),
            ring_degree=ctx.ring_degree,
            cts_stages=cts,
            stc_stages=stc,
            cheb_coeffs=np.asarray(meta["cheb_coeffs"], dtype=np.float64),
            sub_sum_steps=tuple(int(s) for s in meta["sub_sum_steps"]),
            rotation_indices=tuple(int(r) for r in meta["rotation_indices"]),
            start_level=int(meta["start_level"]),
            eval_mod_level=int(meta["eval_mod_level"]),
            output_level=int(meta["output_level"]),
        )
    except SerializationError:
        raise
    except (CkksError, KeyError, TypeError, ValueError) as e:
        raise SerializationError(f"malformed bootstrap precomputation: {e}") from e


def save_precomputation(precomp: BootstrapPrecomputation, ctx: Context, path: Union[str, Path]) -> Path:
    path = Path(path)
    payload = serialize_precomputation(precomp, ctx)
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise SerializationError(f"cannot write bootstrap precomputation {path}: {e}") from e
    logger.info("Saved bootstrap precomputation to %s (%d bytes)", path, len(payload))
    return path


def load_precomputation(ctx: Context, path: Union[str, Path]) -> BootstrapPrecomputation:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise SerializationError(f"cannot read bootstrap precomputation {path}: {e}") from e
    return deserialize_precomputation(ctx, data)


def load_or_build_precomputation(
    ctx: Context, config: BootstrapConfig, path: Union[str, Path]
) -> BootstrapPrecomputation:
    """Reuse the precomputation at ``path`` when it exists, otherwise build and save it."""
    path = Path(path)
    if path.exists():
        precomp = load_precomputation(ctx, path)
        if precomp.config != config:
            raise SerializationError(
                f"{path} holds a precomputation for {precomp.config.model_dump()}, requested {config.model_dump()}"
            )
        logger.info("Loaded bootstrap precomputation from %s", path)
        return precomp
    precomp = bootstrap_setup(ctx, config)
    save_precomputation(precomp, ctx, path)
    return precomp
