"""
Deterministic test vectors for regression across versions.

A vector file is ``b"CKTV"``, a u16 version, a length-prefixed JSON header
(parameter record, fingerprint, seed, section names) and then one
length-prefixed section per object: keys, two fresh ciphertexts and the
outputs of add, multiply, rotate and rescale, each in the binary formats of
:mod:`rns_ckks.serialization`. Everything is derived from the seed, so two
dumps with the same seed are byte-identical.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .client import encrypt, evaluation_keygen, keygen
from .config import Parameters
from .context import Context, create_context
from .encoding import encode
from .evaluator import h_add, h_mult, h_rotate, pt_mult, rescale
from .exceptions import ParameterError, SerializationError
from .serialization import (
    serialize_ciphertext,
    serialize_keyswitch_key,
    serialize_polynomial,
    serialize_public_key,
    serialize_secret_key,
)

logger = logging.getLogger(__name__)

VECTOR_MAGIC = b"CKTV"
VECTOR_VERSION = 1
ROTATION_STEPS = 1


def build_sections(ctx: Context, seed: int) -> Dict[str, bytes]:
    """Serialized objects derived from ``seed``, in file order."""
    if ctx.depth < 1:
        raise ParameterError("test vectors need at least one level (depth >= 1)")
    rng = np.random.default_rng(seed)
    sk, pk = keygen(ctx, rng)
    keys = evaluation_keygen(ctx, sk, rotations=[ROTATION_STEPS], rng=rng)

    n = ctx.slot_count
    a_values = rng.uniform(-1.0, 1.0, n) + 1j * rng.uniform(-1.0, 1.0, n)
    b_values = rng.uniform(-1.0, 1.0, n)
    pt_a = encode(ctx, a_values, slot_count=n)
    pt_b = encode(ctx, b_values, slot_count=n)
    ct_a = encrypt(pt_a, pk, rng)
    ct_b = encrypt(pt_b, sk, rng)

    product = h_mult(ct_a, ct_b, keys)
    sections = {
        "secret_key": serialize_secret_key(sk),
        "public_key": serialize_public_key(pk),
        "relin_key": serialize_keyswitch_key(keys.relin_key(), ctx),
        "rotation_key": serialize_keyswitch_key(keys.rotation_key(ctx, ROTATION_STEPS), ctx),
        "plaintext_a": serialize_polynomial(pt_a.poly),
        "ciphertext_a": serialize_ciphertext(ct_a),
        "ciphertext_b": serialize_ciphertext(ct_b),
        "add": serialize_ciphertext(h_add(ct_a, ct_b)),
        "pt_mult": serialize_ciphertext(rescale(pt_mult(ct_a, pt_b))),
        "mult": serialize_ciphertext(product),
        "rescale": serialize_ciphertext(rescale(product)),
        "rotate": serialize_ciphertext(h_rotate(ct_a, ROTATION_STEPS, keys)),
    }
    return sections


def _header(params: Parameters, seed: int, names: List[str]) -> bytes:
    header = {
        "record": params.record(),
        "fingerprint": params.fingerprint(),
        "seed": seed,
        "sections": names,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_vectors(params: Parameters, seed: int, sections: Dict[str, bytes]) -> bytes:
    names = list(sections)
    header = _header(params, seed, names)
    out = [VECTOR_MAGIC, struct.pack("<HI", VECTOR_VERSION, len(header)), header]
    for name in names:
        label = name.encode("utf-8")
        payload = sections[name]
        out.append(struct.pack("<HQ", len(label), len(payload)))
        out.append(label)
        out.append(payload)
    return b"".join(out)


def decode_vectors(data: bytes) -> Tuple[dict, Dict[str, bytes]]:
    """Header dict and ``{name: payload}`` of a vector file."""
    view = memoryview(data)
    if bytes(view[:4]) != VECTOR_MAGIC:
        raise SerializationError("not a test-vector file")
    try:
        version, size = struct.unpack_from("<HI", view, 4)
        if version != VECTOR_VERSION:
            raise SerializationError(f"unsupported test-vector version {version}")
        offset = 10
        header = json.loads(bytes(view[offset: offset + size]).decode("utf-8"))
        offset += size
        sections: Dict[str, bytes] = {}
        while offset < len(view):
            label_len, payload_len = struct.unpack_from("<HQ", view, offset)
            offset += 10
            name = bytes(view[offset: offset + label_len]).decode("utf-8")
            offset += label_len
            if offset + payload_len > len(view):
                raise SerializationError(f"section {name!r} is truncated")
            sections[name] = bytes(view[offset: offset + payload_len])
            offset += payload_len
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SerializationError(f"malformed test-vector file: {e}") from e
    return header, sections


def dump_test_vectors(params: Parameters, seed: int, path: Union[str, Path]) -> Path:
    """Write the vectors for ``(params, seed)`` to ``path``."""
    path = Path(path)
    ctx = create_context(params)
    try:
        sections = build_sections(ctx, seed)
    finally:
        ctx.close()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_vectors(params, seed, sections))
    logger.info("Wrote %d test-vector sections to %s", len(sections), path)
    return path


def check_test_vectors(path: Union[str, Path]) -> List[str]:
    """Replay a vector file; returns the names of sections that no longer match."""
    header, golden = decode_vectors(Path(path).read_bytes())
    params = Parameters.from_record(header["record"])
    if params.fingerprint() != header.get("fingerprint"):
        raise SerializationError("header fingerprint does not match its parameter record")
    ctx = create_context(params)
    try:
        current = build_sections(ctx, int(header["seed"]))
    finally:
        ctx.close()
    names = list(dict.fromkeys(list(golden) + list(current)))
    mismatches = [name for name in names if golden.get(name) != current.get(name)]
    if mismatches:
        logger.warning("Test vectors differ in %d sections: %s", len(mismatches), ", ".join(mismatches))
    return mismatches
