"""Tests for the binary formats."""

import struct

import numpy as np
import pytest

from rns_ckks.client import encrypt
from rns_ckks.encoding import encode
from rns_ckks.exceptions import SerializationError
from rns_ckks.serialization import (
    deserialize_ciphertext,
    deserialize_keyswitch_key,
    deserialize_polynomial,
    deserialize_public_key,
    deserialize_secret_key,
    serialize_ciphertext,
    serialize_keyswitch_key,
    serialize_polynomial,
    serialize_public_key,
    serialize_secret_key,
)


@pytest.fixture
def ciphertext(toy_ctx, toy_keys, rng):
    _, pk = toy_keys
    return encrypt(encode(toy_ctx, rng.uniform(-1, 1, 16), level=2, slot_count=16), pk, rng)


class TestPolynomial:
    def test_layout(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        poly = sk.at((0, 1))
        data = serialize_polynomial(poly)
        assert data[:4] == b"RNSP"
        version, n, count, code = struct.unpack_from("<HIHB", data, 4)
        assert (version, n, count, code) == (1, toy_ctx.ring_degree, 2, 1)
        assert len(data) == 4 + 9 + 2 * 2 + 2 * 8 * toy_ctx.ring_degree
        assert deserialize_polynomial(toy_ctx, data) == poly

    def test_coeff_format_preserved(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        poly = sk.at((0,)).to_coeff()
        assert deserialize_polynomial(toy_ctx, serialize_polynomial(poly)) == poly

    def test_wrong_ring_degree(self, toy_ctx, digits_ctx, digits_keys):
        sk, _, _ = digits_keys
        with pytest.raises(SerializationError, match="ring degree"):
            deserialize_polynomial(toy_ctx, serialize_polynomial(sk.at((0,))))

    def test_unreduced_residues(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        data = bytearray(serialize_polynomial(sk.at((0,))))
        data[-8:] = np.array([np.iinfo(np.uint64).max], dtype="<u8").tobytes()
        with pytest.raises(SerializationError, match="unreduced"):
            deserialize_polynomial(toy_ctx, bytes(data))

    def test_index_outside_context(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        data = bytearray(serialize_polynomial(sk.at((0,))))
        struct.pack_into("<H", data, 13, 99)
        with pytest.raises(SerializationError, match="outside"):
            deserialize_polynomial(toy_ctx, bytes(data))

    def test_truncated(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        data = serialize_polynomial(sk.at((0,)))
        with pytest.raises(SerializationError, match="truncated"):
            deserialize_polynomial(toy_ctx, data[:-1])

    def test_trailing_bytes(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        with pytest.raises(SerializationError, match="trailing"):
            deserialize_polynomial(toy_ctx, serialize_polynomial(sk.at((0,))) + b"\x00")

    def test_bad_magic(self, toy_ctx):
        with pytest.raises(SerializationError, match="magic"):
            deserialize_polynomial(toy_ctx, b"XXXX" + b"\x00" * 20)


class TestCiphertext:
    def test_round_trip(self, toy_ctx, ciphertext):
        data = serialize_ciphertext(ciphertext)
        assert data[:4] == b"CKCT"
        restored = deserialize_ciphertext(toy_ctx, data)
        assert restored == ciphertext
        assert restored.scale == ciphertext.scale
        assert restored.level == 2

    def test_deterministic_bytes(self, ciphertext):
        assert serialize_ciphertext(ciphertext) == serialize_ciphertext(ciphertext.copy())

    def test_wrong_context(self, digits_ctx, ciphertext):
        with pytest.raises(SerializationError, match="written for"):
            deserialize_ciphertext(digits_ctx, serialize_ciphertext(ciphertext))

    def test_wrong_kind(self, toy_ctx, ciphertext):
        with pytest.raises(SerializationError, match="magic"):
            deserialize_public_key(toy_ctx, serialize_ciphertext(ciphertext))

    def test_unsupported_version(self, toy_ctx, ciphertext):
        data = bytearray(serialize_ciphertext(ciphertext))
        struct.pack_into("<H", data, 4, 9)
        with pytest.raises(SerializationError, match="version"):
            deserialize_ciphertext(toy_ctx, bytes(data))


class TestKeys:
    def test_public_key(self, toy_ctx, toy_keys):
        _, pk = toy_keys
        restored = deserialize_public_key(toy_ctx, serialize_public_key(pk))
        assert restored.b == pk.b and restored.a == pk.a

    def test_secret_key(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        restored = deserialize_secret_key(toy_ctx, serialize_secret_key(sk))
        assert np.array_equal(restored.coeffs, sk.coeffs)
        assert restored.poly == sk.poly

    def test_rotation_key(self, toy_ctx, toy_eval_keys):
        ksk = toy_eval_keys.rotation_key(toy_ctx, 1)
        restored = deserialize_keyswitch_key(toy_ctx, serialize_keyswitch_key(ksk, toy_ctx))
        assert restored.galois_element == ksk.galois_element
        assert restored.digit_count == ksk.digit_count
        for (a0, a1), (b0, b1) in zip(restored.digits, ksk.digits):
            assert a0 == b0 and a1 == b1

    def test_relin_key_has_no_galois_element(self, toy_ctx, toy_eval_keys):
        restored = deserialize_keyswitch_key(toy_ctx, serialize_keyswitch_key(toy_eval_keys.relin_key()))
        assert restored.galois_element is None
