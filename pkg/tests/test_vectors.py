"""Tests for deterministic test-vector files."""

import pytest

from rns_ckks.config import Parameters
from rns_ckks.exceptions import ParameterError, SerializationError
from rns_ckks.vectors import (
    VECTOR_MAGIC,
    check_test_vectors,
    decode_vectors,
    dump_test_vectors,
    encode_vectors,
)

VECTOR_PARAMS = Parameters(log_n=5, depth=2, delta_bits=30, dnum=2)
SECTIONS = [
    "secret_key", "public_key", "relin_key", "rotation_key", "plaintext_a", "ciphertext_a",
    "ciphertext_b", "add", "pt_mult", "mult", "rescale", "rotate",
]


class TestVectors:
    def test_dump_is_byte_identical(self, tmp_path):
        a = dump_test_vectors(VECTOR_PARAMS, 42, tmp_path / "a.bin")
        b = dump_test_vectors(VECTOR_PARAMS, 42, tmp_path / "b.bin")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes()[:4] == VECTOR_MAGIC

    def test_seed_changes_bytes(self, tmp_path):
        a = dump_test_vectors(VECTOR_PARAMS, 1, tmp_path / "a.bin")
        b = dump_test_vectors(VECTOR_PARAMS, 2, tmp_path / "b.bin")
        assert a.read_bytes() != b.read_bytes()

    def test_header_and_sections(self, tmp_path):
        path = dump_test_vectors(VECTOR_PARAMS, 7, tmp_path / "nested" / "v.bin")
        header, sections = decode_vectors(path.read_bytes())
        assert header["record"] == VECTOR_PARAMS.record()
        assert header["fingerprint"] == VECTOR_PARAMS.fingerprint()
        assert header["seed"] == 7
        assert header["sections"] == SECTIONS
        assert list(sections) == SECTIONS
        assert sections["ciphertext_a"][:4] == b"CKCT"

    def test_check_passes(self, tmp_path):
        path = dump_test_vectors(VECTOR_PARAMS, 3, tmp_path / "v.bin")
        assert check_test_vectors(path) == []

    def test_check_reports_changed_section(self, tmp_path):
        path = dump_test_vectors(VECTOR_PARAMS, 3, tmp_path / "v.bin")
        header, sections = decode_vectors(path.read_bytes())
        payload = bytearray(sections["rotate"])
        payload[-1] ^= 1
        sections["rotate"] = bytes(payload)
        path.write_bytes(encode_vectors(VECTOR_PARAMS, 3, sections))
        assert check_test_vectors(path) == ["rotate"]

    def test_bad_magic(self):
        with pytest.raises(SerializationError):
            decode_vectors(b"NOPE" + b"\x00" * 16)

    def test_truncated_section(self, tmp_path):
        path = dump_test_vectors(VECTOR_PARAMS, 3, tmp_path / "v.bin")
        with pytest.raises(SerializationError):
            decode_vectors(path.read_bytes()[:-5])

    def test_depth_zero_rejected(self, tmp_path):
        with pytest.raises(ParameterError):
            dump_test_vectors(Parameters(log_n=5, depth=0, delta_bits=30, dnum=1), 1, tmp_path / "v.bin")
