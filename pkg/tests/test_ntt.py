"""Tests for the negacyclic NTT and its fused epilogues."""

import numpy as np
import pytest

from rns_ckks.config import NTT_VARIANT_FLAT, NTT_VARIANT_HIERARCHICAL
from rns_ckks.exceptions import LimbMismatchError, ParameterError
from rns_ckks.modarith import PrimeModulus, barrett_mul, mod_add
from rns_ckks.ntt import (
    KskMultiplyAccumulate,
    NttTable,
    ScaleBy,
    ScaleSubtract,
    WideAccumulator,
    forward_ntt,
    inverse_ntt,
    ksk_multiply_accumulate,
    negacyclic_convolve_reference,
    scale_subtract,
)
from rns_ckks.utils import bit_reverse

VARIANTS = [NTT_VARIANT_FLAT, NTT_VARIANT_HIERARCHICAL]


def _random_limb(rng, table: NttTable) -> np.ndarray:
    return rng.integers(0, table.modulus.value, size=table.ring_degree, dtype=np.uint64)


class TestNttTable:
    def test_psi_is_primitive_root(self, ntt_prime_factory):
        table = ntt_prime_factory(64)
        p = table.modulus.value
        assert pow(table.psi, 128, p) == 1
        assert pow(table.psi, 64, p) == p - 1

    def test_powers_bit_reversed(self, ntt_prime_factory):
        table = ntt_prime_factory(16)
        p = table.modulus.value
        for i in range(16):
            assert int(table.psi_powers[i]) == pow(table.psi, bit_reverse(i, 4), p)
            assert int(table.psi_inv_powers[i]) * int(table.psi_powers[i]) % p == 1

    def test_shoup_arrays_consistent(self, ntt_prime_factory):
        table = ntt_prime_factory(32)
        p = table.modulus.value
        for w, wq in zip(table.psi_powers, table.psi_shoup):
            assert int(wq) == (int(w) << 64) // p

    def test_n_inv(self, ntt_prime_factory):
        table = ntt_prime_factory(32)
        assert table.n_inv * 32 % table.modulus.value == 1

    def test_rejects_unfriendly_prime(self):
        with pytest.raises(ParameterError):
            NttTable(PrimeModulus(19), 8)

    def test_small_known_prime(self):
        table = NttTable(PrimeModulus(17), 8)
        assert pow(table.psi, 8, 17) == 16


@pytest.mark.parametrize("variant", VARIANTS)
class TestForwardNtt:
    def test_constant_polynomial(self, ntt_prime_factory, variant):
        table = ntt_prime_factory(16)
        coeffs = np.zeros(16, dtype=np.uint64)
        coeffs[0] = 7
        assert np.all(forward_ntt(coeffs, table, variant=variant) == 7)

    def test_evaluation_order(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(8)
        p = table.modulus.value
        coeffs = _random_limb(rng, table)
        out = forward_ntt(coeffs, table, variant=variant)
        for k in range(8):
            root = pow(table.psi, 2 * bit_reverse(k, 3) + 1, p)
            expected = sum(int(c) * pow(root, j, p) for j, c in enumerate(coeffs)) % p
            assert int(out[k]) == expected

    def test_roundtrip_small(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(16)
        x = _random_limb(rng, table)
        assert np.array_equal(inverse_ntt(forward_ntt(x, table, variant=variant), table, variant=variant), x)

    def test_roundtrip_large(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(1 << 13)
        x = _random_limb(rng, table)
        assert np.array_equal(inverse_ntt(forward_ntt(x, table, variant=variant), table, variant=variant), x)

    def test_output_normalized(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(256)
        out = forward_ntt(_random_limb(rng, table), table, variant=variant)
        assert out.max() < table.modulus.value

    def test_linearity(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(64)
        a, b = _random_limb(rng, table), _random_limb(rng, table)
        lhs = forward_ntt(mod_add(a, b, table.modulus), table, variant=variant)
        rhs = mod_add(forward_ntt(a, table, variant=variant), forward_ntt(b, table, variant=variant), table.modulus)
        assert np.array_equal(lhs, rhs)

    @pytest.mark.parametrize("n", [8, 16, 32, 64])
    def test_pointwise_product_is_negacyclic_convolution(self, ntt_prime_factory, rng, variant, n):
        table = ntt_prime_factory(n)
        a, b = _random_limb(rng, table), _random_limb(rng, table)
        prod = barrett_mul(forward_ntt(a, table, variant=variant), forward_ntt(b, table, variant=variant), table.modulus)
        assert np.array_equal(inverse_ntt(prod, table, variant=variant),
                              negacyclic_convolve_reference(a, b, table.modulus))

    def test_half_degree_monomial_squared(self, ntt_prime_factory, variant):
        table = ntt_prime_factory(32)
        p = table.modulus.value
        x = np.zeros(32, dtype=np.uint64)
        x[16] = 1
        ev = forward_ntt(x, table, variant=variant)
        sq = inverse_ntt(barrett_mul(ev, ev, table.modulus), table, variant=variant)
        assert int(sq[0]) == p - 1
        assert not sq[1:].any()

    def test_size_mismatch(self, ntt_prime_factory, variant):
        table = ntt_prime_factory(16)
        with pytest.raises(LimbMismatchError):
            forward_ntt(np.zeros(8, dtype=np.uint64), table, variant=variant)
        with pytest.raises(LimbMismatchError):
            inverse_ntt(np.zeros(32, dtype=np.uint64), table, variant=variant)


class TestInverseNtt:
    def test_inverse_of_constant_vector(self, ntt_prime_factory):
        table = ntt_prime_factory(16)
        out = inverse_ntt(np.full(16, 9, dtype=np.uint64), table)
        assert int(out[0]) == 9
        assert not out[1:].any()

    def test_unknown_variant(self, ntt_prime_factory):
        table = ntt_prime_factory(16)
        with pytest.raises(ParameterError):
            inverse_ntt(np.zeros(16, dtype=np.uint64), table, variant="radix8")


class TestHierarchicalAgreement:
    @pytest.mark.parametrize("n", [2, 4, 32, 128, 1024])
    def test_bit_exact_with_flat(self, ntt_prime_factory, rng, n):
        table = ntt_prime_factory(n)
        x = _random_limb(rng, table)
        flat = forward_ntt(x, table, variant=NTT_VARIANT_FLAT)
        assert np.array_equal(forward_ntt(x, table, variant=NTT_VARIANT_HIERARCHICAL), flat)
        assert np.array_equal(inverse_ntt(flat, table, variant=NTT_VARIANT_HIERARCHICAL),
                              inverse_ntt(flat, table, variant=NTT_VARIANT_FLAT))


@pytest.mark.parametrize("variant", VARIANTS)
class TestEpilogues:
    def test_scale_subtract_fused_equals_unfused(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(64)
        x, minuend = _random_limb(rng, table), _random_limb(rng, table)
        scalar = 1234567891011
        fused = forward_ntt(x, table, ScaleSubtract(minuend, scalar), variant=variant)
        unfused = scale_subtract(forward_ntt(x, table, variant=variant), minuend, scalar, table.modulus)
        assert np.array_equal(fused, unfused)

    def test_ksk_multiply_fused_equals_unfused(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(64)
        m = table.modulus
        k0, k1 = _random_limb(rng, table), _random_limb(rng, table)
        fused0, fused1 = WideAccumulator((64,), m), WideAccumulator((64,), m)
        plain0, plain1 = WideAccumulator((64,), m), WideAccumulator((64,), m)
        for _ in range(3):
            x = _random_limb(rng, table)
            forward_ntt(x, table, KskMultiplyAccumulate(k0, k1, fused0, fused1), variant=variant)
            ksk_multiply_accumulate(forward_ntt(x, table, variant=variant), k0, k1, plain0, plain1)
        assert np.array_equal(fused0.reduce(), plain0.reduce())
        assert np.array_equal(fused1.reduce(), plain1.reduce())

    def test_scale_by_fused_equals_unfused(self, ntt_prime_factory, rng, variant):
        table = ntt_prime_factory(64)
        x = _random_limb(rng, table)
        fused = inverse_ntt(x, table, ScaleBy(987654321), variant=variant)
        unfused = barrett_mul(inverse_ntt(x, table, variant=variant), np.uint64(987654321), table.modulus)
        assert np.array_equal(fused, unfused)

    def test_rejects_wrong_epilogue_kind(self, ntt_prime_factory, variant):
        table = ntt_prime_factory(16)
        with pytest.raises(ParameterError):
            forward_ntt(np.zeros(16, dtype=np.uint64), table, ScaleBy(3), variant=variant)


class TestWideAccumulator:
    def test_long_sum_matches_oracle(self, prime60, rng):
        p = prime60.value
        acc = WideAccumulator((100,), prime60)
        expected = np.zeros(100, dtype=object)
        for _ in range(300):
            a = rng.integers(0, p, size=100, dtype=np.uint64)
            b = rng.integers(0, p, size=100, dtype=np.uint64)
            acc.add_product(a, b)
            expected += a.astype(object) * b.astype(object)
        assert np.array_equal(acc.reduce(), (expected % p).astype(np.uint64))


class TestConvolveReference:
    def test_unit_polynomial(self, prime60, rng):
        b = rng.integers(0, prime60.value, size=8, dtype=np.uint64)
        one = np.zeros(8, dtype=np.uint64)
        one[0] = 1
        assert np.array_equal(negacyclic_convolve_reference(one, b, prime60), b)

    def test_wraparound_sign(self, prime60):
        n = 8
        x = np.zeros(n, dtype=np.uint64)
        x[1] = 1
        y = np.zeros(n, dtype=np.uint64)
        y[n - 1] = 1
        out = negacyclic_convolve_reference(x, y, prime60)
        assert int(out[0]) == prime60.value - 1
        assert not out[1:].any()

    def test_length_mismatch(self, prime60):
        with pytest.raises(LimbMismatchError):
            negacyclic_convolve_reference([1, 2], [1, 2, 3], prime60)
