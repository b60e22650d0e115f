"""Tests for hybrid key switching: ModUp, ModDown and the fused pipeline."""

import numpy as np
import pytest

from rns_ckks.client import KeySwitchingKey, relin_keygen, sample_uniform
from rns_ckks.exceptions import FormatMismatchError, KeyMissingError, LimbMismatchError
from rns_ckks.keyswitch import (
    ExtendedPolynomial,
    decompose_and_raise,
    key_switch,
    key_switch_raised,
    mod_down,
    mod_up,
)
from rns_ckks.rns_poly import Format, RnsPolynomial, crt_reconstruct


def _residual_bits(ctx, sk, u0, u1, expected):
    residual = crt_reconstruct(u0 + u1 * sk.at(u0.indices) - expected)
    peak = max(abs(int(v)) for v in residual)
    return peak.bit_length()


class TestModUp:
    def test_owned_limbs_pass_through(self, toy_ctx, rng):
        x = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(4))
        raised = mod_up(x, range(2, 4))
        assert raised.poly.indices == toy_ctx.level_indices(4) + toy_ctx.extension_indices
        for i in (2, 3):
            assert np.array_equal(raised.poly.limb_by_index(i).coeffs, x.limb_by_index(i).coeffs)
        assert raised.origin_digit == 1

    def test_fused_matches_unfused(self, toy_ctx, rng):
        x = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(4))
        assert mod_up(x, range(0, 2), fused=True).poly == mod_up(x, range(0, 2), fused=False).poly

    def test_coeff_input_matches_eval_input(self, toy_ctx, rng):
        x = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(3))
        assert mod_up(x.to_coeff(), range(2, 4)).poly == mod_up(x, range(2, 4)).poly

    def test_converted_limbs_carry_small_overshoot(self, toy_ctx, rng):
        x = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(4))
        digit = (0, 1)
        raised = mod_up(x, digit).poly.to_coeff()
        digit_values = crt_reconstruct(x.subset(digit), centered=False)
        q_digit = toy_ctx.primes[0].value * toy_ctx.primes[1].value
        for i in (2, 4) + toy_ctx.extension_indices:
            p = toy_ctx.primes[i].value
            coeffs = raised.limb_by_index(i).coeffs
            for k in range(0, toy_ctx.ring_degree, 11):
                candidates = {(int(digit_values[k]) + u * q_digit) % p for u in range(len(digit))}
                assert int(coeffs[k]) in candidates

    def test_digit_above_level(self, toy_ctx, rng):
        x = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(1))
        with pytest.raises(LimbMismatchError):
            mod_up(x, range(2, 4))


class TestModDown:
    def _scaled_by_p(self, ctx, rng, level):
        values = rng.integers(-(1 << 30), 1 << 30, size=ctx.ring_degree, dtype=np.int64)
        big = [int(v) * ctx.p_product for v in values]
        poly = RnsPolynomial.from_integers(ctx, big, ctx.level_indices(level) + ctx.extension_indices, Format.EVAL)
        return ExtendedPolynomial(poly), values

    def test_divides_exact_multiples(self, toy_ctx, rng):
        extended, values = self._scaled_by_p(toy_ctx, rng, 3)
        out = mod_down(extended)
        assert out.indices == toy_ctx.level_indices(3)
        assert list(crt_reconstruct(out)) == values.tolist()

    def test_fused_matches_unfused(self, toy_ctx, rng):
        x = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(2) + toy_ctx.extension_indices)
        extended = ExtendedPolynomial(x)
        assert mod_down(extended, fused=True) == mod_down(extended, fused=False)

    def test_extended_layout_checked(self, toy_ctx, rng):
        with pytest.raises(LimbMismatchError):
            ExtendedPolynomial(sample_uniform(toy_ctx, rng, toy_ctx.level_indices(2)))
        coeff = RnsPolynomial.zeros(toy_ctx, toy_ctx.level_indices(0) + toy_ctx.extension_indices, Format.COEFF)
        with pytest.raises(FormatMismatchError):
            ExtendedPolynomial(coeff)


class TestKeySwitch:
    @pytest.mark.parametrize("level", [4, 2, 0])
    def test_relinearization_identity(self, toy_ctx, toy_keys, toy_eval_keys, rng, level):
        sk, _ = toy_keys
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(level))
        u0, u1 = key_switch(d, toy_eval_keys.relin_key())
        assert u0.indices == d.indices
        s = sk.at(d.indices)
        assert _residual_bits(toy_ctx, sk, u0, u1, d * s * s) < 20

    def test_fused_is_bit_identical(self, toy_ctx, toy_eval_keys, rng):
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(4))
        ksk = toy_eval_keys.relin_key()
        fused = key_switch(d, ksk, fused=True)
        unfused = key_switch(d, ksk, fused=False)
        assert fused[0] == unfused[0] and fused[1] == unfused[1]

    def test_raised_path_matches(self, toy_ctx, toy_eval_keys, rng):
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(3))
        ksk = toy_eval_keys.relin_key()
        raised = decompose_and_raise(d)
        assert len(raised) == 2
        via_raised = key_switch_raised(raised, ksk)
        direct = key_switch(d, ksk)
        assert via_raised[0] == direct[0] and via_raised[1] == direct[1]

    @pytest.mark.parametrize("level", [5, 3, 1])
    def test_three_digit_chain(self, digits_ctx, digits_keys, rng, level):
        sk, _, keys = digits_keys
        d = sample_uniform(digits_ctx, rng, digits_ctx.level_indices(level))
        fused = key_switch(d, keys.relin_key(), fused=True)
        unfused = key_switch(d, keys.relin_key(), fused=False)
        assert fused[0] == unfused[0] and fused[1] == unfused[1]
        s = sk.at(d.indices)
        assert _residual_bits(digits_ctx, sk, fused[0], fused[1], d * s * s) < 20

    def test_coeff_input_accepted(self, toy_ctx, toy_eval_keys, rng):
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(2))
        ksk = toy_eval_keys.relin_key()
        assert key_switch(d.to_coeff(), ksk)[0] == key_switch(d, ksk)[0]

    def test_too_few_digits(self, toy_ctx, toy_eval_keys, rng):
        ksk = toy_eval_keys.relin_key()
        short = KeySwitchingKey(digits=ksk.digits[:1])
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(4))
        with pytest.raises(KeyMissingError):
            key_switch(d, short)

    def test_low_level_needs_fewer_digits(self, toy_ctx, toy_eval_keys, rng):
        ksk = toy_eval_keys.relin_key()
        short = KeySwitchingKey(digits=ksk.digits[:1])
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(1))
        assert key_switch(d, short)[0] == key_switch(d, ksk)[0]

    def test_extension_input_rejected(self, toy_ctx, toy_eval_keys, rng):
        d = sample_uniform(toy_ctx, rng, toy_ctx.level_indices(1) + toy_ctx.extension_indices)
        with pytest.raises(LimbMismatchError):
            key_switch(d, toy_eval_keys.relin_key())

    def test_fresh_key_matches_bundle_shape(self, toy_ctx, toy_keys):
        sk, _ = toy_keys
        ksk = relin_keygen(toy_ctx, sk, 1)
        assert ksk.digit_count == len(toy_ctx.digit_bases(toy_ctx.depth))
