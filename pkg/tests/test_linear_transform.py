"""Tests for diagonal linear maps and their BSGS evaluation."""

import numpy as np
import pytest

from rns_ckks.client import decrypt, encrypt, evaluation_keygen
from rns_ckks.encoding import decode, encode, special_fft, special_fft_inv
from rns_ckks.evaluator import adjust_level, constant_scale_for
from rns_ckks.exceptions import BootstrapError, LevelError
from rns_ckks.linear_transform import (
    LinearTransformStage,
    apply_diagonals,
    apply_stage,
    butterfly_layer,
    compose,
    dense_matrix,
    fft_stages,
    homomorphic_linear_transform,
    plan_bsgs,
)
from rns_ckks.utils import bit_reverse_permutation

SLOTS = 8
TOLERANCE = 2.0 ** -18


def _values(rng, n):
    return rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)


def _apply_all(stages, values):
    for diags in stages:
        values = apply_diagonals(diags, values)
    return values


@pytest.fixture(scope="module")
def stages(toy_ctx):
    encoding = [LinearTransformStage(SLOTS, d) for d in fft_stages(toy_ctx.ring_degree, SLOTS, 2, inverse=True)]
    decoding = [LinearTransformStage(SLOTS, d) for d in fft_stages(toy_ctx.ring_degree, SLOTS, 2, inverse=False)]
    return encoding, decoding


@pytest.fixture(scope="module")
def stage_keys(toy_ctx, toy_keys, stages):
    sk, _ = toy_keys
    rotations = {r for stage in stages[0] + stages[1] for r in stage.rotations()}
    return evaluation_keygen(toy_ctx, sk, rotations=rotations, rng=21)


class TestDiagonalAlgebra:
    def test_layer_has_three_diagonals(self):
        diags = butterfly_layer(128, 16, 4, inverse=False)
        assert set(diags) == {0, 2, 14}

    def test_half_turn_offsets_merge(self):
        diags = butterfly_layer(128, 8, 8, inverse=False)
        assert set(diags) == {0, 4}

    def test_compose_matches_matrix_product(self, rng):
        a = butterfly_layer(128, 8, 2, inverse=False)
        b = butterfly_layer(128, 8, 4, inverse=False)
        composed = dense_matrix(compose(a, b, 8), 8)
        assert np.allclose(composed, dense_matrix(b, 8) @ dense_matrix(a, 8))

    @pytest.mark.parametrize("stage_count", [1, 2, 3])
    def test_encoding_stages_match_encoder(self, rng, stage_count):
        values = _values(rng, 16)
        out = _apply_all(fft_stages(128, 16, stage_count, inverse=True), values)
        expected = special_fft_inv(values, 128)[bit_reverse_permutation(16)]
        assert np.allclose(out, expected)

    def test_decoding_stages_match_decoder(self, rng):
        values = _values(rng, 16)
        out = _apply_all(fft_stages(128, 16, 2, inverse=False), values)
        assert np.allclose(out, special_fft(values[bit_reverse_permutation(16)], 128))

    def test_round_trip_is_identity(self, rng):
        values = _values(rng, 32)
        there = _apply_all(fft_stages(128, 32, 3, inverse=True), values)
        back = _apply_all(fft_stages(128, 32, 2, inverse=False), there)
        assert np.allclose(back, values)

    def test_stage_count_is_clamped(self):
        assert len(fft_stages(128, 8, 10, inverse=True)) == 3
        assert len(fft_stages(128, 64, 3, inverse=False)) == 3

    def test_constant_is_folded(self, rng):
        values = _values(rng, 8)
        plain = _apply_all(fft_stages(128, 8, 2, inverse=False), values)
        scaled = _apply_all(fft_stages(128, 8, 2, inverse=False, constant=0.5j), values)
        assert np.allclose(scaled, 0.5j * plain)

    def test_bad_slot_count(self):
        with pytest.raises(BootstrapError):
            fft_stages(128, 6, 2, inverse=True)


class TestBsgsPlan:
    @pytest.mark.parametrize("offsets", [[0, 1, 2, 3, 61, 62, 63], [0, 4, 8, 60], [0, 16, 48], [5]])
    def test_every_offset_covered(self, offsets):
        plan = plan_bsgs(offsets, 64)
        covered = set()
        for g, terms in plan.groups.items():
            for j, k in terms:
                assert (plan.step * (g + j)) % 64 == k
                covered.add(k)
        assert covered == set(offsets)

    def test_step_is_gcd(self):
        assert plan_bsgs([0, 4, 8, 60], 64).step == 4

    def test_fewer_rotations_than_offsets(self):
        offsets = list(range(0, 8)) + list(range(57, 64))
        plan = plan_bsgs(offsets, 64)
        rotations = set(plan.baby_rotations(64)) | set(plan.giant_rotations(64))
        assert len(rotations - {0}) < len(offsets) - 1


class TestStage:
    def test_empty_stage(self):
        with pytest.raises(BootstrapError):
            LinearTransformStage(8, {})

    def test_unscheduled_weight_scale(self, toy_ctx):
        stage = LinearTransformStage(SLOTS, fft_stages(toy_ctx.ring_degree, SLOTS, 1, inverse=True)[0])
        with pytest.raises(BootstrapError):
            stage.weight_scale(toy_ctx)

    def test_materialize(self, toy_ctx):
        diags = fft_stages(toy_ctx.ring_degree, SLOTS, 3, inverse=True)[0]
        stage = LinearTransformStage(SLOTS, diags, level=3, input_scale=toy_ctx.scale_by_level[3])
        assert stage.materialize(toy_ctx) == len(diags)
        assert stage.materialize(toy_ctx) == len(diags)

    def test_weight_scale_matches_evaluator(self, toy_ctx, toy_keys, rng):
        _, pk = toy_keys
        ct = encrypt(encode(toy_ctx, _values(rng, SLOTS), slot_count=SLOTS), pk, rng)
        stage = LinearTransformStage(
            SLOTS, fft_stages(toy_ctx.ring_degree, SLOTS, 1, inverse=True)[0], level=ct.level, input_scale=ct.scale
        )
        assert stage.weight_scale(toy_ctx) == pytest.approx(constant_scale_for(ct))


class TestHomomorphicTransform:
    @pytest.mark.parametrize("hoisted", [True, False])
    def test_single_stage(self, toy_ctx, toy_keys, stages, stage_keys, rng, hoisted):
        sk, pk = toy_keys
        values = _values(rng, SLOTS)
        ct = encrypt(encode(toy_ctx, values, slot_count=SLOTS), pk, rng)
        stage = stages[0][0]
        out = apply_stage(ct, stage, stage_keys, hoisted=hoisted)
        assert out.level == ct.level - 1
        assert out.scale == pytest.approx(toy_ctx.scale_by_level[ct.level - 1], rel=1e-9)
        assert np.max(np.abs(decode(decrypt(out, sk)) - stage.apply_cleartext(values))) < TOLERANCE

    def test_encode_then_decode_is_identity(self, toy_ctx, toy_keys, stages, stage_keys, rng):
        sk, pk = toy_keys
        values = _values(rng, SLOTS)
        ct = encrypt(encode(toy_ctx, values, slot_count=SLOTS), pk, rng)
        encoding, decoding = stages
        out = homomorphic_linear_transform(ct, encoding + decoding, stage_keys)
        assert out.level == ct.level - 4
        assert np.max(np.abs(decode(decrypt(out, sk)) - values)) < TOLERANCE

    def test_slot_mismatch(self, toy_ctx, toy_keys, stages, stage_keys, rng):
        _, pk = toy_keys
        ct = encrypt(encode(toy_ctx, [1.0], slot_count=16), pk, rng)
        with pytest.raises(BootstrapError):
            apply_stage(ct, stages[0][0], stage_keys)

    def test_level_zero(self, toy_ctx, toy_keys, stages, stage_keys, rng):
        _, pk = toy_keys
        ct = encrypt(encode(toy_ctx, [1.0], slot_count=SLOTS), pk, rng)
        with pytest.raises(LevelError):
            apply_stage(adjust_level(ct, 0), stages[0][0], stage_keys)
