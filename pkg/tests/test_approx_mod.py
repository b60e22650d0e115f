"""Tests for Chebyshev evaluation and the cosine-based modular reduction."""

import numpy as np
import pytest
from numpy.polynomial import chebyshev as C

from rns_ckks.approx_mod import (
    approx_mod_depth,
    approx_mod_eval,
    chebyshev_depth,
    cosine_coefficients,
    double_angle,
    evaluate_chebyshev,
    split_degree,
)
from rns_ckks.client import decrypt, encrypt
from rns_ckks.encoding import decode, encode
from rns_ckks.exceptions import BootstrapError, LevelError

TOLERANCE = 2.0 ** -15


def _encrypt(ctx, keys, values, rng):
    _, pk = keys
    return encrypt(encode(ctx, values), pk, rng)


def _decrypt(ct, keys):
    sk, _ = keys
    return decode(decrypt(ct, sk))


class TestCoefficients:
    def test_cosine_fit(self):
        coeffs = cosine_coefficients(16.0, 3, 31)
        y = np.linspace(-1, 1, 401)
        expected = np.cos(2 * np.pi * (16.0 * y - 0.25) / 8)
        assert np.max(np.abs(C.chebval(y, coeffs) - expected)) < 1e-6

    def test_double_angle_recovers_sine(self):
        k_range, r = 4.0, 2
        coeffs = cosine_coefficients(k_range, r, 31)
        y = np.linspace(-1, 1, 101)
        values = C.chebval(y, coeffs)
        for _ in range(r):
            values = 2 * values * values - 1
        assert np.max(np.abs(values - np.sin(2 * np.pi * k_range * y))) < 1e-5

    def test_degree_must_be_positive(self):
        with pytest.raises(BootstrapError):
            cosine_coefficients(16.0, 3, 0)


class TestDegreeSplit:
    @pytest.mark.parametrize("degree", list(range(1, 64)))
    def test_split_covers_degree(self, degree):
        k, m = split_degree(degree)
        assert k & (k - 1) == 0
        assert degree + 1 <= k * 2 ** m

    def test_known_depths(self):
        assert split_degree(31) == (8, 2)
        assert chebyshev_depth(31) == 6
        assert chebyshev_depth(3) == 3
        assert chebyshev_depth(7) == 4
        assert approx_mod_depth(31, 3) == 9


class TestEvaluateChebyshev:
    @pytest.mark.parametrize("degree", [1, 3, 7])
    def test_matches_cleartext(self, toy_ctx, toy_keys, toy_eval_keys, rng, degree):
        values = rng.uniform(-1, 1, toy_ctx.slot_count)
        coeffs = rng.uniform(-0.5, 0.5, degree + 1)
        ct = _encrypt(toy_ctx, toy_keys, values, rng)
        out = evaluate_chebyshev(ct, coeffs, toy_eval_keys)
        assert out.level == ct.level - chebyshev_depth(degree)
        assert out.scale == pytest.approx(toy_ctx.scale_by_level[out.level], rel=1e-9)
        assert np.max(np.abs(_decrypt(out, toy_keys) - C.chebval(values, coeffs))) < TOLERANCE

    def test_sparse_coefficients(self, toy_ctx, toy_keys, toy_eval_keys, rng):
        values = rng.uniform(-1, 1, toy_ctx.slot_count)
        coeffs = np.array([0.0, 0.0, 0.0, 0.75])
        ct = _encrypt(toy_ctx, toy_keys, values, rng)
        out = evaluate_chebyshev(ct, coeffs, toy_eval_keys)
        assert np.max(np.abs(_decrypt(out, toy_keys) - C.chebval(values, coeffs))) < TOLERANCE

    def test_not_enough_levels(self, toy_ctx, toy_keys, toy_eval_keys, rng):
        ct = _encrypt(toy_ctx, toy_keys, [0.5], rng)
        with pytest.raises(LevelError):
            evaluate_chebyshev(ct, np.ones(32), toy_eval_keys)


class TestDoubleAngle:
    def test_cosine_doubling(self, toy_ctx, toy_keys, toy_eval_keys, rng):
        theta = rng.uniform(-np.pi, np.pi, toy_ctx.slot_count)
        ct = _encrypt(toy_ctx, toy_keys, np.cos(theta), rng)
        out = double_angle(ct, 2, toy_eval_keys)
        assert out.level == ct.level - 2
        assert np.max(np.abs(_decrypt(out, toy_keys) - np.cos(4 * theta))) < TOLERANCE

    def test_approx_mod_eval_pipeline(self, toy_ctx, toy_keys, toy_eval_keys, rng):
        values = rng.uniform(-1, 1, toy_ctx.slot_count)
        coeffs = cosine_coefficients(1.0, 1, 3)
        ct = _encrypt(toy_ctx, toy_keys, values, rng)
        out = approx_mod_eval(ct, coeffs, 1, toy_eval_keys)
        assert out.level == ct.level - approx_mod_depth(3, 1)
        expected = C.chebval(values, coeffs)
        expected = 2 * expected * expected - 1
        assert np.max(np.abs(_decrypt(out, toy_keys) - expected)) < TOLERANCE
