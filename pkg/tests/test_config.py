"""Tests for configuration module."""

import os
from unittest.mock import patch

import pytest
from pydantic import ValidationError

from rns_ckks.config import (
    BOOTSTRAP_LEVEL_TARGETS,
    DEFAULT_BOOT_CHEB_DEGREE,
    DEFAULT_BOOT_DOUBLE_ANGLE,
    DEFAULT_BOOT_K_RANGE,
    DEFAULT_SIGMA,
    HE_STANDARD_MAX_LOG_QP,
    MAX_PRIME_BITS,
    NTT_VARIANT_FLAT,
    PRESETS,
    SCALE_TOLERANCE,
    BootstrapConfig,
    Parameters,
    RuntimeSettings,
    max_log_qp,
)
from rns_ckks.exceptions import ParameterError


class TestConstants:
    def test_sigma(self):
        assert DEFAULT_SIGMA == 3.19

    def test_prime_width_cap(self):
        assert MAX_PRIME_BITS == 60

    def test_scale_tolerance(self):
        assert SCALE_TOLERANCE == 2.0 ** -30

    def test_bootstrap_defaults(self):
        assert DEFAULT_BOOT_K_RANGE == 16.0
        assert DEFAULT_BOOT_DOUBLE_ANGLE == 3
        assert DEFAULT_BOOT_CHEB_DEGREE == 31

    def test_level_targets(self):
        assert BOOTSTRAP_LEVEL_TARGETS == {64: 13, 512: 11, 16384: 9, 32768: 9}

    def test_standard_bounds_grow_with_n(self):
        bounds = [HE_STANDARD_MAX_LOG_QP[1 << k] for k in range(10, 18)]
        assert bounds == sorted(bounds)
        assert max_log_qp(1 << 15) == 881
        assert max_log_qp(1 << 5) is None


class TestParameters:
    def test_derived_sizes(self):
        p = Parameters(log_n=13, depth=6, delta_bits=40, dnum=2)
        assert p.ring_degree == 8192
        assert p.slot_count == 4096
        assert p.alpha == 4
        assert p.extension_count == 4

    def test_alpha_rounds_up(self):
        p = Parameters(log_n=14, depth=13, delta_bits=40, dnum=3)
        assert p.alpha == 5

    def test_explicit_slots(self):
        p = Parameters(log_n=10, depth=2, delta_bits=30, dnum=1, slots=8)
        assert p.slot_count == 8

    def test_as_list(self):
        assert PRESETS["large"].as_list() == [16, 29, 59, 4]
        assert PRESETS["large-lr"].as_list() == [16, 26, 59, 4]
        assert PRESETS["toy"].as_list() == [13, 6, 40, 2]
        assert PRESETS["mid"].as_list() == [14, 13, 40, 3]

    def test_frozen(self):
        p = Parameters(log_n=10, depth=2, delta_bits=30, dnum=1)
        with pytest.raises(ValidationError):
            p.depth = 3

    def test_presets_validate(self):
        for params in PRESETS.values():
            params.validate_params()

    @pytest.mark.parametrize(
        "overrides, field",
        [
            ({"log_n": 0}, "log_n"),
            ({"log_n": 18}, "log_n"),
            ({"depth": -1}, "depth"),
            ({"dnum": 0}, "dnum"),
            ({"dnum": 4}, "dnum"),
            ({"delta_bits": 61}, "delta_bits"),
            ({"first_mod_bits": 20}, "first_mod_bits"),
            ({"slots": 3}, "slots"),
            ({"slots": 1024}, "slots"),
            ({"security": "weak"}, "security"),
            ({"hamming_weight": 0}, "hamming_weight"),
            ({"sigma": 0.0}, "sigma"),
        ],
    )
    def test_invalid_fields_name_the_field(self, overrides, field):
        base = {"log_n": 10, "depth": 2, "delta_bits": 30, "dnum": 1}
        base.update(overrides)
        with pytest.raises(ParameterError, match=field):
            Parameters(**base).validate_params()

    def test_parameter_error_is_value_error(self):
        with pytest.raises(ValueError):
            Parameters(log_n=10, depth=2, delta_bits=30, dnum=9).validate_params()


class TestRecord:
    def test_roundtrip(self):
        p = Parameters(log_n=11, depth=15, delta_bits=50, dnum=4, hamming_weight=64, slots=8)
        assert Parameters.from_record(p.record()) == p

    def test_dense_secret_roundtrip(self):
        p = Parameters(log_n=10, depth=2, delta_bits=30, dnum=1)
        assert Parameters.from_record(p.record()).hamming_weight is None

    def test_fingerprint_stable_and_distinct(self):
        a = Parameters(log_n=10, depth=2, delta_bits=30, dnum=1)
        b = Parameters(log_n=10, depth=2, delta_bits=30, dnum=1)
        c = Parameters(log_n=10, depth=3, delta_bits=30, dnum=1)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()
        assert len(a.fingerprint()) == 16

    def test_from_list(self):
        p = Parameters.from_list([14, 13, 40, 3])
        assert p == PRESETS["mid"]

    @pytest.mark.parametrize("record", ["", "other/1 logn=3", "ckks-rns/1 logn=x depth=1"])
    def test_malformed(self, record):
        with pytest.raises(ParameterError):
            Parameters.from_record(record)


class TestBootstrapConfig:
    def test_defaults(self):
        cfg = BootstrapConfig(slots=64)
        assert cfg.cts_levels == 3
        assert cfg.stc_levels == 3
        assert cfg.k_range == DEFAULT_BOOT_K_RANGE
        assert cfg.log_slots == 6


class TestRuntimeSettings:
    def test_defaults(self):
        with patch.dict(os.environ, {}, clear=True):
            settings = RuntimeSettings.from_env()
        assert settings.log_level == "INFO"
        assert settings.limb_batch == 0
        assert settings.workers == 1
        assert settings.ntt_variant == NTT_VARIANT_FLAT
        assert settings.seed is None
        assert settings.output_dir == "."

    def test_from_env(self):
        env = {
            "LOG_LEVEL": "debug",
            "CKKS_LIMB_BATCH": "2",
            "CKKS_WORKERS": "4",
            "CKKS_NTT_VARIANT": "hierarchical",
            "CKKS_SEED": "-5",
            "CKKS_OUTPUT_DIR": "/tmp/reports",
        }
        with patch.dict(os.environ, env, clear=True):
            settings = RuntimeSettings.from_env()
        assert settings.log_level == "DEBUG"
        assert settings.limb_batch == 2
        assert settings.workers == 4
        assert settings.ntt_variant == "hierarchical"
        assert settings.seed == -5
        assert settings.output_dir == "/tmp/reports"

    def test_bad_integer_falls_back(self):
        with patch.dict(os.environ, {"CKKS_WORKERS": "many", "CKKS_SEED": "abc"}, clear=True):
            settings = RuntimeSettings.from_env()
        assert settings.workers == 1
        assert settings.seed is None

    @pytest.mark.parametrize(
        "kwargs",
        [{"limb_batch": -1}, {"workers": 0}, {"ntt_variant": "radix4"}],
    )
    def test_validate_runtime(self, kwargs):
        with pytest.raises(ParameterError):
            RuntimeSettings(**kwargs).validate_runtime()
