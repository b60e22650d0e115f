"""Tests for custom exceptions."""

import pytest

from rns_ckks.exceptions import (
    BenchmarkError,
    BootstrapError,
    CkksError,
    DatasetError,
    EncodingError,
    FormatMismatchError,
    KeyMissingError,
    LevelError,
    LimbMismatchError,
    ParameterError,
    PrimeSearchError,
    ScaleMismatchError,
    SerializationError,
)

ALL_ERRORS = [
    ParameterError,
    PrimeSearchError,
    FormatMismatchError,
    LimbMismatchError,
    LevelError,
    ScaleMismatchError,
    EncodingError,
    KeyMissingError,
    SerializationError,
    BootstrapError,
    DatasetError,
    BenchmarkError,
]


class TestExceptionHierarchy:
    def test_base_exception(self):
        with pytest.raises(CkksError):
            raise CkksError("base error")

    @pytest.mark.parametrize("exc_class", ALL_ERRORS)
    def test_is_ckks_error(self, exc_class):
        with pytest.raises(CkksError):
            raise exc_class("failure")

    def test_parameter_error_is_value_error(self):
        with pytest.raises(ValueError):
            raise ParameterError("dnum must be in [1, L+1]")

    def test_other_errors_are_not_value_errors(self):
        assert not issubclass(LevelError, ValueError)
        assert not issubclass(KeyMissingError, ValueError)

    def test_error_message(self):
        try:
            raise KeyMissingError("no rotation key for step 3")
        except KeyMissingError as e:
            assert str(e) == "no rotation key for step 3"
