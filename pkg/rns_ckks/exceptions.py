"""Custom exceptions for the RNS-CKKS library."""


class CkksError(Exception):
    """Base exception for the RNS-CKKS library."""


class ParameterError(CkksError, ValueError):
    """Raised when a parameter set is invalid or infeasible."""


class PrimeSearchError(CkksError):
    """Raised when not enough NTT-friendly primes exist in the search window."""


class FormatMismatchError(CkksError):
    """Raised when polynomials are in the wrong (or mixed) COEFF/EVAL format."""


class LimbMismatchError(CkksError):
    """Raised when operands do not share the same limb set or ring degree."""


class LevelError(CkksError):
    """Raised when an operation needs more levels than the ciphertext has."""


class ScaleMismatchError(CkksError):
    """Raised when operand scales cannot be reconciled."""


class EncodingError(CkksError):
    """Raised when values cannot be encoded at the requested level and scale."""


class KeyMissingError(CkksError):
    """Raised when an evaluation key needed by an operation is absent."""


class SerializationError(CkksError):
    """Raised when a serialized object is malformed or incompatible."""


class BootstrapError(CkksError):
    """Raised when a bootstrap configuration is infeasible."""


class DatasetError(CkksError):
    """Raised when a training dataset is malformed."""


class BenchmarkError(CkksError):
    """Raised when a benchmarked operation fails its correctness check."""
