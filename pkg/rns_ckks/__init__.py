"""RNS-CKKS homomorphic encryption library with bootstrapping and benchmarks."""

__version__ = "0.3.0"
