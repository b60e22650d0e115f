"""Shared fixtures: primes, NTT tables, contexts and key material.

Contexts and keys are expensive, so they are built once per session.
"""

import numpy as np
import pytest

from rns_ckks.client import evaluation_keygen, keygen
from rns_ckks.config import Parameters
from rns_ckks.context import create_context
from rns_ckks.modarith import PrimeModulus, generate_prime_chain
from rns_ckks.ntt import NttTable

TOY_PARAMS = Parameters(log_n=7, depth=4, delta_bits=40, dnum=2)
# Three digits of two primes each, so key switching crosses digit boundaries
DIGITS_PARAMS = Parameters(log_n=6, depth=5, delta_bits=40, dnum=3)
TOY_ROTATIONS = (1, 2, 3, 4, 5, 8, 16, 63)


@pytest.fixture(scope="session")
def prime60() -> PrimeModulus:
    return generate_prime_chain(1 << 4, 0, 40, 0)[0]


@pytest.fixture(scope="session")
def ntt_prime_factory():
    cache = {}

    def make(ring_degree: int, bits: int = 60) -> NttTable:
        key = (ring_degree, bits)
        if key not in cache:
            prime = generate_prime_chain(ring_degree, 0, min(bits, 40), 0, first_mod_bits=bits)[0]
            cache[key] = NttTable(prime, ring_degree)
        return cache[key]

    return make


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


# --- scheme fixtures ---------------------------------------------------------------------------------

@pytest.fixture(scope="session")
def toy_ctx():
    ctx = create_context(TOY_PARAMS)
    yield ctx
    ctx.close()


@pytest.fixture(scope="session")
def toy_keys(toy_ctx):
    return keygen(toy_ctx, 7)


@pytest.fixture(scope="session")
def toy_eval_keys(toy_ctx, toy_keys):
    sk, _ = toy_keys
    return evaluation_keygen(toy_ctx, sk, rotations=TOY_ROTATIONS, conjugation=True, rng=11)


@pytest.fixture(scope="session")
def digits_ctx():
    ctx = create_context(DIGITS_PARAMS)
    yield ctx
    ctx.close()


@pytest.fixture(scope="session")
def digits_keys(digits_ctx):
    sk, pk = keygen(digits_ctx, 3)
    return sk, pk, evaluation_keygen(digits_ctx, sk, rotations=(1, 3), conjugation=True, rng=5)
