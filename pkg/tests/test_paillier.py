import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from hvhash import paillier
from hvhash.paillier import (Ciphertext, KeyMismatchError, MalformedCiphertextError, PlaintextRangeError,
                             decode_signed, decrypt, encode_signed, encrypt, homomorphic_add,
                             rerandomize, scalar_multiply)

from oracles import toy_decrypt, toy_encrypt, toy_paillier


def test_toy_vector_matches_textbook_arithmetic(toy_keys):
    n, g, lam, ell, mu = toy_paillier(5, 7)
    assert (n, g, lam, ell, mu) == (35, 36, 12, 12, 3)
    pk, sk = toy_keys
    assert (pk.n, pk.g, pk.n_squared) == (35, 36, 1225)
    assert (sk.lambda_, sk.mu) == (12, 3)
    assert toy_encrypt(4, 2, n, g) == 88
    assert toy_decrypt(88, n, lam, mu) == 4


def test_toy_encrypt_decrypt(toy_keys):
    pk, sk = toy_keys
    c = encrypt(4, pk, r=2)
    assert c.value == 88
    assert decrypt(c, sk).value == 4
    assert pow(88, 12, 1225) == 456


def test_zero_with_unit_blinding_is_one(toy_keys):
    pk, _ = toy_keys
    assert encrypt(0, pk, r=1).value == 1


@pytest.mark.parametrize("m", range(35))
def test_toy_round_trip_every_plaintext(toy_keys, m):
    pk, sk = toy_keys
    for r in (1, 2, 3, 4, 6, 34):
        assert decrypt(encrypt(m, pk, r=r), sk).value == m
        assert encrypt(m, pk, r=r).value == toy_encrypt(m, r, 35, 36)


def test_toy_homomorphic_examples(toy_keys, rng):
    pk, sk = toy_keys
    e = lambda m: encrypt(m, pk, rng)
    assert decrypt(homomorphic_add(e(3), e(4), pk), sk).value == 7
    assert decrypt(homomorphic_add(e(20), e(20), pk), sk).value == 5
    assert decrypt(scalar_multiply(e(4), 3, pk), sk).value == 12
    assert decrypt(scalar_multiply(e(4), -1, pk), sk).value == 31
    assert decrypt(scalar_multiply(e(4), -1, pk), sk).signed() == -4
    c = e(9)
    assert decrypt(homomorphic_add(c, e(0), pk), sk) == decrypt(c, sk)
    assert decrypt(scalar_multiply(c, 1, pk), sk) == decrypt(c, sk)


def test_generated_key_invariants(keys512):
    pk, sk = keys512
    assert pk.g == pk.n + 1
    assert pk.n_squared == pk.n * pk.n
    assert pk.key_bits == 512
    ell = (pow(pk.g, sk.lambda_, pk.n_squared) - 1) // pk.n
    assert 0 < sk.mu < pk.n
    assert sk.mu * ell % pk.n == 1


@pytest.mark.parametrize("bits", [16, 17, 64, 128])
def test_small_keys_have_exact_bit_length(bits):
    for seed in range(5):
        pk, sk = paillier.generate_keypair(bits, rng_seed=seed)
        assert pk.key_bits == bits
        assert sk.mu * ((pow(pk.g, sk.lambda_, pk.n_squared) - 1) // pk.n) % pk.n == 1


def test_seeded_keygen_is_reproducible():
    assert paillier.generate_keypair(128, rng_seed=3) == paillier.generate_keypair(128, rng_seed=3)


def test_lambda_is_lcm_of_prime_predecessors():
    pk, sk = paillier.keypair_from_primes(1009, 1013)
    assert sk.lambda_ == math.lcm(1008, 1012)


def test_rejects_tiny_and_equal_primes():
    with pytest.raises(paillier.KeyGenerationError):
        paillier.generate_keypair(8)
    with pytest.raises(paillier.KeyGenerationError):
        paillier.keypair_from_primes(7, 7)


def test_extended_gcd_bezout():
    gamma, alpha, beta = paillier.extended_gcd(240, 46)
    assert gamma == 2 and alpha * 240 + beta * 46 == 2


def test_miller_rabin_on_known_values():
    primes = [2, 3, 97, 7919, 2**61 - 1, 2**127 - 1]
    composites = [1, 0, 91, 561, 41041, 2**61 + 1, (2**31 - 1) * (2**61 - 1)]
    assert all(paillier.is_probable_prime(p) for p in primes)
    assert not any(paillier.is_probable_prime(c) for c in composites)


def test_round_trip_edges(keys512, rng):
    pk, sk = keys512
    for m in (0, 1, pk.n - 1):
        assert decrypt(encrypt(m, pk, rng), sk).value == m


def test_encryption_is_probabilistic(keys512, rng):
    pk, sk = keys512
    a, b = encrypt(42, pk, rng), encrypt(42, pk, rng)
    assert a != b
    assert decrypt(a, sk).value == decrypt(b, sk).value == 42


def test_rerandomize(keys512, rng):
    pk, sk = keys512
    c = encrypt(9, pk, rng)
    fresh = rerandomize(c, pk, rng)
    assert fresh.value != c.value
    assert decrypt(fresh, sk).value == 9
    assert decrypt(rerandomize(encrypt(0, pk, r=1), pk, rng), sk).value == 0


def test_range_and_malformed_errors(toy_keys, keys512):
    pk, sk = toy_keys
    with pytest.raises(PlaintextRangeError):
        encrypt(35, pk)
    with pytest.raises(PlaintextRangeError):
        encrypt(-1, pk)
    with pytest.raises(MalformedCiphertextError):
        decrypt(Ciphertext(0, 35), sk)
    with pytest.raises(MalformedCiphertextError):
        decrypt(Ciphertext(5, 35), sk)  # shares the factor 5 with n


def test_key_mismatch(toy_keys, keys512, rng):
    pk_a, sk_a = toy_keys
    pk_b, _ = keys512
    ca, cb = encrypt(1, pk_a, rng), encrypt(1, pk_b, rng)
    with pytest.raises(KeyMismatchError):
        homomorphic_add(ca, cb, pk_a)
    with pytest.raises(KeyMismatchError):
        scalar_multiply(cb, 2, pk_a)
    with pytest.raises(KeyMismatchError):
        decrypt(cb, sk_a)


@given(st.integers(min_value=-17, max_value=17))
def test_signed_convention_toy(v):
    n = 35
    assert decode_signed(encode_signed(v, n), n) == v


@settings(max_examples=50, deadline=None)
@given(v=st.integers(min_value=-(2**200), max_value=2**200), seed=st.integers(0, 2**32))
def test_signed_round_trip_through_encryption(keys512, v, seed):
    pk, sk = keys512
    c = encrypt(encode_signed(v, pk.n), pk, random.Random(seed))
    assert decrypt(c, sk).signed() == v


def test_key_files_round_trip(tmp_path, keys512):
    pk, sk = keys512
    pub, priv = paillier.save_keypair(pk, sk, tmp_path)
    assert paillier.load_public_key(pub) == pk
    assert paillier.load_private_key(priv) == sk
    text = priv.read_text()
    assert '"format": "hvhash-paillier-private"' in text and '"version": 1' in text
    with pytest.raises(paillier.PaillierError):
        paillier.load_private_key(pub)


def test_private_key_repr_hides_values(keys512):
    _, sk = keys512
    assert str(sk.lambda_) not in repr(sk)
