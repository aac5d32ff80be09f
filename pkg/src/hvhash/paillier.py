"""Paillier cryptosystem over arbitrary-precision integers.

Keys, ciphertexts and plaintexts are immutable values; every operation is a
pure function of its arguments plus an explicit randomness source. The public
generator is fixed to ``g = n + 1`` so ``g**m mod n**2`` collapses to
``1 + m*n``.

Signed quantities use the residue convention: a plaintext ``v`` with
``2*v > n`` stands for ``v - n``.
"""
from __future__ import annotations

import hashlib
import json
import math
import secrets
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

try:
    import gmpy2

    def _powmod(base: int, exp: int, mod: int) -> int:
        return int(gmpy2.powmod(base, exp, mod))

except ImportError:  # pragma: no cover - gmpy2 is optional
    gmpy2 = None

    def _powmod(base: int, exp: int, mod: int) -> int:
        return pow(base, exp, mod)


MILLER_RABIN_ROUNDS = 64
DEFAULT_KEY_BITS = 2048
KEY_FILE_VERSION = 1


class PaillierError(ValueError):
    """Base class for Paillier failures."""


class KeyGenerationError(PaillierError):
    pass


class PlaintextRangeError(PaillierError):
    pass


class MalformedCiphertextError(PaillierError):
    pass


class KeyMismatchError(PaillierError):
    pass


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    g: int
    n_squared: int

    @classmethod
    def from_modulus(cls, n: int) -> "PaillierPublicKey":
        return cls(n=n, g=n + 1, n_squared=n * n)

    @property
    def key_bits(self) -> int:
        return self.n.bit_length()

    def fingerprint(self) -> bytes:
        """First 8 bytes of SHA-256 over the big-endian modulus."""
        raw = self.n.to_bytes((self.n.bit_length() + 7) // 8, "big")
        return hashlib.sha256(raw).digest()[:8]


@dataclass(frozen=True, repr=False)
class PaillierPrivateKey:
    lambda_: int
    mu: int
    n: int

    def __repr__(self) -> str:
        return f"PaillierPrivateKey(n={self.n.bit_length()} bits)"

    @property
    def public_key(self) -> PaillierPublicKey:
        return PaillierPublicKey.from_modulus(self.n)


@dataclass(frozen=True)
class Ciphertext:
    value: int
    n: int


@dataclass(frozen=True)
class Plaintext:
    value: int
    n: int

    def signed(self) -> int:
        return decode_signed(self.value, self.n)


# -- number theory ---------------------------------------------------------

def is_probable_prime(candidate: int, rng=None, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin test with ``rounds`` random witnesses."""
    if candidate < 2:
        return False
    for small in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if candidate % small == 0:
            return candidate == small
    rng = rng or secrets.SystemRandom()
    d, s = candidate - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, candidate - 1)
        x = _powmod(a, d, candidate)
        if x == 1 or x == candidate - 1:
            continue
        for _ in range(s - 1):
            x = x * x % candidate
            if x == candidate - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng=None, max_tries: int = 100_000) -> int:
    # top two bits set so that the product of two such primes has exactly
    # the sum of their bit lengths
    rng = rng or secrets.SystemRandom()
    if bits < 3:
        raise KeyGenerationError(f"cannot draw a {bits}-bit prime")
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    for _ in range(max_tries):
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate, rng):
            return candidate
    raise KeyGenerationError(f"no {bits}-bit prime found in {max_tries} candidates")


def extended_gcd(a: int, b: int) -> tuple[int, int, int]:
    """Return ``(gamma, alpha, beta)`` with ``gamma = alpha*a + beta*b``."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    return old_r, old_s, old_t


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def encode_signed(v: int, n: int) -> int:
    if not -n // 2 < v <= n // 2:
        raise PlaintextRangeError(f"|{v}| does not fit the signed range of n")
    return v % n


def decode_signed(m: int, n: int) -> int:
    return m - n if 2 * m > n else m


# -- keys ------------------------------------------------------------------

def keypair_from_primes(p: int, q: int) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Derive the key pair from two distinct primes.

    ``mu`` is the Bezout coefficient of ``L(g**lambda mod n**2)`` against
    ``n``, reduced mod ``n``. A gcd other than 1 means the primes do not give
    a valid key and raises :class:`KeyGenerationError`.
    """
    if p == q:
        raise KeyGenerationError("p and q must differ")
    n = p * q
    if math.gcd(n, (p - 1) * (q - 1)) != 1:
        raise KeyGenerationError("gcd(n, phi(n)) != 1")
    pk = PaillierPublicKey.from_modulus(n)
    lam = math.lcm(p - 1, q - 1)
    ell = _L(_powmod(pk.g, lam, pk.n_squared), n)
    gamma, alpha, beta = extended_gcd(ell, n)
    if gamma != 1 or alpha * ell + beta * n != gamma:
        raise KeyGenerationError(f"L(g^lambda) shares factor {gamma} with n")
    return pk, PaillierPrivateKey(lambda_=lam, mu=alpha % n, n=n)


def generate_keypair(key_bits: int = DEFAULT_KEY_BITS, rng_seed: int | None = None,
                     max_attempts: int = 64) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Generate a key pair whose modulus has exactly ``key_bits`` bits.

    With ``rng_seed`` set the primes come from a seeded ``random.Random``;
    this is for reproducible tests only.
    """
    if key_bits < 16:
        raise KeyGenerationError("key_bits must be at least 16")
    if rng_seed is None:
        rng = secrets.SystemRandom()
    else:
        import random
        rng = random.Random(rng_seed)
    p_bits = key_bits // 2
    q_bits = key_bits - p_bits
    for _ in range(max_attempts):
        p = random_prime(p_bits, rng)
        q = random_prime(q_bits, rng)
        if p == q:
            continue
        try:
            pk, sk = keypair_from_primes(p, q)
        except KeyGenerationError:
            continue
        if pk.key_bits == key_bits:
            return pk, sk
    raise KeyGenerationError(f"no valid {key_bits}-bit key after {max_attempts} attempts")


# -- encryption ------------------------------------------------------------

def random_unit(pk: PaillierPublicKey, rng=None) -> int:
    """Draw ``r`` with ``0 < r < n`` and ``gcd(r, n) = 1``."""
    rng = rng or secrets.SystemRandom()
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            return r


def raw_encrypt(m: int, pk: PaillierPublicKey, r: int) -> int:
    # g = n + 1, so g^m mod n^2 = 1 + m*n
    return (1 + m * pk.n) % pk.n_squared * _powmod(r, pk.n, pk.n_squared) % pk.n_squared


def encrypt(m: int | Plaintext, pk: PaillierPublicKey, rng=None, r: int | None = None) -> Ciphertext:
    """Encrypt ``0 <= m < n``. ``r`` forces the blinding value (test vectors)."""
    if isinstance(m, Plaintext):
        m = m.value
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext {m} outside [0, n)")
    if r is None:
        r = random_unit(pk, rng)
    elif not 0 < r < pk.n or math.gcd(r, pk.n) != 1:
        raise PaillierError("r must be a unit in (0, n)")
    return Ciphertext(raw_encrypt(m, pk, r), pk.n)


def encrypt_many(values: Iterable[int], pk: PaillierPublicKey, rng=None) -> list[int]:
    """Encrypt a batch and return bare ciphertext integers (hot path)."""
    rng = rng or secrets.SystemRandom()
    n, nn = pk.n, pk.n_squared
    out = []
    for m in values:
        m = int(m)
        if not 0 <= m < n:
            raise PlaintextRangeError(f"plaintext {m} outside [0, n)")
        out.append((1 + m * n) * _powmod(random_unit(pk, rng), n, nn) % nn)
    return out


def _check_ciphertext(value: int, n: int) -> None:
    if not 0 < value < n * n or math.gcd(value, n) != 1:
        raise MalformedCiphertextError("ciphertext is zero, out of range, or not a unit mod n")


def raw_decrypt(value: int, sk: PaillierPrivateKey) -> int:
    _check_ciphertext(value, sk.n)
    nn = sk.n * sk.n
    return _L(_powmod(value, sk.lambda_, nn), sk.n) * sk.mu % sk.n


def decrypt(c: Ciphertext, sk: PaillierPrivateKey) -> Plaintext:
    if c.n != sk.n:
        raise KeyMismatchError("ciphertext was produced under a different key")
    return Plaintext(raw_decrypt(c.value, sk), sk.n)


# -- homomorphic operations -------------------------------------------------

def _same_key(pk: PaillierPublicKey, *cs: Ciphertext) -> None:
    for c in cs:
        if c.n != pk.n:
            raise KeyMismatchError("ciphertext was produced under a different key")


def homomorphic_add(c1: Ciphertext, c2: Ciphertext, pk: PaillierPublicKey) -> Ciphertext:
    _same_key(pk, c1, c2)
    return Ciphertext(c1.value * c2.value % pk.n_squared, pk.n)


def scalar_multiply(c: Ciphertext, s: int, pk: PaillierPublicKey) -> Ciphertext:
    """``c**s mod n**2``; negative ``s`` is taken mod ``n``."""
    _same_key(pk, c)
    return Ciphertext(_powmod(c.value, s % pk.n, pk.n_squared), pk.n)


def rerandomize(c: Ciphertext, pk: PaillierPublicKey, rng=None) -> Ciphertext:
    _same_key(pk, c)
    blind = _powmod(random_unit(pk, rng), pk.n, pk.n_squared)
    return Ciphertext(c.value * blind % pk.n_squared, pk.n)


# -- key files -------------------------------------------------------------

def public_key_to_dict(pk: PaillierPublicKey) -> dict:
    return {"format": "hvhash-paillier-public", "version": KEY_FILE_VERSION,
            "key_bits": pk.key_bits, "n": format(pk.n, "x")}


def private_key_to_dict(sk: PaillierPrivateKey) -> dict:
    return {"format": "hvhash-paillier-private", "version": KEY_FILE_VERSION,
            "key_bits": sk.n.bit_length(), "n": format(sk.n, "x"),
            "lambda": format(sk.lambda_, "x"), "mu": format(sk.mu, "x")}


def _check_header(doc: dict, kind: str) -> None:
    if doc.get("format") != f"hvhash-paillier-{kind}":
        raise PaillierError(f"not a {kind} key file")
    if doc.get("version") != KEY_FILE_VERSION:
        raise PaillierError(f"unsupported key file version {doc.get('version')!r}")


def public_key_from_dict(doc: dict) -> PaillierPublicKey:
    _check_header(doc, "public")
    pk = PaillierPublicKey.from_modulus(int(doc["n"], 16))
    if pk.key_bits != doc["key_bits"]:
        raise PaillierError("key_bits does not match modulus")
    return pk


def private_key_from_dict(doc: dict) -> PaillierPrivateKey:
    _check_header(doc, "private")
    return PaillierPrivateKey(lambda_=int(doc["lambda"], 16), mu=int(doc["mu"], 16),
                              n=int(doc["n"], 16))


def save_keypair(pk: PaillierPublicKey, sk: PaillierPrivateKey, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pub, priv = directory / "public.key", directory / "private.key"
    pub.write_text(json.dumps(public_key_to_dict(pk), indent=2) + "\n")
    priv.write_text(json.dumps(private_key_to_dict(sk), indent=2) + "\n")
    return pub, priv


def load_public_key(path: str | Path) -> PaillierPublicKey:
    return public_key_from_dict(json.loads(Path(path).read_text()))


def load_private_key(path: str | Path) -> PaillierPrivateKey:
    return private_key_from_dict(json.loads(Path(path).read_text()))
