"""
Additive encryption in a few lines
==================================

Encrypt two numbers, add them without decrypting, then scale the sum.
"""

from hvhash import paillier

# a toy key first, small enough to check by hand
pk, sk = paillier.keypair_from_primes(5, 7)
c = paillier.encrypt(4, pk, r=2)
print("E(4) with r=2:", c.value)              # 88
print("D(88):", paillier.decrypt(c, sk).value)

# a real-sized key
pk, sk = paillier.generate_keypair(512, rng_seed=1)
a = paillier.encrypt(1200, pk)
b = paillier.encrypt(paillier.encode_signed(-345, pk.n), pk)   # negatives wrap modulo n
total = paillier.homomorphic_add(a, b, pk)
print("1200 + (-345) =", paillier.decrypt(total, sk).signed())

tripled = paillier.scalar_multiply(total, 3, pk)
print("3 * 855 =", paillier.decrypt(tripled, sk).signed())

# rerandomizing changes the ciphertext but not what it hides
fresh = paillier.rerandomize(tripled, pk)
print("same ciphertext?", fresh.value == tripled.value,
      "| same plaintext?", paillier.decrypt(fresh, sk).value == paillier.decrypt(tripled, sk).value)
