"""Perceptual video hashing in the plaintext and Paillier-encrypted domains."""
