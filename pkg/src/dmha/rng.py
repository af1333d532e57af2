"""Named, seedable random streams on a counter-based generator"""

import hashlib

import numpy as np


class RandomStreams:
    """
    Factory of independent random streams derived from one seed.

    Every stochastic operation takes an explicit numpy Generator. Streams
    are keyed by (seed, name, indices) so the same key always yields the
    same sequence, no matter which thread asks for it or in which order.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def key(self, name: str, *indices) -> int:
        """128-bit Philox key for a stream name and optional indices"""
        text = f"{self.seed}|{name}|" + "|".join(str(i) for i in indices)
        digest = hashlib.blake2b(text.encode('utf-8'), digest_size=16).digest()
        return int.from_bytes(digest, 'little')

    def stream(self, name: str, *indices) -> np.random.Generator:
        """Get a fresh generator for the named stream"""
        return np.random.Generator(np.random.Philox(key=self.key(name, *indices)))

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed})"


def create_streams(seed: int) -> RandomStreams:
    """
    Factory function to create random streams.

    Args:
        seed: Master seed of the run

    Returns:
        RandomStreams: Stream factory for that seed
    """
    return RandomStreams(seed)
