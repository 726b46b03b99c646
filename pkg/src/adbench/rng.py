"""Portable seeded permutations.

The generator is SplitMix64 (Steele, Lea & Flood 2014). Bounded integers use
rejection sampling on the top of the 64-bit range, and permutations are a
descending Fisher-Yates shuffle::

    for i = n-1 down to 1:
        j = bounded(i + 1)
        swap(a[i], a[j])

Any language with 64-bit unsigned arithmetic reproduces the same sequence.
"""

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def bounded(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` without modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def permutation(n: int, seed: int) -> list[int]:
    """Seeded Fisher-Yates permutation of ``range(n)``."""
    gen = SplitMix64(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = gen.bounded(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
