"""Seed derivation shared by every stochastic component."""

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(seed: int, index: int) -> int:
    """Derive a child seed from ``seed`` and a unit index.

    SplitMix64 finalizer applied to ``seed + (index + 1) * golden``; the
    result is a 64-bit unsigned integer usable by ``numpy.random.default_rng``.
    Children of the same parent are decorrelated regardless of evaluation
    order, so parallel and serial runs draw identical streams.
    """
    z = (int(seed) + (int(index) + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)
