"""Dense float64 numerics and seeded random streams.

All arrays in this package are C-order float64 ndarrays; a "matrix" is 2-D
and a "vector" is 1-D.  Randomness always flows through :class:`Rng`, never
through numpy's global state, so every result is reproducible from a
``(seed, stream)`` pair.
"""

import numpy as np

from .errors import ConfigError


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def matvec(a, v) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    a = as_matrix(a)
    v = as_vector(v)
    if a.shape[1] != v.shape[0]:
        raise ConfigError(
            f"matvec dimension mismatch: {a.shape[0]}x{a.shape[1]} @ {v.shape[0]}"
        )
    return a @ v


def sigmoid(x) -> np.ndarray:
    """Element-wise logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(x) -> np.ndarray:
    """Softmax with max-subtraction; sums to 1 within 1e-12."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Rng:
    """Deterministic random stream.

    Uniform doubles come straight from a PCG64 bit generator seeded with
    ``SeedSequence(seed, spawn_key=(stream,))``; that raw stream is stable
    across platforms and numpy releases.  Gaussians use an explicit
    Box-Muller transform (two uniforms per draw, sine branch discarded) so
    the whole draw sequence is pinned by this module, not by numpy's
    distribution code.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(int(n))

    def gaussian(self) -> float:
        return float(self.gaussians(1)[0])

    def gaussians(self, n: int) -> np.ndarray:
        """n standard-normal draws, consuming exactly 2n uniforms."""
        n = int(n)
        u = self._gen.random(2 * n)
        u1 = 1.0 - u[0::2]  # (0, 1]: keeps log finite
        u2 = u[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def bernoulli(self, p: float) -> int:
        return int(self.bernoullis(1, p)[0])

    def bernoullis(self, n: int, p: float) -> np.ndarray:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"bernoulli p must lie in [0, 1], got {p}")
        return (self._gen.random(int(n)) < p).astype(np.float64)

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in [low, high), derived from one uniform."""
        if high <= low:
            raise ConfigError(f"empty integer range [{low}, {high})")
        return low + int(self._gen.random() * (high - low))

    def shuffled(self, items) -> list:
        """Fisher-Yates shuffle driven by this stream; input untouched."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self._gen.random() * (i + 1))
            out[i], out[j] = out[j], out[i]
        return out
