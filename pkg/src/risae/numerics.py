"""Deterministic numeric helpers shared by every other module.

Complex baseband data are plain ``numpy.complex128`` arrays. Their memory
layout is already interleaved ``(re, im)`` pairs, so converting to the real
``[re0, im0, re1, im1, ...]`` form used at the neural-network boundary is a
zero-copy view.
"""

from __future__ import annotations

import numpy as np


def _scalar_or_array(v):
    return float(v) if np.ndim(v) == 0 else v


def db_to_linear_power(x_db):
    """Power ratio for a dB value, ``10**(x/10)``."""
    return _scalar_or_array(10.0 ** (np.asarray(x_db, dtype=np.float64) / 10.0))


def db_to_linear_amplitude(x_db):
    """Amplitude ratio for a dB value, ``10**(x/20)``."""
    return _scalar_or_array(10.0 ** (np.asarray(x_db, dtype=np.float64) / 20.0))


def linear_power_to_db(x):
    return 10.0 * np.log10(x)


def complex_vector(values) -> np.ndarray:
    """Validate and return ``values`` as a 1-D complex128 array.

    Raises ``ValueError`` for empty input or non-finite entries.
    """
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D complex vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("complex vector must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError("complex vector has non-finite entries")
    return arr


def to_interleaved(z: np.ndarray) -> np.ndarray:
    """``(..., n)`` complex -> ``(..., 2n)`` real with re at even, im at odd indices."""
    z = np.ascontiguousarray(z, dtype=np.complex128)
    return z.view(np.float64)


def from_interleaved(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_interleaved`; last axis must be even."""
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.shape[-1] % 2:
        raise ValueError("interleaved array needs an even last dimension")
    return r.view(np.complex128)


def hadamard_product(a, b) -> np.ndarray:
    """Elementwise complex product of two equal-length vectors."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a * b


class RngStream:
    """Seeded random stream identified by ``(seed, stream_id)``.

    Uniform doubles come from PCG64 keyed by ``SeedSequence(seed,
    spawn_key=(stream_id, ...))``. Gaussian samples use the Box-Muller
    transform on those uniforms rather than numpy's ziggurat, so sequences
    depend only on the PCG64 double stream::

        z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)

    with ``u1 = 1 - U[0,1)`` so the log argument is never zero.
    """

    def __init__(self, seed: int, stream_id: int = 0, *, _path: tuple[int, ...] = ()):
        if not (0 <= int(seed) < 2**64) or not (0 <= int(stream_id) < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream; depends only on this stream's identity and ``index``."""
        return RngStream(self.seed, self.stream_id, _path=(*self._path, int(index)))

    def uniform(self, size) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size) -> np.ndarray:
        """Uniform integers in ``[low, high)``."""
        return self._gen.integers(low, high, size=size, dtype=np.int64)

    def standard_normal(self, n: int) -> np.ndarray:
        n = int(n)
        pairs = (n + 1) // 2
        u = self._gen.random((2, pairs))
        radius = np.sqrt(-2.0 * np.log1p(-u[0]))
        angle = 2.0 * np.pi * u[1]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n]


def sample_complex_gaussian(rng: RngStream, n: int, variance: float) -> np.ndarray:
    """``n`` circular complex Gaussian samples with ``E|z|^2 = variance``."""
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    z = rng.standard_normal(2 * int(n)).view(np.complex128)
    return np.sqrt(variance / 2.0) * z
