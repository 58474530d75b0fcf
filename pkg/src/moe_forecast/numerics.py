"""Dense float64 storage helpers, seeded randomness and parameter initialisation.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Random draws go
through ``numpy.random.Generator`` backed by the PCG64 bit generator, whose
output stream for a given seed is fixed by numpy's stream-compatibility
policy and does not depend on the platform.
"""

from __future__ import annotations

import enum
import hashlib

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when array shapes are incompatible."""


class InitScheme(enum.Enum):
    ZEROS = "zeros"
    UNIFORM_KAIMING = "uniform_kaiming"
    SMALL_UNIFORM = "small_uniform"


SMALL_UNIFORM_SCALE = 0.01


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit unsigned seed."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(root: int, *labels: object) -> int:
    """Deterministic sub-seed for a named component of a run."""
    text = ":".join([str(int(root))] + [str(label) for label in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def init_params(shape: tuple[int, int], scheme: InitScheme, rng: np.random.Generator) -> np.ndarray:
    """Draw a ``rows x cols`` matrix according to ``scheme``.

    ``UNIFORM_KAIMING`` samples U(-b, b) with ``b = sqrt(6 / fan_in)`` where
    ``fan_in = cols``; ``SMALL_UNIFORM`` samples U(-0.01, 0.01).
    """
    rows, cols = (int(s) for s in shape)
    if rows < 1 or cols < 1:
        raise ShapeError(f"init_params needs positive dimensions, got {rows}x{cols}")
    if scheme is InitScheme.ZEROS:
        return np.zeros((rows, cols), dtype=DTYPE)
    if scheme is InitScheme.UNIFORM_KAIMING:
        bound = np.sqrt(6.0 / cols)
    elif scheme is InitScheme.SMALL_UNIFORM:
        bound = SMALL_UNIFORM_SCALE
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(DTYPE, copy=False)


def check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"non-finite values in {what}")
