"""Activation tensor container, binary file format, synthesis and statistics.

Tensors are 1-D or 2-D float32 arrays stored row-major in a little-endian
binary format:

    magic "EXAQTNSR" (8 bytes) | version u32 (=1) | ndim u32 (1 or 2) |
    dims u64 each | raw float32 payload

No padding, no checksum; the version field reserves room for both.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"EXAQTNSR"
FORMAT_VERSION = 1


class TensorIOError(ValueError):
    """Base class for tensor file problems."""


class BadMagicError(TensorIOError):
    """File does not start with the tensor magic bytes."""


class TruncatedFileError(TensorIOError):
    """Payload shorter than the declared dims require."""


class NonFiniteError(TensorIOError):
    """Payload contains NaN or Inf."""


@dataclass(frozen=True)
class TensorF32:
    """Immutable 1-D/2-D float32 tensor, row-major."""

    dims: tuple
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (1, 2) or any(d <= 0 for d in dims):
            raise ValueError(f"dims must be 1-D or 2-D with positive sizes, got {dims}")
        data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(-1)
        if data.size != int(np.prod(dims)):
            raise ValueError(f"dims {dims} need {int(np.prod(dims))} values, got {data.size}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("tensor data contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @property
    def array(self) -> np.ndarray:
        """Read-only view shaped to dims."""
        return self.data.reshape(self.dims)

    def rows(self):
        """Iterate rows (a 1-D tensor is a single row)."""
        a = self.array
        if a.ndim == 1:
            yield a
        else:
            for r in a:
                yield r


@dataclass(frozen=True)
class TensorStats:
    """Descriptive statistics; std uses the population (1/n) convention."""

    n: int
    mean: float
    std: float
    min: float
    max: float


def save_tensor(tensor: TensorF32, path) -> None:
    """Write a tensor in the binary format; bit-exact round trip with load_tensor."""
    header = bytearray()
    header += MAGIC
    header += np.uint32(FORMAT_VERSION).tobytes()
    header += np.uint32(len(tensor.dims)).tobytes()
    for d in tensor.dims:
        header += np.uint64(d).tobytes()
    with open(path, "wb") as f:
        f.write(bytes(header))
        f.write(tensor.data.astype("<f4", copy=False).tobytes())


def load_tensor(path) -> TensorF32:
    """Read a tensor file; raises a distinct error per failure mode."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: missing tensor magic")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise TruncatedFileError(f"{path}: header truncated")
    version = int(np.frombuffer(raw, "<u4", 1, off)[0])
    if version != FORMAT_VERSION:
        raise TensorIOError(f"{path}: unsupported format version {version}")
    ndim = int(np.frombuffer(raw, "<u4", 1, off + 4)[0])
    if ndim not in (1, 2):
        raise TensorIOError(f"{path}: ndim must be 1 or 2, got {ndim}")
    off += 8
    if len(raw) < off + 8 * ndim:
        raise TruncatedFileError(f"{path}: dims truncated")
    dims = tuple(int(d) for d in np.frombuffer(raw, "<u8", ndim, off))
    off += 8 * ndim
    count = int(np.prod(dims))
    if len(raw) < off + 4 * count:
        raise TruncatedFileError(
            f"{path}: payload has {(len(raw) - off) // 4} floats, dims {dims} need {count}"
        )
    data = np.frombuffer(raw, "<f4", count, off).copy()
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{path}: payload contains non-finite values")
    return TensorF32(dims, data)


def gen_gaussian_tensor(rows: int, cols: int, mu: float, sigma: float, seed: int) -> TensorF32:
    """Sample rows x cols i.i.d. N(mu, sigma^2) values.

    Uses numpy's PCG64 generator (ziggurat normals); a given seed reproduces
    the identical tensor on any run of the same build.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    data = rng.normal(mu, sigma, size=rows * cols).astype(np.float32)
    # a single row stays 1-D; anything else keeps the explicit 2-D shape
    dims = (rows, cols) if rows >= 2 else (cols,)
    return TensorF32(dims, data)


def tensor_stats(tensor: TensorF32) -> TensorStats:
    """Single-pass count/mean/std(population)/min/max over all elements."""
    a = tensor.data.astype(np.float64)
    if a.size == 0:
        raise ValueError("empty tensor")
    return TensorStats(
        n=int(a.size),
        mean=float(a.mean()),
        std=float(a.std()),
        min=float(a.min()),
        max=float(a.max()),
    )
