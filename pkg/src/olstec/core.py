"""Slice containers and rank-R bilinear reconstruction primitives.

A data stream is a sequence of L x W matrix slices indexed by a step
counter t = 1, 2, ... Each slice is modeled as A @ diag(b) @ C.T where
A (L x R) and C (W x R) hold the spatial factors and b (length R) holds
the per-step weights. Observations may be partial: a boolean mask marks
which entries of a slice were actually seen.

Indices are 0-based everywhere in this API.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError


@dataclass(frozen=True)
class Dims:
    """Problem geometry: slice height L, slice width W, factor rank R."""

    L: int
    W: int
    R: int

    def __post_init__(self) -> None:
        for name in ("L", "W", "R"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ShapeError(f"{name} must be a positive integer, got {value!r}")
        if self.R > min(self.L, self.W):
            warnings.warn(
                f"rank {self.R} exceeds min(L, W) = {min(self.L, self.W)}; "
                "the factorization is overcomplete",
                stacklevel=2,
            )


@dataclass
class SliceObservation:
    """One partially observed slice of the stream.

    Attributes:
        t: step index, starting at 1 for the first slice.
        values: L x W float array. Entries where mask is False are
            ignored by every consumer and may hold garbage.
        mask: L x W boolean array, True where the entry was observed.
    """

    t: int
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.t < 1:
            raise ShapeError(f"step index must be >= 1, got {self.t}")
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise ShapeError(f"values must be 2-D, got shape {self.values.shape}")
        if self.mask.shape != self.values.shape:
            raise ShapeError(
                f"mask shape {self.mask.shape} does not match values shape "
                f"{self.values.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())


@dataclass
class CpFactors:
    """The factor triple (A, C, b) for one step's slice model.

    A is L x R, C is W x R, b has length R. A and C persist across
    steps; b is re-estimated for every slice.
    """

    A: np.ndarray
    C: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.A.ndim != 2 or self.C.ndim != 2 or self.b.ndim != 1:
            raise ShapeError(
                f"expected A 2-D, C 2-D, b 1-D; got {self.A.shape}, "
                f"{self.C.shape}, {self.b.shape}"
            )
        if not (self.A.shape[1] == self.C.shape[1] == self.b.shape[0]):
            raise ShapeError(
                f"rank mismatch: A has {self.A.shape[1]} columns, C has "
                f"{self.C.shape[1]}, b has length {self.b.shape[0]}"
            )

    @property
    def rank(self) -> int:
        return self.b.shape[0]

    @property
    def dims(self) -> Dims:
        return Dims(self.A.shape[0], self.C.shape[0], self.rank)

    def copy(self) -> "CpFactors":
        return CpFactors(self.A.copy(), self.C.copy(), self.b.copy())


def reconstruct_slice(factors: CpFactors) -> np.ndarray:
    """Dense L x W reconstruction A @ diag(b) @ C.T."""
    return (factors.A * factors.b) @ factors.C.T


def entry_product_g(factors: CpFactors, l: int, w: int) -> np.ndarray:
    """Elementwise product of factor rows for one slice entry.

    Returns the length-R vector g = A[l] * C[w]. The model value of
    entry (l, w) is then the inner product g @ b.

    Raises:
        IndexError: if l or w falls outside the slice.
    """
    L, W = factors.A.shape[0], factors.C.shape[0]
    if not 0 <= l < L:
        raise IndexError(f"row index {l} out of range [0, {L})")
    if not 0 <= w < W:
        raise IndexError(f"column index {w} out of range [0, {W})")
    return factors.A[l] * factors.C[w]


def masked_frobenius_sq(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    """Squared Frobenius distance between x and y over masked entries only.

    Unobserved entries never enter the sum, so non-finite garbage outside
    the mask is harmless.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.shape != y.shape or x.shape != mask.shape:
        raise ShapeError(
            f"shape mismatch: {x.shape}, {y.shape}, mask {mask.shape}"
        )
    diff = x[mask] - y[mask]
    return float(diff @ diff)
