"""Residual metrics and their running aggregation.

All residuals are relative: squared error over squared reference norm.
A zero-norm reference makes the ratio undefined; that is reported as
NaN rather than raised, so a degenerate slice never kills a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import masked_frobenius_sq
from .exceptions import ConfigError, ShapeError

MODES = ("full", "observed")


def normalized_residual(
    estimate: np.ndarray,
    reference: np.ndarray,
    mode: str = "full",
    mask: Optional[np.ndarray] = None,
) -> float:
    """||estimate - reference||_F^2 / ||reference||_F^2 over a chosen support.

    Args:
        estimate: reconstructed slice.
        reference: ground truth ("full" mode) or observed values
            ("observed" mode).
        mode: "full" compares every entry; "observed" restricts both
            norms to the masked entries.
        mask: boolean support, required for "observed" mode.

    Returns:
        The ratio, or NaN when the reference norm is zero.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if estimate.shape != reference.shape:
        raise ShapeError(
            f"estimate shape {estimate.shape} != reference shape {reference.shape}"
        )
    if mode == "observed":
        if mask is None:
            raise ConfigError('mode "observed" requires a mask')
        num = masked_frobenius_sq(estimate, reference, mask)
        ref = reference[np.asarray(mask, dtype=bool)]
        den = float(ref @ ref)
    else:
        diff = (estimate - reference).ravel()
        num = float(diff @ diff)
        ref = reference.ravel()
        den = float(ref @ ref)
    if den == 0.0:
        return float("nan")
    return num / den


class RunningAverage:
    """Arithmetic mean of a stream of scalars, one update() per step."""

    def __init__(self) -> None:
        self.total = 0.0
        self.count = 0

    def update(self, value: float) -> float:
        self.total += value
        self.count += 1
        return self.total / self.count

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else float("nan")


@dataclass
class MetricsRecord:
    """Per-step log row: residual, its running mean, wall time."""

    t: int
    residual: float
    running_avg: float
    elapsed_ms: float
