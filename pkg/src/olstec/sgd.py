"""First-order baseline: plain gradient steps on the factor matrices.

Shares the per-step weight solve with the recursive tracker but replaces
the second-order row updates with a single fixed-stepsize gradient step
on the regularized masked least-squares loss

    f(A, C) = 0.5 * ||mask * (Y - A diag(b) C^T)||_F^2
              + 0.5 * mu * (||A||_F^2 + ||C||_F^2).

Both factor gradients are taken at the pre-step factors, so the A and C
updates are independent of each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CpFactors, Dims, SliceObservation, reconstruct_slice
from .exceptions import ConfigError, ShapeError
from .metrics import normalized_residual
from .tracker import StepOutput, solve_weights


@dataclass(frozen=True)
class SgdConfig:
    """Baseline hyperparameters.

    forgetting is accepted for interface parity with the recursive
    tracker's configuration; the gradient update itself does not use it.
    """

    rank: int
    forgetting: float = 0.001
    mu: float = 0.1
    stepsize: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if not 0.0 < self.forgetting <= 1.0:
            raise ConfigError(
                f"forgetting factor must lie in (0, 1], got {self.forgetting}"
            )
        if self.mu < 0.0:
            raise ConfigError(f"mu must be >= 0, got {self.mu}")
        if not self.stepsize > 0.0:
            raise ConfigError(f"stepsize must be positive, got {self.stepsize}")


def factor_gradients(
    A: np.ndarray,
    C: np.ndarray,
    b: np.ndarray,
    values: np.ndarray,
    mask: np.ndarray,
    mu: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the masked regularized loss w.r.t. A and C.

    Returns (grad_A, grad_C), both evaluated at the given factors.
    """
    resid = np.where(mask, values - (A * b) @ C.T, 0.0)
    grad_A = -resid @ (C * b) + mu * A
    grad_C = -resid.T @ (A * b) + mu * C
    return grad_A, grad_C


class SgdTracker:
    """Streaming factor tracker driven by fixed-stepsize gradient steps.

    Interface mirrors OlstecTracker.step so runners can treat both
    uniformly.
    """

    def __init__(self, dims: Dims, config: SgdConfig):
        if config.rank != dims.R:
            raise ConfigError(
                f"config rank {config.rank} does not match dims rank {dims.R}"
            )
        self.dims = dims
        self.config = config
        rng = np.random.default_rng(config.seed)
        A = rng.standard_normal((dims.L, config.rank))
        C = rng.standard_normal((dims.W, config.rank))
        b = rng.standard_normal(config.rank)
        self.factors = CpFactors(A, C, b)
        self._t = 0

    @property
    def t(self) -> int:
        return self._t

    def step(
        self, obs: SliceObservation, truth: Optional[np.ndarray] = None
    ) -> StepOutput:
        L, W = self.dims.L, self.dims.W
        if obs.shape != (L, W):
            raise ShapeError(
                f"slice shape {obs.shape} does not match tracker dims ({L}, {W})"
            )
        cfg = self.config
        A_prev, C_prev = self.factors.A, self.factors.C

        b = solve_weights(A_prev, C_prev, obs.values, obs.mask, cfg.mu)
        prediction = (A_prev * b) @ C_prev.T

        grad_A, grad_C = factor_gradients(
            A_prev, C_prev, b, obs.values, obs.mask, cfg.mu
        )
        A_new = A_prev - cfg.stepsize * grad_A
        C_new = C_prev - cfg.stepsize * grad_C

        self.factors = CpFactors(A_new, C_new, b)
        self._t += 1

        reconstruction = reconstruct_slice(self.factors)
        residual_observed = normalized_residual(
            reconstruction, obs.values, mode="observed", mask=obs.mask
        )
        residual_truth = None
        if truth is not None:
            residual_truth = normalized_residual(reconstruction, truth, mode="full")
        return StepOutput(
            t=self._t,
            b=b,
            reconstruction=reconstruction,
            prediction=prediction,
            residual_observed=residual_observed,
            residual_truth=residual_truth,
        )
