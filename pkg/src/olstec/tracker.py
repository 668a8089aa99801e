"""Recursive-least-squares subspace tracker for streaming slices.

Each incoming slice first gets its per-step weight vector b from a small
ridge solve against the current factors, then every row of A and every
row of C is refreshed by an exponentially weighted recursive least
squares update. Three state variants trade fidelity for cost:

* "full": one R x R positive-definite matrix per factor row, refreshed
  and solved on every step. Cost per step is
  O(|observed| R^2 + (L + W) R^3).
* "window": same row matrices, but contributions older than V steps are
  subtracted back out, so only the trailing V slices influence the
  state. Identical to "full" until the buffer first fills.
* "simplified": keeps only the diagonal of each row matrix, which turns
  every row solve into elementwise division and lets the whole update
  run batched. Cost per step is O(|observed| R + (L + W) R).

The forgetting factor lam in (0, 1] discounts old contributions; lam = 1
never forgets. The regularizer mu keeps every row matrix positive
definite; its recursive increment is mu * (1 - lam) per step so that the
accumulated regularization stays bounded by mu.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import CpFactors, Dims, SliceObservation, reconstruct_slice
from .exceptions import ConfigError, ShapeError, SingularGramError
from .metrics import normalized_residual

VARIANTS = ("full", "simplified", "window")
ORDERINGS = ("gauss-seidel", "jacobi")


@dataclass(frozen=True)
class TrackerConfig:
    """Hyperparameters of the recursive tracker.

    Attributes:
        rank: number of factor columns R, >= 1.
        forgetting: exponential discount lam in (0, 1].
        mu: ridge regularizer, > 0. Used both in the per-step weight
            solve and in the row-matrix recursion.
        gamma: inverse scale of the initial row matrices; each starts as
            (1 / gamma) * I. The string "auto" picks gamma = 1 / mu,
            which makes the initial matrix equal the regularization
            floor mu * I.
        variant: "full", "simplified" or "window".
        window_len: trailing window length V >= 1, required for the
            "window" variant and ignored otherwise.
        ordering: "gauss-seidel" refreshes C against the already updated
            A within the same step; "jacobi" updates both factors from
            the previous step's values.
        seed: seed for the random initial factors.
    """

    rank: int
    forgetting: float = 0.7
    mu: float = 1e-3
    gamma: Union[float, str] = "auto"
    variant: str = "full"
    window_len: Optional[int] = None
    ordering: str = "gauss-seidel"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if not 0.0 < self.forgetting <= 1.0:
            raise ConfigError(
                f"forgetting factor must lie in (0, 1], got {self.forgetting}"
            )
        if not self.mu > 0.0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.gamma != "auto":
            try:
                ok = float(self.gamma) > 0.0
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError(
                    f'gamma must be a positive number or "auto", got {self.gamma!r}'
                )
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )
        if self.variant == "window":
            if self.window_len is None or self.window_len < 1:
                raise ConfigError(
                    "window variant needs window_len >= 1, got "
                    f"{self.window_len!r}"
                )
        if self.ordering not in ORDERINGS:
            raise ConfigError(
                f"ordering must be one of {ORDERINGS}, got {self.ordering!r}"
            )

    @property
    def gamma_value(self) -> float:
        return 1.0 / self.mu if self.gamma == "auto" else float(self.gamma)


@dataclass
class StepSnapshot:
    """Per-step quantities kept by the window variant for later removal."""

    values: np.ndarray
    mask: np.ndarray
    alpha: np.ndarray  # W x R, weight-scaled C rows used in the A phase
    beta: np.ndarray  # L x R, weight-scaled A rows used in the C phase


@dataclass
class TrackerState:
    """Mutable tracker state: factor triple plus per-row RLS matrices.

    gram_a[l] and gram_c[w] are the R x R row matrices of the full and
    window variants; diag_a[l] and diag_c[w] are their length-R diagonal
    stand-ins in the simplified variant. Only one pair is populated.
    """

    factors: CpFactors
    t: int = 0
    gram_a: Optional[np.ndarray] = None  # L x R x R
    gram_c: Optional[np.ndarray] = None  # W x R x R
    diag_a: Optional[np.ndarray] = None  # L x R
    diag_c: Optional[np.ndarray] = None  # W x R
    history: deque = field(default_factory=deque)


@dataclass
class StepOutput:
    """Everything produced by one tracker step.

    reconstruction uses post-update factors; prediction is the slice the
    pre-update factors would have produced (with the fresh b), i.e. the
    honest one-step-ahead estimate.
    """

    t: int
    b: np.ndarray
    reconstruction: np.ndarray
    prediction: np.ndarray
    residual_observed: float
    residual_truth: Optional[float] = None


def solve_weights(
    A: np.ndarray,
    C: np.ndarray,
    values: np.ndarray,
    mask: np.ndarray,
    mu: float,
) -> np.ndarray:
    """Ridge solve for the per-step weight vector b.

    Minimizes sum over observed (l, w) of (values[l, w] - g_{lw} @ b)^2
    plus mu * ||b||^2, where g_{lw} = A[l] * C[w]. With no observed
    entries the minimizer is the zero vector.

    Raises:
        SingularGramError: if the regularized normal matrix cannot be
            factorized (mu too small or zero rows); increase mu.
    """
    rank = A.shape[1]
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return np.zeros(rank)
    G = A[rows] * C[cols]
    lhs = mu * np.eye(rank) + G.T @ G
    rhs = G.T @ values[rows, cols]
    try:
        return cho_solve(cho_factor(lhs), rhs)
    except LinAlgError as exc:
        raise SingularGramError(
            "weight solve failed: the regularized normal matrix is not "
            "positive definite; increase the regularizer mu (> 0)"
        ) from exc


def rls_row_update(
    gram: np.ndarray,
    coef: np.ndarray,
    vecs: np.ndarray,
    vals: np.ndarray,
    forgetting: float,
    mu_delta: float,
    old_vecs: Optional[np.ndarray] = None,
    old_vals: Optional[np.ndarray] = None,
    old_weight: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """One recursive least-squares refresh of a single factor row.

    Args:
        gram: R x R row matrix from the previous step.
        coef: length-R row coefficients from the previous step.
        vecs: n x R regressors observed this step (n may be 0).
        vals: length-n observed targets.
        forgetting: discount applied to the old row matrix.
        mu_delta: regularization increment mu * (1 - forgetting).
        old_vecs / old_vals: regressors and targets leaving a trailing
            window, or None when nothing is removed.
        old_weight: discount accumulated over the window, lam ** V.

    Returns:
        (new gram, new coef). The new gram is freshly allocated; inputs
        are not modified.
    """
    rank = coef.shape[0]
    new_gram = forgetting * gram + vecs.T @ vecs + mu_delta * np.eye(rank)
    rhs = vecs.T @ (vals - vecs @ coef) - mu_delta * coef
    if old_vecs is not None:
        new_gram = new_gram - old_weight * (old_vecs.T @ old_vecs)
        rhs = rhs - old_weight * (old_vecs.T @ (old_vals - old_vecs @ coef))
    try:
        step = cho_solve(cho_factor(new_gram), rhs)
    except LinAlgError as exc:
        raise SingularGramError(
            "row update failed: the recursive row matrix is not positive "
            "definite; increase mu or shorten the window"
        ) from exc
    return new_gram, coef + step


def _batched_phase(
    gram: np.ndarray,
    coef: np.ndarray,
    regressors: np.ndarray,
    values: np.ndarray,
    mask: np.ndarray,
    forgetting: float,
    mu_delta: float,
    old_regressors: Optional[np.ndarray] = None,
    old_values: Optional[np.ndarray] = None,
    old_mask: Optional[np.ndarray] = None,
    old_weight: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """RLS refresh of every row of one factor in a single stacked pass.

    Row i receives the update rls_row_update would produce from the
    regressors its mask row selects; the per-row loop is replaced by
    stacked matmuls and one batched solve. Unobserved residuals are
    zeroed through the mask (np.where, so garbage values outside the
    mask never propagate).

    Args:
        gram: rows x R x R stacked row matrices.
        coef: rows x R factor matrix from the previous step.
        regressors: n x R shared regressor matrix (weight-scaled rows of
            the opposite factor).
        values / mask: rows x n observed slice and support, oriented so
            that axis 1 runs over the regressor index.
        old_*: the expiring snapshot for the window variant, None
            otherwise; old_weight is the accumulated discount lam ** V.

    Returns:
        (new grams, new coefs), freshly allocated.
    """
    rank = coef.shape[1]
    maskf = mask.astype(np.float64)
    increment = (maskf[:, :, None] * regressors).transpose(0, 2, 1) @ regressors
    new_gram = forgetting * gram + increment + mu_delta * np.eye(rank)
    resid = np.where(mask, values - coef @ regressors.T, 0.0)
    rhs = resid @ regressors - mu_delta * coef
    if old_regressors is not None:
        omaskf = old_mask.astype(np.float64)
        expired = (omaskf[:, :, None] * old_regressors).transpose(0, 2, 1)
        new_gram = new_gram - old_weight * (expired @ old_regressors)
        oresid = np.where(old_mask, old_values - coef @ old_regressors.T, 0.0)
        rhs = rhs - old_weight * (oresid @ old_regressors)
    try:
        step = np.linalg.solve(new_gram, rhs[:, :, None])[:, :, 0]
    except LinAlgError as exc:
        raise SingularGramError(
            "row update failed: the recursive row matrix is not positive "
            "definite; increase mu or shorten the window"
        ) from exc
    return new_gram, coef + step


def initial_state(dims: Dims, config: TrackerConfig) -> TrackerState:
    """Fresh state: standard-normal factors, scaled-identity row matrices.

    Factors are drawn A, then C, then b from one seeded generator. The
    initial b is a placeholder; it is replaced before first use.
    """
    rng = np.random.default_rng(config.seed)
    A = rng.standard_normal((dims.L, config.rank))
    C = rng.standard_normal((dims.W, config.rank))
    b = rng.standard_normal(config.rank)
    factors = CpFactors(A, C, b)
    state = TrackerState(factors=factors)
    scale = 1.0 / config.gamma_value
    if config.variant == "simplified":
        state.diag_a = np.full((dims.L, config.rank), scale)
        state.diag_c = np.full((dims.W, config.rank), scale)
    else:
        eye = scale * np.eye(config.rank)
        state.gram_a = np.broadcast_to(eye, (dims.L, config.rank, config.rank)).copy()
        state.gram_c = np.broadcast_to(eye, (dims.W, config.rank, config.rank)).copy()
    return state


class OlstecTracker:
    """Streaming CP-factor tracker over partially observed slices.

    Feed slices in step order through step(); the tracker maintains the
    factor matrices and per-row second-order state across calls.

    >>> tracker = OlstecTracker(Dims(8, 6, 2), TrackerConfig(rank=2))
    >>> out = tracker.step(SliceObservation(1, values, mask))
    """

    def __init__(self, dims: Dims, config: TrackerConfig):
        if config.rank != dims.R:
            raise ConfigError(
                f"config rank {config.rank} does not match dims rank {dims.R}"
            )
        self.dims = dims
        self.config = config
        self.state = initial_state(dims, config)

    @property
    def factors(self) -> CpFactors:
        return self.state.factors

    @property
    def t(self) -> int:
        return self.state.t

    def step(
        self, obs: SliceObservation, truth: Optional[np.ndarray] = None
    ) -> StepOutput:
        """Consume one slice and refresh all factor state.

        Args:
            obs: the partially observed slice for this step.
            truth: optional noiseless reference slice; when given, the
                output carries a residual against it over all entries.

        Returns:
            StepOutput with the new weights, both reconstructions and
            the normalized residuals.
        """
        L, W = self.dims.L, self.dims.W
        if obs.shape != (L, W):
            raise ShapeError(
                f"slice shape {obs.shape} does not match tracker dims ({L}, {W})"
            )
        cfg = self.config
        state = self.state
        A_prev = state.factors.A
        C_prev = state.factors.C

        b = solve_weights(A_prev, C_prev, obs.values, obs.mask, cfg.mu)
        prediction = (A_prev * b) @ C_prev.T

        if cfg.variant == "simplified":
            A_new, C_new = self._step_simplified(obs, b)
        else:
            A_new, C_new = self._step_full(obs, b)

        state.factors = CpFactors(A_new, C_new, b)
        state.t += 1

        reconstruction = reconstruct_slice(state.factors)
        residual_observed = normalized_residual(
            reconstruction, obs.values, mode="observed", mask=obs.mask
        )
        residual_truth = None
        if truth is not None:
            residual_truth = normalized_residual(reconstruction, truth, mode="full")
        return StepOutput(
            t=state.t,
            b=b,
            reconstruction=reconstruction,
            prediction=prediction,
            residual_observed=residual_observed,
            residual_truth=residual_truth,
        )

    def _step_full(
        self, obs: SliceObservation, b: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Shared path of the full and window variants.

        All row matrices of one factor are refreshed in a single batched
        pass; rls_row_update spells out the same arithmetic for one row
        and serves as the reference in tests. The window variant differs
        only in subtracting an expiring snapshot inside each pass; until
        its buffer holds window_len steps the two variants execute the
        exact same operations.
        """
        cfg = self.config
        state = self.state
        mask = obs.mask
        values = obs.values
        A_prev = state.factors.A
        C_prev = state.factors.C
        mu_delta = cfg.mu * (1.0 - cfg.forgetting)

        old: Optional[StepSnapshot] = None
        old_weight = 0.0
        if cfg.variant == "window" and len(state.history) == cfg.window_len:
            old = state.history[0]
            old_weight = cfg.forgetting**cfg.window_len

        alpha = b * C_prev  # row w holds the regressor for entry (l, w)
        state.gram_a, A_new = _batched_phase(
            state.gram_a, A_prev, alpha, values, mask, cfg.forgetting, mu_delta,
            old_regressors=None if old is None else old.alpha,
            old_values=None if old is None else old.values,
            old_mask=None if old is None else old.mask,
            old_weight=old_weight,
        )

        a_source = A_new if cfg.ordering == "gauss-seidel" else A_prev
        beta = b * a_source  # row l holds the regressor for entry (l, w)
        state.gram_c, C_new = _batched_phase(
            state.gram_c, C_prev, beta, values.T, mask.T, cfg.forgetting, mu_delta,
            old_regressors=None if old is None else old.beta,
            old_values=None if old is None else old.values.T,
            old_mask=None if old is None else old.mask.T,
            old_weight=old_weight,
        )

        if cfg.variant == "window":
            state.history.append(
                StepSnapshot(values=values.copy(), mask=mask.copy(), alpha=alpha, beta=beta)
            )
            if len(state.history) > cfg.window_len:
                state.history.popleft()
        return A_new, C_new

    def _step_simplified(
        self, obs: SliceObservation, b: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal-state update; every row handled in one batched pass."""
        cfg = self.config
        state = self.state
        mask = obs.mask
        A_prev = state.factors.A
        C_prev = state.factors.C
        mu_delta = cfg.mu * (1.0 - cfg.forgetting)
        maskf = mask.astype(np.float64)

        alpha = b * C_prev
        resid = np.where(mask, obs.values - A_prev @ alpha.T, 0.0)
        state.diag_a = cfg.forgetting * state.diag_a + maskf @ alpha**2 + mu_delta
        A_new = A_prev + (resid @ alpha - mu_delta * A_prev) / state.diag_a

        a_source = A_new if cfg.ordering == "gauss-seidel" else A_prev
        beta = b * a_source
        resid = np.where(mask, obs.values - beta @ C_prev.T, 0.0)
        state.diag_c = cfg.forgetting * state.diag_c + maskf.T @ beta**2 + mu_delta
        C_new = C_prev + (resid.T @ beta - mu_delta * C_prev) / state.diag_c
        return A_new, C_new


def make_tracker(dims: Dims, config: TrackerConfig, **overrides) -> OlstecTracker:
    """Convenience constructor allowing field overrides on the config."""
    if overrides:
        config = replace(config, **overrides)
    return OlstecTracker(dims, config)


def window_discount(forgetting: float, window_len: int) -> float:
    """Discount a contribution accumulates while crossing the window."""
    return math.pow(forgetting, window_len)
