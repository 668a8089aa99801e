"""Synthetic slice streams with a slowly rotating factor subspace.

The stream starts from standard-normal factor matrices A (L x R) and
C (W x R). Every step draws fresh weights b, emits the noisy slice
A diag(b) C^T + noise together with a Bernoulli observation mask, then
rotates both factor matrices by a plane rotation of a fixed angle. The
rotation plane walks cyclically through the R - 1 adjacent coordinate
pairs, so over time the whole subspace drifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .core import SliceObservation
from .exceptions import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    """Stream geometry and drift parameters.

    Attributes:
        L, W: slice height and width.
        T: number of steps the stream yields.
        rank: factor rank R, >= 2 (the rotation needs two coordinates).
        angle: per-step rotation angle in radians; 0 freezes the
            subspace.
        noise: standard deviation of the additive entrywise noise.
        ratio: observation probability in (0, 1] for each entry.
        seed: seed for factors, weights and noise.
        mask_seed: separate seed for the observation masks; defaults to
            a stream derived from seed, so masks stay independent of the
            data draws either way.
    """

    L: int
    W: int
    T: int
    rank: int
    angle: float = 0.0
    noise: float = 0.0
    ratio: float = 1.0
    seed: int = 0
    mask_seed: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("L", "W", "T"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.rank < 2:
            raise ConfigError(
                f"rank must be >= 2 for a rotating stream, got {self.rank}"
            )
        if self.angle < 0.0:
            raise ConfigError(f"angle must be >= 0, got {self.angle}")
        if self.noise < 0.0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError(f"ratio must lie in (0, 1], got {self.ratio}")


def rotation_plane(t: int, rank: int) -> int:
    """1-based index of the coordinate pair rotated after step t.

    Cycles 1, 2, ..., rank - 1 and wraps, starting at 1 for t = 1.
    """
    if t < 1:
        raise ConfigError(f"step index must be >= 1, got {t}")
    if rank < 2:
        raise ConfigError(f"rank must be >= 2, got {rank}")
    return (t + rank - 2) % (rank - 1) + 1


def rotation_matrix(t: int, angle: float, rank: int) -> np.ndarray:
    """R x R plane rotation applied to the factors after step t.

    Identity except for a 2 x 2 rotation block whose position cycles
    through adjacent coordinate pairs as t advances.
    """
    p = rotation_plane(t, rank) - 1
    Q = np.eye(rank)
    c, s = np.cos(angle), np.sin(angle)
    Q[p, p] = c
    Q[p, p + 1] = -s
    Q[p + 1, p] = s
    Q[p + 1, p + 1] = c
    return Q


def _streams(config: SynthConfig) -> tuple[np.random.Generator, np.random.Generator]:
    if config.mask_seed is None:
        data_seq, mask_seq = np.random.SeedSequence(config.seed).spawn(2)
        return np.random.default_rng(data_seq), np.random.default_rng(mask_seq)
    return (
        np.random.default_rng(config.seed),
        np.random.default_rng(config.mask_seed),
    )


def generate_stream(
    config: SynthConfig,
) -> Iterator[tuple[SliceObservation, np.ndarray]]:
    """Yield (observation, truth) pairs for t = 1 .. T.

    truth is the noiseless dense slice; the observation carries the
    noisy values and the Bernoulli mask. Per step the draw order on the
    data stream is weights, then noise; masks come from their own
    stream, so changing ratio or mask_seed never changes the data.
    """
    data_rng, mask_rng = _streams(config)
    L, W, R = config.L, config.W, config.rank
    A = data_rng.standard_normal((L, R))
    C = data_rng.standard_normal((W, R))
    for t in range(1, config.T + 1):
        b = data_rng.standard_normal(R)
        truth = (A * b) @ C.T
        values = truth + config.noise * data_rng.standard_normal((L, W))
        mask = mask_rng.random((L, W)) < config.ratio
        yield SliceObservation(t=t, values=values, mask=mask), truth
        Q = rotation_matrix(t, config.angle, R)
        A = A @ Q
        C = C @ Q


def materialize(config: SynthConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collect a whole stream into dense arrays.

    Returns (values, masks, truth), shaped (T, L, W) with masks boolean.
    """
    values = np.empty((config.T, config.L, config.W))
    masks = np.empty((config.T, config.L, config.W), dtype=bool)
    truth = np.empty((config.T, config.L, config.W))
    for i, (obs, clean) in enumerate(generate_stream(config)):
        values[i] = obs.values
        masks[i] = obs.mask
        truth[i] = clean
    return values, masks, truth
