"""Pydantic request / response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from ..sgd import SgdConfig
from ..tracker import TrackerConfig


class TrackerParams(BaseModel):
    """Flat algorithm parameters shared by sessions and batch runs.

    stepsize only applies to (and is required by) the sgd algorithm;
    variant, gamma, window_len and ordering only apply to olstec.
    """

    rank: int = Field(ge=1)
    forgetting: float = Field(default=0.7, gt=0.0, le=1.0)
    mu: float = Field(default=1e-3, gt=0.0)
    gamma: Union[float, Literal["auto"]] = "auto"
    variant: Literal["full", "simplified", "window"] = "full"
    window_len: Optional[int] = Field(default=None, ge=1)
    ordering: Literal["gauss-seidel", "jacobi"] = "gauss-seidel"
    stepsize: Optional[float] = Field(default=None, gt=0.0)
    seed: int = 0

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            rank=self.rank,
            forgetting=self.forgetting,
            mu=self.mu,
            gamma=self.gamma,
            variant=self.variant,
            window_len=self.window_len,
            ordering=self.ordering,
            seed=self.seed,
        )

    def sgd_config(self) -> SgdConfig:
        return SgdConfig(
            rank=self.rank,
            forgetting=self.forgetting,
            mu=self.mu,
            stepsize=self.stepsize,
            seed=self.seed,
        )


class CreateSessionRequest(BaseModel):
    algo: Literal["olstec", "sgd"] = "olstec"
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    params: TrackerParams

    @model_validator(mode="after")
    def check_algo_params(self) -> "CreateSessionRequest":
        if self.algo == "sgd" and self.params.stepsize is None:
            raise ValueError("the sgd algorithm requires params.stepsize")
        if self.algo == "olstec" and self.params.variant == "window":
            if self.params.window_len is None:
                raise ValueError("the window variant requires params.window_len")
        return self


class SessionInfo(BaseModel):
    session_id: str
    algo: str
    rows: int
    cols: int
    rank: int
    variant: str
    t: int
    running_avg: Optional[float] = None


class SliceRequest(BaseModel):
    """One slice pushed into a session.

    mask omitted means fully observed; truth switches the logged
    residual to a full-slice comparison against it.
    """

    values: list[list[float]]
    mask: Optional[list[list[bool]]] = None
    truth: Optional[list[list[float]]] = None
    include_reconstruction: bool = False


class StepResponse(BaseModel):
    t: int
    b: list[float]
    residual: float
    running_avg: float
    elapsed_ms: float
    reconstruction: Optional[list[list[float]]] = None


class MetricsRow(BaseModel):
    t: int
    residual: float
    running_avg: float
    elapsed_ms: float


class SessionMetrics(BaseModel):
    session_id: str
    algo: str
    variant: str
    records: list[MetricsRow]


class SynthSourceModel(BaseModel):
    L: int = Field(ge=1)
    W: int = Field(ge=1)
    T: int = Field(ge=1)
    angle: float = 0.0
    noise: float = Field(default=0.0, ge=0.0)
    ratio: float = Field(default=1.0, gt=0.0, le=1.0)


class RunRequest(BaseModel):
    """Batch experiment; synthetic source or server-local tensor files."""

    algo: Literal["olstec", "sgd"] = "olstec"
    params: TrackerParams
    synth: Optional[SynthSourceModel] = None
    tensor_path: Optional[str] = None
    mask_path: Optional[str] = None
    mask_ratio: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    truth_path: Optional[str] = None
    reps: int = Field(default=1, ge=1)
    seed: int = 0
    mask_seed: Optional[int] = None
    include_records: bool = False

    @model_validator(mode="after")
    def check_source(self) -> "RunRequest":
        if (self.synth is None) == (self.tensor_path is None):
            raise ValueError("give exactly one of synth or tensor_path")
        if self.algo == "sgd" and self.params.stepsize is None:
            raise ValueError("the sgd algorithm requires params.stepsize")
        return self


class RepSummary(BaseModel):
    rep: int
    final_running_avg: float
    status: str
    steps: int
    records: Optional[list[MetricsRow]] = None


class RunResponse(BaseModel):
    algo: str
    variant: str
    reps: list[RepSummary]
    mean_final: float
    std_final: float


class BenchRequest(BaseModel):
    L: int = Field(default=150, ge=1)
    W: int = Field(default=150, ge=1)
    ranks: list[int] = Field(default=[10, 20, 40], min_length=1)
    steps: int = Field(default=30, ge=1)
    warmup: int = Field(default=5, ge=0)
    ratio: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = 0
    include_sgd: bool = True


class BenchRowModel(BaseModel):
    algo: str
    variant: str
    rank: int
    sec_per_iter: float


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]
    ratios: dict[int, float]


class HealthResponse(BaseModel):
    status: str
    version: str
