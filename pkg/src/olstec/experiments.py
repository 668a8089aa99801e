"""Experiment orchestration: seeds, repetitions, logging, benchmarks.

A run specification names a slice source (synthetic stream or files),
an algorithm with its configuration, and a repetition count. Every
repetition i derives three independent seeds from base_seed + i, one
each for the data stream, the observation masks and the tracker
initialization, so any one component can be varied in isolation.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from .core import Dims, SliceObservation
from .exceptions import ConfigError, OlstecError
from .metrics import MetricsRecord, RunningAverage
from .sgd import SgdConfig, SgdTracker
from .synth import SynthConfig, generate_stream
from .tensorfile import (
    generate_mask,
    read_mask,
    read_tensor,
    write_results_csv,
)
from .tracker import OlstecTracker, TrackerConfig

ALGOS = ("olstec", "sgd")


@dataclass(frozen=True)
class SynthSource:
    """Generate the stream on the fly; rank follows the tracker config."""

    L: int
    W: int
    T: int
    angle: float = 0.0
    noise: float = 0.0
    ratio: float = 1.0


@dataclass(frozen=True)
class FileSource:
    """Load slices from a tensor file.

    The mask comes from mask_path when given, else from Bernoulli
    sampling at mask_ratio (reseeded per repetition), else everything
    counts as observed. truth_path supplies an optional noiseless
    reference tensor for full-slice residuals.
    """

    tensor_path: Path
    mask_path: Optional[Path] = None
    mask_ratio: Optional[float] = None
    truth_path: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.mask_path is not None and self.mask_ratio is not None:
            raise ConfigError("give either mask_path or mask_ratio, not both")


Source = Union[SynthSource, FileSource]
AlgoConfig = Union[TrackerConfig, SgdConfig]


@dataclass(frozen=True)
class RunSpec:
    """One experiment: source, algorithm, repetitions, output target.

    mask_seed, when set, pins the observation masks: every repetition
    then draws the same masks while data and initialization still vary,
    which isolates the masking randomness. Left unset, each repetition
    derives its own mask seed.
    """

    source: Source
    config: AlgoConfig
    algo: str = "olstec"
    reps: int = 1
    seed: int = 0
    mask_seed: Optional[int] = None
    out: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        expected = TrackerConfig if self.algo == "olstec" else SgdConfig
        if not isinstance(self.config, expected):
            raise ConfigError(
                f"algo {self.algo!r} needs a {expected.__name__}, got "
                f"{type(self.config).__name__}"
            )
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")


@dataclass
class RepResult:
    """Metrics of one repetition."""

    rep: int
    records: list[MetricsRecord]
    final_running_avg: float
    status: str  # "completed" or "aborted: <reason>"


@dataclass
class RunResult:
    """All repetitions of one run plus cross-rep summary statistics."""

    spec: RunSpec
    reps: list[RepResult]
    mean_final: float
    std_final: float


def rep_seeds(base_seed: int, rep: int) -> tuple[int, int, int]:
    """Derived (data, mask, init) seeds for repetition number rep."""
    s = base_seed + rep
    return 3 * s, 3 * s + 1, 3 * s + 2


def variant_label(algo: str, config: AlgoConfig) -> str:
    """CSV tag for the variant column; the baseline has no variants."""
    return config.variant if isinstance(config, TrackerConfig) else "-"


def _file_stream(
    source: FileSource, mask_seed: int
) -> Iterator[tuple[SliceObservation, Optional[np.ndarray]]]:
    values = read_tensor(source.tensor_path)
    T, L, W = values.shape
    if source.mask_path is not None:
        masks = read_mask(source.mask_path)
        if masks.shape != values.shape:
            raise ConfigError(
                f"mask shape {masks.shape} does not match tensor shape "
                f"{values.shape}"
            )
    elif source.mask_ratio is not None:
        masks = generate_mask(L, W, T, source.mask_ratio, mask_seed)
    else:
        masks = np.ones(values.shape, dtype=bool)
    truth = None
    if source.truth_path is not None:
        truth = read_tensor(source.truth_path)
        if truth.shape != values.shape:
            raise ConfigError(
                f"truth shape {truth.shape} does not match tensor shape "
                f"{values.shape}"
            )
    for t in range(T):
        clean = truth[t] if truth is not None else None
        yield SliceObservation(t=t + 1, values=values[t], mask=masks[t]), clean


def _build_stream(
    spec: RunSpec, rep: int
) -> tuple[Iterator[tuple[SliceObservation, Optional[np.ndarray]]], Dims, int]:
    data_seed, mask_seed, init_seed = rep_seeds(spec.seed, rep)
    if spec.mask_seed is not None:
        mask_seed = spec.mask_seed
    rank = spec.config.rank
    if isinstance(spec.source, SynthSource):
        src = spec.source
        synth = SynthConfig(
            L=src.L,
            W=src.W,
            T=src.T,
            rank=rank,
            angle=src.angle,
            noise=src.noise,
            ratio=src.ratio,
            seed=data_seed,
            mask_seed=mask_seed,
        )
        return generate_stream(synth), Dims(src.L, src.W, rank), init_seed
    values_shape = read_tensor(spec.source.tensor_path).shape
    dims = Dims(values_shape[1], values_shape[2], rank)
    return _file_stream(spec.source, mask_seed), dims, init_seed


def _build_tracker(spec: RunSpec, dims: Dims, init_seed: int):
    config = replace(spec.config, seed=init_seed)
    if spec.algo == "olstec":
        return OlstecTracker(dims, config)
    return SgdTracker(dims, config)


def run_rep(spec: RunSpec, rep: int) -> RepResult:
    """Execute one repetition and collect its per-step metrics.

    The logged residual is measured against the noiseless truth when
    the source provides one, otherwise against the observed entries.
    Only the tracker step itself is timed.
    """
    stream, dims, init_seed = _build_stream(spec, rep)
    tracker = _build_tracker(spec, dims, init_seed)
    records: list[MetricsRecord] = []
    avg = RunningAverage()
    status = "completed"
    for obs, truth in stream:
        start = time.perf_counter()
        try:
            out = tracker.step(obs, truth)
        except OlstecError as exc:
            status = f"aborted: {exc}"
            break
        elapsed_ms = (time.perf_counter() - start) * 1e3
        residual = (
            out.residual_truth if out.residual_truth is not None else out.residual_observed
        )
        records.append(
            MetricsRecord(
                t=out.t,
                residual=residual,
                running_avg=avg.update(residual),
                elapsed_ms=elapsed_ms,
            )
        )
    final = records[-1].running_avg if records else float("nan")
    return RepResult(rep=rep, records=records, final_running_avg=final, status=status)


def run_experiment(spec: RunSpec) -> RunResult:
    """Execute all repetitions and, if requested, write the CSV logs."""
    reps = [run_rep(spec, i) for i in range(spec.reps)]
    finals = [r.final_running_avg for r in reps if r.status == "completed"]
    mean_final = float(np.mean(finals)) if finals else float("nan")
    std_final = float(np.std(finals)) if finals else float("nan")
    result = RunResult(spec=spec, reps=reps, mean_final=mean_final, std_final=std_final)
    if spec.out is not None:
        write_run_outputs(result)
    return result


def _rep_path(out: Path, rep: int) -> Path:
    return out.with_name(f"{out.stem}.rep{rep:03d}{out.suffix or '.csv'}")


def summary_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}.summary{out.suffix or '.csv'}")


def write_run_outputs(result: RunResult) -> list[Path]:
    """Write per-rep CSVs plus a cross-rep summary next to them.

    A single repetition goes exactly to spec.out; multiple repetitions
    go to <stem>.repNNN<suffix> siblings.
    """
    spec = result.spec
    out = Path(spec.out)
    label = variant_label(spec.algo, spec.config)
    paths = []
    if spec.reps == 1:
        write_results_csv(out, result.reps[0].records, spec.algo, label)
        paths.append(out)
    else:
        for rep_result in result.reps:
            p = _rep_path(out, rep_result.rep)
            write_results_csv(p, rep_result.records, spec.algo, label)
            paths.append(p)
    spath = summary_path(out)
    with open(spath, "w") as fh:
        fh.write("rep,final_running_avg,status\n")
        for r in result.reps:
            fh.write(f"{r.rep},{r.final_running_avg:.17g},{r.status}\n")
        fh.write(f"mean,{result.mean_final:.17g},\n")
        fh.write(f"std,{result.std_final:.17g},\n")
    paths.append(spath)
    return paths


@dataclass(frozen=True)
class BenchSpec:
    """Per-iteration timing comparison across ranks and algorithms."""

    L: int = 150
    W: int = 150
    ranks: tuple = (10, 20, 40)
    steps: int = 30
    warmup: int = 5
    ratio: float = 1.0
    seed: int = 0
    include_sgd: bool = True

    def __post_init__(self) -> None:
        if self.steps < 1 or self.warmup < 0:
            raise ConfigError("need steps >= 1 and warmup >= 0")
        if not self.ranks:
            raise ConfigError("ranks must be non-empty")


@dataclass
class BenchRow:
    algo: str
    variant: str
    rank: int
    sec_per_iter: float


def _time_tracker(tracker, observations: list[SliceObservation], warmup: int) -> float:
    times = []
    for i, obs in enumerate(observations):
        start = time.perf_counter()
        tracker.step(obs)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            times.append(elapsed)
    return statistics.median(times)


def run_bench(spec: BenchSpec) -> list[BenchRow]:
    """Median per-iteration step time for each (algorithm, rank) pair.

    Slices are materialized up front so generation cost never pollutes
    the timings; all trackers at one rank consume identical data.
    """
    rows: list[BenchRow] = []
    for rank in spec.ranks:
        synth = SynthConfig(
            L=spec.L,
            W=spec.W,
            T=spec.steps + spec.warmup,
            rank=rank,
            ratio=spec.ratio,
            seed=3 * spec.seed,
            mask_seed=3 * spec.seed + 1,
        )
        observations = [obs for obs, _ in generate_stream(synth)]
        dims = Dims(spec.L, spec.W, rank)
        for variant in ("full", "simplified"):
            tracker = OlstecTracker(
                dims, TrackerConfig(rank=rank, variant=variant, seed=3 * spec.seed + 2)
            )
            rows.append(
                BenchRow(
                    algo="olstec",
                    variant=variant,
                    rank=rank,
                    sec_per_iter=_time_tracker(tracker, observations, spec.warmup),
                )
            )
        if spec.include_sgd:
            sgd = SgdTracker(dims, SgdConfig(rank=rank, seed=3 * spec.seed + 2))
            rows.append(
                BenchRow(
                    algo="sgd",
                    variant="-",
                    rank=rank,
                    sec_per_iter=_time_tracker(sgd, observations, spec.warmup),
                )
            )
    return rows


def bench_ratios(rows: list[BenchRow]) -> dict[int, float]:
    """Simplified-over-full time ratio per rank."""
    full = {r.rank: r.sec_per_iter for r in rows if r.variant == "full"}
    simp = {r.rank: r.sec_per_iter for r in rows if r.variant == "simplified"}
    return {rank: simp[rank] / full[rank] for rank in full if rank in simp}
