"""HTTP front end: streaming sessions plus batch experiment endpoints.

Sessions hold a live tracker in process memory; clients create one,
push slices in step order and read back the accumulated metrics. The
experiment endpoints run the same specs the command line uses and
return their summaries, so a thin client can reproduce identical
output files from the response.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..core import Dims, SliceObservation
from ..exceptions import OlstecError
from ..experiments import (
    BenchSpec,
    FileSource,
    RunSpec,
    SynthSource,
    bench_ratios,
    run_bench,
    run_experiment,
    variant_label,
)
from ..metrics import MetricsRecord, RunningAverage
from ..sgd import SgdTracker
from ..tracker import OlstecTracker
from .schemas import (
    BenchRequest,
    BenchResponse,
    BenchRowModel,
    CreateSessionRequest,
    HealthResponse,
    MetricsRow,
    RepSummary,
    RunRequest,
    RunResponse,
    SessionInfo,
    SessionMetrics,
    SliceRequest,
    StepResponse,
)

import time


@dataclass
class Session:
    session_id: str
    algo: str
    tracker: Union[OlstecTracker, SgdTracker]
    records: list[MetricsRecord] = field(default_factory=list)
    average: RunningAverage = field(default_factory=RunningAverage)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def variant(self) -> str:
        if self.algo == "olstec":
            return self.tracker.config.variant
        return "-"

    def info(self) -> SessionInfo:
        return SessionInfo(
            session_id=self.session_id,
            algo=self.algo,
            rows=self.tracker.dims.L,
            cols=self.tracker.dims.W,
            rank=self.tracker.dims.R,
            variant=self.variant,
            t=self.tracker.t,
            running_avg=self.average.mean if self.average.count else None,
        )


def create_app() -> FastAPI:
    app = FastAPI(title="olstec", version=__version__)
    sessions: dict[str, Session] = {}
    store_lock = threading.Lock()

    def get_session(session_id: str) -> Session:
        with store_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="no such session")
        return session

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(req: CreateSessionRequest) -> SessionInfo:
        dims = Dims(req.rows, req.cols, req.params.rank)
        try:
            if req.algo == "olstec":
                tracker: Union[OlstecTracker, SgdTracker] = OlstecTracker(
                    dims, req.params.tracker_config()
                )
            else:
                tracker = SgdTracker(dims, req.params.sgd_config())
        except OlstecError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session = Session(session_id=uuid.uuid4().hex, algo=req.algo, tracker=tracker)
        with store_lock:
            sessions[session.session_id] = session
        return session.info()

    @app.get("/sessions", response_model=list[SessionInfo])
    def list_sessions() -> list[SessionInfo]:
        with store_lock:
            items = list(sessions.values())
        return [s.info() for s in items]

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        return get_session(session_id).info()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> None:
        with store_lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(status_code=404, detail="no such session")

    @app.post("/sessions/{session_id}/slices", response_model=StepResponse)
    def push_slice(session_id: str, req: SliceRequest) -> StepResponse:
        session = get_session(session_id)
        values = np.asarray(req.values, dtype=np.float64)
        if values.ndim != 2:
            raise HTTPException(status_code=422, detail="values must be a 2-D grid")
        mask = (
            np.asarray(req.mask, dtype=bool)
            if req.mask is not None
            else np.ones(values.shape, dtype=bool)
        )
        truth = (
            np.asarray(req.truth, dtype=np.float64) if req.truth is not None else None
        )
        with session.lock:
            t_next = session.tracker.t + 1
            try:
                obs = SliceObservation(t=t_next, values=values, mask=mask)
                start = time.perf_counter()
                out = session.tracker.step(obs, truth)
                elapsed_ms = (time.perf_counter() - start) * 1e3
            except OlstecError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            residual = (
                out.residual_truth
                if out.residual_truth is not None
                else out.residual_observed
            )
            running = session.average.update(residual)
            session.records.append(
                MetricsRecord(
                    t=out.t,
                    residual=residual,
                    running_avg=running,
                    elapsed_ms=elapsed_ms,
                )
            )
        return StepResponse(
            t=out.t,
            b=out.b.tolist(),
            residual=residual,
            running_avg=running,
            elapsed_ms=elapsed_ms,
            reconstruction=out.reconstruction.tolist()
            if req.include_reconstruction
            else None,
        )

    @app.get("/sessions/{session_id}/metrics", response_model=SessionMetrics)
    def session_metrics(session_id: str) -> SessionMetrics:
        session = get_session(session_id)
        with session.lock:
            rows = [
                MetricsRow(
                    t=r.t,
                    residual=r.residual,
                    running_avg=r.running_avg,
                    elapsed_ms=r.elapsed_ms,
                )
                for r in session.records
            ]
        return SessionMetrics(
            session_id=session.session_id,
            algo=session.algo,
            variant=session.variant,
            records=rows,
        )

    @app.post("/experiments/run", response_model=RunResponse)
    def experiments_run(req: RunRequest) -> RunResponse:
        if req.synth is not None:
            source = SynthSource(
                L=req.synth.L,
                W=req.synth.W,
                T=req.synth.T,
                angle=req.synth.angle,
                noise=req.synth.noise,
                ratio=req.synth.ratio,
            )
        else:
            source = FileSource(
                tensor_path=Path(req.tensor_path),
                mask_path=Path(req.mask_path) if req.mask_path else None,
                mask_ratio=req.mask_ratio,
                truth_path=Path(req.truth_path) if req.truth_path else None,
            )
        config = (
            req.params.tracker_config()
            if req.algo == "olstec"
            else req.params.sgd_config()
        )
        try:
            spec = RunSpec(
                source=source,
                config=config,
                algo=req.algo,
                reps=req.reps,
                seed=req.seed,
                mask_seed=req.mask_seed,
            )
            result = run_experiment(spec)
        except OlstecError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        reps = []
        for rep in result.reps:
            rows = None
            if req.include_records:
                rows = [
                    MetricsRow(
                        t=r.t,
                        residual=r.residual,
                        running_avg=r.running_avg,
                        elapsed_ms=r.elapsed_ms,
                    )
                    for r in rep.records
                ]
            reps.append(
                RepSummary(
                    rep=rep.rep,
                    final_running_avg=rep.final_running_avg,
                    status=rep.status,
                    steps=len(rep.records),
                    records=rows,
                )
            )
        return RunResponse(
            algo=spec.algo,
            variant=variant_label(spec.algo, spec.config),
            reps=reps,
            mean_final=result.mean_final,
            std_final=result.std_final,
        )

    @app.post("/experiments/bench", response_model=BenchResponse)
    def experiments_bench(req: BenchRequest) -> BenchResponse:
        try:
            spec = BenchSpec(
                L=req.L,
                W=req.W,
                ranks=tuple(req.ranks),
                steps=req.steps,
                warmup=req.warmup,
                ratio=req.ratio,
                seed=req.seed,
                include_sgd=req.include_sgd,
            )
            rows = run_bench(spec)
        except OlstecError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return BenchResponse(
            rows=[
                BenchRowModel(
                    algo=r.algo,
                    variant=r.variant,
                    rank=r.rank,
                    sec_per_iter=r.sec_per_iter,
                )
                for r in rows
            ],
            ratios=bench_ratios(rows),
        )

    return app


app = create_app()
