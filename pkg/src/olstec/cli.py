"""Command-line entry point.

Subcommands:
    run    track a stream (synthetic or from files), log metrics to CSV
    synth  generate a synthetic stream and write it to tensor files
    bench  per-iteration timing comparison across ranks
    serve  start the HTTP service

run and bench execute in process by default; with --server URL they
post the work to a running service and write the usual output files
from its response.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .exceptions import OlstecError
from .experiments import (
    BenchSpec,
    FileSource,
    RunSpec,
    SynthSource,
    bench_ratios,
    run_bench,
    run_experiment,
    summary_path,
    variant_label,
)
from .metrics import MetricsRecord
from .sgd import SgdConfig
from .synth import SynthConfig, generate_stream
from .tensorfile import write_mask, write_results_csv, write_tensor
from .tracker import TrackerConfig


def _parse_gamma(text: str):
    if text == "auto":
        return "auto"
    value = float(text)
    return value


def _parse_ranks(text: str) -> tuple:
    try:
        ranks = tuple(int(part) for part in text.split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from exc
    if not ranks:
        raise argparse.ArgumentTypeError("rank list is empty")
    return ranks


def _add_tracker_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rank", type=int, required=True, help="factor rank R")
    parser.add_argument(
        "--lambda",
        dest="forgetting",
        type=float,
        default=0.7,
        help="forgetting factor in (0, 1]",
    )
    parser.add_argument("--mu", type=float, default=1e-3, help="ridge regularizer")
    parser.add_argument(
        "--gamma",
        type=_parse_gamma,
        default="auto",
        help='initial row-matrix scale, a positive number or "auto"',
    )
    parser.add_argument(
        "--variant",
        choices=("full", "simplified", "window"),
        default="full",
        help="tracker state variant",
    )
    parser.add_argument(
        "--window-len", type=int, default=None, help="window length V (window variant)"
    )
    parser.add_argument(
        "--ordering",
        choices=("gauss-seidel", "jacobi"),
        default="gauss-seidel",
        help="whether the C update sees the fresh A",
    )
    parser.add_argument(
        "--algo", choices=("olstec", "sgd"), default="olstec", help="algorithm"
    )
    parser.add_argument(
        "--stepsize", type=float, default=None, help="gradient stepsize (sgd only)"
    )


def _add_synth_geometry(parser: argparse.ArgumentParser, required: bool) -> None:
    parser.add_argument("--L", type=int, required=required, help="slice height")
    parser.add_argument("--W", type=int, required=required, help="slice width")
    parser.add_argument("--T", type=int, required=required, help="number of steps")
    parser.add_argument(
        "--alpha", type=float, default=0.0, help="per-step rotation angle (radians)"
    )
    parser.add_argument(
        "--noise", type=float, default=0.0, help="additive noise standard deviation"
    )
    parser.add_argument(
        "--ratio", type=float, default=1.0, help="observation probability in (0, 1]"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="olstec",
        description="streaming low-rank subspace tracking over slice streams",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="track a stream and log per-step metrics")
    run.add_argument(
        "--input",
        required=True,
        help='tensor file, directory of per-slice CSV grids, or "synth"',
    )
    _add_tracker_args(run)
    _add_synth_geometry(run, required=False)
    run.add_argument(
        "--mask-ratio",
        type=float,
        default=None,
        help="Bernoulli observation probability for file input",
    )
    run.add_argument(
        "--mask-seed",
        type=int,
        default=None,
        help="pin the mask stream across repetitions",
    )
    run.add_argument(
        "--mask-file", type=Path, default=None, help="explicit mask file"
    )
    run.add_argument(
        "--truth", type=Path, default=None, help="noiseless reference tensor file"
    )
    run.add_argument("--reps", type=int, default=1, help="independent repetitions")
    run.add_argument("--seed", type=int, default=0, help="base seed")
    run.add_argument("--out", type=Path, default=None, help="results CSV path")
    run.add_argument("--server", default=None, help="execute on a running service")

    synth = sub.add_parser("synth", help="generate a synthetic stream to files")
    synth.add_argument("--rank", type=int, required=True, help="factor rank R")
    _add_synth_geometry(synth, required=True)
    synth.add_argument("--seed", type=int, default=0, help="stream seed")
    synth.add_argument(
        "--out", type=Path, required=True, help="output tensor file (observed values)"
    )
    synth.add_argument(
        "--truth-out", type=Path, default=None, help="noiseless tensor file"
    )
    synth.add_argument(
        "--mask-out", type=Path, default=None, help="observation mask file"
    )

    bench = sub.add_parser("bench", help="per-iteration timing across ranks")
    bench.add_argument("--L", type=int, default=150, help="slice height")
    bench.add_argument("--W", type=int, default=150, help="slice width")
    bench.add_argument(
        "--ranks", type=_parse_ranks, default=(10, 20, 40), help="comma-separated ranks"
    )
    bench.add_argument("--steps", type=int, default=30, help="timed steps per rank")
    bench.add_argument("--warmup", type=int, default=5, help="untimed leading steps")
    bench.add_argument(
        "--ratio", type=float, default=1.0, help="observation probability"
    )
    bench.add_argument("--seed", type=int, default=0, help="stream seed")
    bench.add_argument(
        "--no-sgd", action="store_true", help="skip the gradient baseline"
    )
    bench.add_argument("--out", type=Path, default=None, help="timings CSV path")
    bench.add_argument("--server", default=None, help="execute on a running service")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser


def _make_config(args: argparse.Namespace):
    if args.algo == "sgd":
        return SgdConfig(
            rank=args.rank,
            forgetting=args.forgetting,
            mu=args.mu,
            stepsize=args.stepsize,
            seed=args.seed,
        )
    return TrackerConfig(
        rank=args.rank,
        forgetting=args.forgetting,
        mu=args.mu,
        gamma=args.gamma,
        variant=args.variant,
        window_len=args.window_len,
        ordering=args.ordering,
        seed=args.seed,
    )


def _make_source(args: argparse.Namespace, parser: argparse.ArgumentParser):
    if args.input == "synth":
        missing = [n for n in ("L", "W", "T") if getattr(args, n) is None]
        if missing:
            parser.error(
                f"--input synth requires --{' --'.join(missing)}"
            )
        return SynthSource(
            L=args.L,
            W=args.W,
            T=args.T,
            angle=args.alpha,
            noise=args.noise,
            ratio=args.ratio,
        )
    path = Path(args.input)
    if path.is_dir():
        slices = sorted(path.glob("*.csv"))
        if not slices:
            parser.error(f"directory {path} holds no .csv slice files")
        return slices
    return FileSource(
        tensor_path=path,
        mask_path=args.mask_file,
        mask_ratio=args.mask_ratio,
        truth_path=args.truth,
    )


def _cmd_run(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.algo == "sgd" and args.stepsize is None:
        parser.error("--algo sgd requires --stepsize")
    if args.server:
        return _cmd_run_remote(args, parser)
    source = _make_source(args, parser)
    if isinstance(source, list):
        source = _import_csv_dir(source, args)
    config = _make_config(args)
    spec = RunSpec(
        source=source,
        config=config,
        algo=args.algo,
        reps=args.reps,
        seed=args.seed,
        mask_seed=args.mask_seed,
        out=args.out,
    )
    result = run_experiment(spec)
    failed = False
    for rep in result.reps:
        line = f"rep {rep.rep}: final running avg {rep.final_running_avg:.6g}"
        if rep.status != "completed":
            line += f" [{rep.status}]"
            failed = True
        print(line)
    print(f"mean {result.mean_final:.6g} std {result.std_final:.6g}")
    if args.out is not None:
        print(f"wrote {args.out if args.reps == 1 else args.out.stem + '.rep*'} "
              f"and {summary_path(args.out).name}")
    return 1 if failed else 0


def _import_csv_dir(slices: list, args: argparse.Namespace) -> FileSource:
    """Convert a directory of per-slice CSV grids into a tensor file."""
    import tempfile

    from .tensorfile import read_csv_slices

    values = read_csv_slices(slices)
    handle = tempfile.NamedTemporaryFile(suffix=".tns", delete=False)
    handle.close()
    write_tensor(handle.name, values)
    return FileSource(
        tensor_path=Path(handle.name),
        mask_path=args.mask_file,
        mask_ratio=args.mask_ratio,
        truth_path=args.truth,
    )


def _records_from_rows(rows: list[dict]) -> list[MetricsRecord]:
    return [
        MetricsRecord(
            t=r["t"],
            residual=r["residual"],
            running_avg=r["running_avg"],
            elapsed_ms=r["elapsed_ms"],
        )
        for r in rows
    ]


def _cmd_run_remote(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    import httpx

    payload = {
        "algo": args.algo,
        "params": {
            "rank": args.rank,
            "forgetting": args.forgetting,
            "mu": args.mu,
            "gamma": args.gamma,
            "variant": args.variant,
            "window_len": args.window_len,
            "ordering": args.ordering,
            "stepsize": args.stepsize,
            "seed": args.seed,
        },
        "reps": args.reps,
        "seed": args.seed,
        "mask_seed": args.mask_seed,
        "include_records": args.out is not None,
    }
    if args.input == "synth":
        missing = [n for n in ("L", "W", "T") if getattr(args, n) is None]
        if missing:
            parser.error(f"--input synth requires --{' --'.join(missing)}")
        payload["synth"] = {
            "L": args.L,
            "W": args.W,
            "T": args.T,
            "angle": args.alpha,
            "noise": args.noise,
            "ratio": args.ratio,
        }
    else:
        path = Path(args.input)
        if path.is_dir():
            parser.error("remote runs need a tensor file or synth input")
        payload["tensor_path"] = str(path.resolve())
        if args.mask_file is not None:
            payload["mask_path"] = str(args.mask_file.resolve())
        if args.mask_ratio is not None:
            payload["mask_ratio"] = args.mask_ratio
        if args.truth is not None:
            payload["truth_path"] = str(args.truth.resolve())
    response = httpx.post(
        args.server.rstrip("/") + "/experiments/run", json=payload, timeout=None
    )
    if response.status_code != 200:
        print(f"error: server returned {response.status_code}: {response.text}",
              file=sys.stderr)
        return 2
    body = response.json()
    failed = False
    for rep in body["reps"]:
        line = f"rep {rep['rep']}: final running avg {rep['final_running_avg']:.6g}"
        if rep["status"] != "completed":
            line += f" [{rep['status']}]"
            failed = True
        print(line)
    print(f"mean {body['mean_final']:.6g} std {body['std_final']:.6g}")
    if args.out is not None:
        _write_remote_outputs(body, args.out, args.reps)
    return 1 if failed else 0


def _write_remote_outputs(body: dict, out: Path, reps: int) -> None:
    algo, variant = body["algo"], body["variant"]
    if reps == 1:
        write_results_csv(
            out, _records_from_rows(body["reps"][0]["records"] or []), algo, variant
        )
    else:
        for rep in body["reps"]:
            p = out.with_name(f"{out.stem}.rep{rep['rep']:03d}{out.suffix or '.csv'}")
            write_results_csv(
                p, _records_from_rows(rep["records"] or []), algo, variant
            )
    with open(summary_path(out), "w") as fh:
        fh.write("rep,final_running_avg,status\n")
        for rep in body["reps"]:
            fh.write(f"{rep['rep']},{rep['final_running_avg']:.17g},{rep['status']}\n")
        fh.write(f"mean,{body['mean_final']:.17g},\n")
        fh.write(f"std,{body['std_final']:.17g},\n")


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        L=args.L,
        W=args.W,
        T=args.T,
        rank=args.rank,
        angle=args.alpha,
        noise=args.noise,
        ratio=args.ratio,
        seed=args.seed,
    )
    import numpy as np

    values = np.empty((config.T, config.L, config.W))
    masks = np.empty((config.T, config.L, config.W), dtype=bool)
    truth = np.empty((config.T, config.L, config.W))
    for i, (obs, clean) in enumerate(generate_stream(config)):
        values[i] = obs.values
        masks[i] = obs.mask
        truth[i] = clean
    write_tensor(args.out, values)
    print(f"wrote {args.out} ({config.T} slices of {config.L}x{config.W})")
    if args.truth_out is not None:
        write_tensor(args.truth_out, truth)
        print(f"wrote {args.truth_out}")
    if args.mask_out is not None:
        write_mask(args.mask_out, masks)
        print(f"wrote {args.mask_out}")
    return 0


def _print_bench(rows: list[dict], ratios: dict) -> None:
    print(f"{'algo':<8} {'variant':<12} {'rank':>5} {'sec/iter':>12}")
    for row in rows:
        print(
            f"{row['algo']:<8} {row['variant']:<12} {row['rank']:>5} "
            f"{row['sec_per_iter']:>12.6f}"
        )
    for rank in sorted(ratios, key=int):
        print(f"simplified/full ratio at rank {rank}: {ratios[rank]:.3f}")


def _write_bench_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write("algo,variant,rank,sec_per_iter\n")
        for row in rows:
            fh.write(
                f"{row['algo']},{row['variant']},{row['rank']},"
                f"{row['sec_per_iter']:.17g}\n"
            )


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.server:
        import httpx

        payload = {
            "L": args.L,
            "W": args.W,
            "ranks": list(args.ranks),
            "steps": args.steps,
            "warmup": args.warmup,
            "ratio": args.ratio,
            "seed": args.seed,
            "include_sgd": not args.no_sgd,
        }
        response = httpx.post(
            args.server.rstrip("/") + "/experiments/bench", json=payload, timeout=None
        )
        if response.status_code != 200:
            print(f"error: server returned {response.status_code}: {response.text}",
                  file=sys.stderr)
            return 2
        body = response.json()
        rows, ratios = body["rows"], body["ratios"]
    else:
        spec = BenchSpec(
            L=args.L,
            W=args.W,
            ranks=args.ranks,
            steps=args.steps,
            warmup=args.warmup,
            ratio=args.ratio,
            seed=args.seed,
            include_sgd=not args.no_sgd,
        )
        bench_rows = run_bench(spec)
        rows = [
            {
                "algo": r.algo,
                "variant": r.variant,
                "rank": r.rank,
                "sec_per_iter": r.sec_per_iter,
            }
            for r in bench_rows
        ]
        ratios = bench_ratios(bench_rows)
    _print_bench(rows, ratios)
    if args.out is not None:
        _write_bench_csv(args.out, rows)
        print(f"wrote {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, parser)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "serve":
            return _cmd_serve(args)
    except OlstecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
