"""Command-line frontend: ``robustgates optimize|scan|analyze|presets``.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
The default output directory comes from ``$ROBUSTGATES_OUT`` (else
``./robustgates-out``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, build_closed_problem, build_problem, dump_config, list_presets, load_config, problem_factory
from .controls import sample_initial_field, write_field
from .experiments import (
    BatchSpec,
    bloch_trajectories,
    field_statistics,
    run_batch,
    success_grid,
    write_grid_csv,
    write_statistics_csv,
    write_trajectory_csv,
)
from .optimize import NumericalAbort, OptimizerOptions, bfgs_minimize, load_record, save_record, write_history_csv

log = logging.getLogger("robustgates")

ENV_OUT = "ROBUSTGATES_OUT"


def _out_dir(args, cfg=None) -> Path:
    out = args.out or (cfg or {}).get("output") or os.environ.get(ENV_OUT) or "robustgates-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _options(cfg, threshold=None) -> OptimizerOptions:
    kwargs = dict(cfg["optimizer"])
    if threshold is not None:
        kwargs["error_threshold"] = threshold
    return OptimizerOptions(**kwargs)


def _save_run(record, out: Path, stem: str):
    save_record(record, out / f"{stem}.json")
    write_field(record.final_field, out / f"{stem}-field.csv")
    write_history_csv(record, out / f"{stem}-history.csv")


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threshold is not None:
        cfg["optimizer"]["error_threshold"] = args.threshold
    if args.dry_run:
        print(dump_config(cfg), end="")
        print(f"# problem: {build_problem(cfg)!r}")
        return 0
    out = _out_dir(args, cfg)
    problem = build_problem(cfg)
    opts = _options(cfg)
    seed = cfg["seed"]
    meta = {"config": cfg, "T": cfg["T"], "K": cfg["K"], "delta": cfg["delta"]}
    field0 = sample_initial_field(problem.n_controls, cfg["K"], cfg["T"], cfg["delta"], seed)
    try:
        if cfg["warm_start"]:
            closed = bfgs_minimize(build_closed_problem(cfg), field0,
                                   OptimizerOptions(**dict(cfg["optimizer"], error_threshold=1e-8)),
                                   seed=seed, meta=dict(meta, stage="closed"))
            _save_run(closed, out, f"run-seed{seed}-closed")
            field0 = closed.final_field
            meta["stage"] = "open"
        record = bfgs_minimize(problem, field0, opts, seed=seed, meta=meta)
    except NumericalAbort as exc:
        _save_run(exc.record, out, f"run-seed{seed}")
        log.error("numerical abort: %s", exc)
        return 1
    _save_run(record, out, f"run-seed{seed}")
    print(f"seed={seed} termination={record.termination} iterations={record.iterations} "
          f"error={record.final_error!r} fidelity={record.final_fidelity!r}")
    return 0


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    if cfg["batch"] is None:
        raise ConfigError("missing required field 'batch'")
    threshold = args.threshold if args.threshold is not None else cfg["optimizer"]["error_threshold"]
    spec = BatchSpec(
        problem_factory=problem_factory(cfg),
        times=cfg["batch"]["times"],
        deltas=cfg["batch"]["deltas"],
        runs=cfg["batch"]["runs"],
        base_seed=cfg["seed"] if args.seed is None else args.seed,
        threshold=threshold,
        options=_options(cfg),
        meta={"config": cfg},
    )
    if args.dry_run:
        print(dump_config(cfg), end="")
        print(f"# cells: {len(spec.times)} x {len(spec.deltas)}, runs per cell: {spec.runs}")
        return 0
    out = _out_dir(args, cfg)
    records = run_batch(spec, out / "records", resume=args.resume, jobs=args.jobs)
    grid = success_grid(records, threshold, [T for T, _ in spec.times], spec.deltas)
    write_grid_csv(grid, out / "grid.csv")
    print(f"wrote {out / 'grid.csv'} ({len(records)} runs)")
    return 0


def _load_records(directory: Path):
    paths = sorted(p for p in directory.rglob("*.json"))
    return [(p, load_record(p)) for p in paths]


def cmd_analyze(args) -> int:
    directory = Path(args.records_dir)
    records = _load_records(directory) if directory.is_dir() else []
    if not records:
        log.error("no records found in %s", directory)
        return 1
    out = _out_dir(args)
    if args.mode == "stats":
        stats = field_statistics([r for _, r in records])
        write_statistics_csv(stats, out / "statistics.csv")
        print(f"wrote {out / 'statistics.csv'} ({len(stats)} rows)")
    elif args.mode == "bloch":
        n = 0
        for path, rec in records:
            cfg = rec.meta.get("config")
            if not cfg or cfg["model"] != "hamiltonian" or rec.meta.get("stage") == "closed":
                continue
            times, bloch = bloch_trajectories(build_problem(cfg), rec.final_field, args.samples)
            write_trajectory_csv(times, bloch, out / f"bloch-{path.stem}.csv")
            n += 1
        if not n:
            log.error("no Hamiltonian records with a stored config")
            return 1
        print(f"wrote {n} trajectory file(s) to {out}")
    else:
        closed = {r.seed: r for _, r in records if r.meta.get("stage") == "closed"}
        pairs = [(closed[r.seed], r) for _, r in records if r.meta.get("stage") == "open" and r.seed in closed]
        if not pairs:
            log.error("no paired closed/open records")
            return 1
        lines = ["seed,closed_error,blue,red"]
        for c, o in sorted(pairs, key=lambda pr: pr[1].seed):
            lines.append(f"{o.seed},{c.final_error!r},{o.history[0]!r},{o.final_error!r}")
        (out / "compare.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {out / 'compare.csv'} ({len(pairs)} pairs)")
    return 0


def cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustgates", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML file or preset name")
            p.add_argument("--seed", type=int)
            p.add_argument("--threshold", type=float)
            p.add_argument("--dry-run", action="store_true")
        p.add_argument("--out", help=f"output directory (default ${ENV_OUT})")

    p = sub.add_parser("optimize", help="run one optimisation")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("scan", help="run a (T, delta) success grid")
    common(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("analyze", help="export statistics, trajectories or warm-start comparisons")
    p.add_argument("records_dir")
    p.add_argument("--mode", choices=("stats", "bloch", "compare"), default="stats")
    p.add_argument("--samples", type=int, default=101)
    common(p, config=False)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
