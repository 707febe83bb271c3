"""Command-line entry points: run, sweep, reference, diag and probe.

Exit codes: 0 success, 1 invalid input, 2 numerical abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .diagnostics import energy_balance_residual, make_record, wave_residual
from .harness import SpongeConfig, SweepSpec, epsilon_sweep, local_decay_probe
from .io import (
    CheckpointError,
    ConfigError,
    RunConfig,
    load_checkpoint,
    load_config,
    read_csv,
    write_checkpoint,
    write_csv,
    write_report,
    write_table,
)
from .solver import StabilityError, Trajectory, integrate, make_initial_data, to_incompressible

logger = logging.getLogger("acmhd")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID) -> None:
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _figure(kind: str, *a) -> None:
    # figures are a convenience; a plotting failure must not fail the run
    try:
        from . import plotting

        getattr(plotting, kind)(*a)
    except Exception as exc:  # pragma: no cover - depends on the local matplotlib
        logger.warning("figure %s skipped: %s", kind, exc)


def cmd_run(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    state = make_initial_data(cfg.kind, cfg.epsilon, cfg.grid, cfg.seed, mu=cfg.mu)
    dt, n = cfg.steps()
    ck_dir = out / "checkpoints"
    every = args.checkpoint_every
    if every:
        ck_dir.mkdir(exist_ok=True)
    count = [0]

    def dump(s):
        if every and count[0] % every == 0:
            write_checkpoint(s, ck_dir / f"snap_{count[0]:06d}.ckpt")
        count[0] += 1

    traj = integrate(
        state, dt, n, cadence=cfg.cadence, keep_snapshots=False,
        nonlinear=cfg.nonlinear, diffusion=cfg.diffusion, cfl=cfg.cfl, on_snapshot=dump,
    )
    snaps = [r for i, r in enumerate(traj.records) if i % cfg.cadence == 0]
    write_csv(snaps, out / "series.csv")
    doc = {
        "command": "run",
        "dt": dt,
        "n_steps": n,
        "energy_balance_residual": energy_balance_residual(traj, mu=cfg.mu),
        "final_energy": traj.records[-1].energy,
    }
    write_report(doc, out / "report.json", cfg)
    _figure("plot_series", read_csv(out / "series.csv"), out / "series.png")
    return EXIT_OK


def cmd_reference(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    state = to_incompressible(make_initial_data(cfg.kind, cfg.epsilon, cfg.grid, cfg.seed, mu=cfg.mu))
    dt, n = cfg.steps()
    traj = integrate(state, dt, n, cadence=cfg.cadence, keep_snapshots=False, cfl=cfg.cfl)
    snaps = [r for i, r in enumerate(traj.records) if i % cfg.cadence == 0]
    write_csv(snaps, out / "series.csv")
    doc = {
        "command": "reference",
        "dt": dt,
        "n_steps": n,
        "energy_balance_residual": energy_balance_residual(traj, mu=cfg.mu),
        "final_energy": traj.records[-1].energy,
    }
    write_report(doc, out / "report.json", cfg)
    _figure("plot_series", read_csv(out / "series.csv"), out / "series.png")
    return EXIT_OK


def _parse_epsilons(text: str) -> tuple[float, ...]:
    try:
        eps = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise CliError(f"bad --epsilons list {text!r}") from None
    if not eps:
        raise CliError("--epsilons is empty")
    return tuple(sorted(eps, reverse=True))


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    eps = _parse_epsilons(args.epsilons) if args.epsilons else (cfg.epsilon,)
    dt = cfg.dt if cfg.dt is not None else cfg.steps()[0]
    spec = SweepSpec(eps, cfg.grid, cfg.T, dt=dt, cfl=cfg.cfl, kind=cfg.kind,
                     seed=cfg.seed, cadence=cfg.cadence, mu=cfg.mu)
    report = epsilon_sweep(spec, keep_series=True)
    for run in report.runs:
        run_dir = out / f"eps_{run.epsilon:.6g}"
        run_dir.mkdir(exist_ok=True)
        rows = [
            {"time": t, "q_u_L4": a, "q_B_L4": b, "Pu_err": c, "PB_err": d}
            for t, a, b, c, d in zip(run.times, *(run.series.get(k, []) for k in ("qu", "qb", "pu_err", "pb_err")))
        ]
        write_table(rows, run_dir / "series.csv")
        write_report({"command": "sweep-member", **run.row(), "message": run.message},
                     run_dir / "report.json", replace(cfg, epsilon=run.epsilon))
    write_table([r.row() for r in report.runs], out / "sweep.csv")
    write_report({"command": "sweep", **report.as_dict()}, out / "report.json", cfg)
    if report.fits:
        _figure("plot_rate_fits", report.fits, out / "rates.png")
    unstable = [r.epsilon for r in report.runs if r.status != "ok"]
    if unstable:
        print(f"aborted epsilon values: {unstable}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_diag(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    paths = [p for group in args.checkpoint for p in group]
    if len(paths) < 3:
        raise CliError("diag needs at least three checkpoints")
    states = [load_checkpoint(p, expect_n=cfg.n).to_state() for p in paths]
    states.sort(key=lambda s: s.time)
    times = np.array([s.time for s in states])
    gaps = np.diff(times)
    if np.any(gaps <= 0) or np.ptp(gaps) > 1e-9 * max(gaps.max(), 1e-300):
        raise CliError("checkpoint times must be distinct and evenly spaced")
    traj = Trajectory(dt=float(gaps[0]), cadence=1, nonlinear=cfg.nonlinear, diffusion=cfg.diffusion)
    for s in states:
        traj.add_snapshot(s)
        traj.records.append(make_record(s))
    rows = []
    for stride in (1, 2):
        if 2 * stride + 1 > len(states):
            continue
        rows.append({
            "stride": stride,
            "pressure_residual": wave_residual(traj, "pressure", stride),
            "potential_residual": wave_residual(traj, "potential", stride),
        })
    write_table(rows, out / "wave_residuals.csv")
    write_csv(traj.records, out / "series.csv")
    write_report({"command": "diag", "checkpoints": [str(p) for p in paths], "wave_residuals": rows},
                 out / "report.json", cfg)
    for r in rows:
        print(f"stride {r['stride']}: pressure {r['pressure_residual']:.6e} "
              f"potential {r['potential_residual']:.6e}")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    reports = []
    for on in (True, False):
        reports.append(local_decay_probe(cfg.grid, cfg.epsilon, SpongeConfig(enabled=on),
                                         tau0=cfg.T, doublings=args.doublings))
    rows = [
        {"tau": t, "sponge_on": a, "sponge_off": b}
        for t, a, b in zip(reports[0].taus, reports[0].averages, reports[1].averages)
    ]
    write_table(rows, out / "decay.csv")
    write_report({"command": "probe", "sponge_on": reports[0].as_dict(), "sponge_off": reports[1].as_dict()},
                 out / "report.json", cfg)
    _figure("plot_decay", reports, out / "decay.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acmhd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key = value run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        return p

    p = common(sub.add_parser("run", help="integrate the artificial-compressibility system"))
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="write a checkpoint every K snapshots (0: none)")
    p.set_defaults(func=cmd_run)
    common(sub.add_parser("reference", help="integrate the incompressible reference")).set_defaults(func=cmd_reference)
    p = common(sub.add_parser("sweep", help="epsilon sweep against the reference"))
    p.add_argument("--epsilons", help="comma-separated epsilon values")
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("diag", help="wave-equation residuals from checkpoints"))
    p.add_argument("--checkpoint", nargs="+", action="append", required=True, metavar="PATH")
    p.set_defaults(func=cmd_diag)
    p = common(sub.add_parser("probe", help="sponge-layer local decay probe"))
    p.add_argument("--doublings", type=int, default=6)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StabilityError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
