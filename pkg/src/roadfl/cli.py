"""Command-line front end.

Subcommands:
    optimize   search the best (h, t) schedule, write optimize.csv and
               optimize_summary.csv
    validate   simulate rounds for one schedule and fit the success-count
               histogram, write poisson_fit.csv and fit_report.csv
    sweep      evaluate the analytic surface on an (h, t) grid, write
               surface.csv
    fl         run synthetic federated training over a schedule grid,
               write fl_runs.csv and correlation.txt

Configuration is an INI-style file (see baseline.cfg) with dotted-key
command-line overrides, e.g. --system.speed_mps=25. All CSV output is
deterministic for a fixed config and seed: floats are printed with 9
significant digits and files are written atomically.

Exit codes: 0 success, 1 config error, 2 infeasible environment,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import analytic, optimizer
from .flsim import FLConfig, proxy_correlation, run_fl
from .mcsim import SimConfig, compare_to_poisson, simulate_rounds
from .optimizer import OptimizerConfig
from .types import (
    DivergenceError,
    InfeasibleEnvironmentError,
    InfeasibleScheduleError,
    InvalidParameterError,
    Schedule,
    SystemParams,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


# section -> key -> (type, required, default)
_SCHEMA: dict[str, dict[str, tuple[type, bool, object]]] = {
    "system": {
        "length_m": (float, True, None),
        "speed_mps": (float, True, None),
        "arrival_rate_per_s": (float, True, None),
        "tau_down_s": (float, True, None),
        "tau_up_s": (float, True, None),
        "alpha_s": (float, True, None),
        "beta_s": (float, True, None),
    },
    "optimizer": {
        "gamma_s": (float, False, 1e-3),
        "grid_step_s": (float, False, 0.01),
    },
    "sim": {
        "seed": (int, False, 12345),
        "num_rounds": (int, False, 100_000),
        "warmup_rounds": (int, False, 1),
        "h": (int, False, None),
        "t_s": (float, False, None),
    },
    "fl": {
        "eta": (float, False, 0.1),
        "batch_size": (int, False, 64),
        "samples_per_vehicle": (int, False, 1024),
        "feature_dim": (int, False, 512),
        "global_pool_size": (int, False, 1024),
        "validation_size": (int, False, 1024),
        "horizon_s": (float, False, 2000.0),
        "seed": (int, False, 1),
        "noise_std": (float, False, 0.0),
        "vehicle_shift_std": (float, False, 0.0),
    },
    "output": {
        "dir": (str, False, "out"),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParams
    optimizer: OptimizerConfig
    sim: SimConfig
    fl: FLConfig
    schedule: Schedule | None
    output_dir: Path


def _coerce(section: str, key: str, raw: str):
    typ = _SCHEMA[section][key][0]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}")


def parse_config(path: str | Path | None,
                 overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read the INI config, apply key=value overrides, validate everything.

    Unknown sections or keys are hard errors; missing required keys are
    reported all at once.
    """
    values: dict[str, dict[str, object]] = {s: {} for s in _SCHEMA}

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser[section].items():
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                values[section][key] = _coerce(section, key, raw)

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        values[section][key] = _coerce(section, key, raw)

    missing = [f"{s}.{k}" for s, keys in _SCHEMA.items()
               for k, (_, required, _) in keys.items()
               if required and k not in values[s]]
    if missing:
        raise ConfigError("missing required config key(s): " + ", ".join(missing))

    def lookup(section: str, key: str):
        return values[section].get(key, _SCHEMA[section][key][2])

    try:
        system = SystemParams(
            length=lookup("system", "length_m"),
            speed=lookup("system", "speed_mps"),
            arrival_rate=lookup("system", "arrival_rate_per_s"),
            tau_down=lookup("system", "tau_down_s"),
            tau_up=lookup("system", "tau_up_s"),
            alpha=lookup("system", "alpha_s"),
            beta=lookup("system", "beta_s"),
        )
        opt = OptimizerConfig(gamma=lookup("optimizer", "gamma_s"),
                              grid_step=lookup("optimizer", "grid_step_s"))
        sim = SimConfig(seed=lookup("sim", "seed"),
                        num_rounds=lookup("sim", "num_rounds"),
                        warmup_rounds=lookup("sim", "warmup_rounds"))
        fl = FLConfig(
            eta=lookup("fl", "eta"),
            batch_size=lookup("fl", "batch_size"),
            samples_per_vehicle=lookup("fl", "samples_per_vehicle"),
            feature_dim=lookup("fl", "feature_dim"),
            global_pool_size=lookup("fl", "global_pool_size"),
            validation_size=lookup("fl", "validation_size"),
            horizon=lookup("fl", "horizon_s"),
            seed=lookup("fl", "seed"),
            noise_std=lookup("fl", "noise_std"),
            vehicle_shift_std=lookup("fl", "vehicle_shift_std"),
        )
        h = lookup("sim", "h")
        t_s = lookup("sim", "t_s")
        schedule = Schedule(h, t_s) if h is not None and t_s is not None else None
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc

    return ExperimentConfig(system, opt, sim, fl, schedule,
                            Path(str(lookup("output", "dir"))))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.9g}"
    return str(value)


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    """Write CSV atomically: temp file in the target dir, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_optimize(cfg: ExperimentConfig) -> int:
    result = optimizer.optimize_schedule(cfg.system, cfg.optimizer)
    out = cfg.output_dir
    _write_rows(out / "optimize.csv", ("h", "t_opt_s", "g_opt"),
                result.per_h_table)
    _write_rows(out / "optimize_summary.csv",
                ("h_star", "t_star_s", "g_star", "search_steps"),
                [(result.h_star, result.t_star, result.g_star,
                  result.search_steps)])
    print(f"h_star={result.h_star} t_star_s={_fmt(result.t_star)} "
          f"g_star={_fmt(result.g_star)} search_steps={result.search_steps}")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig) -> int:
    if cfg.schedule is None:
        raise ConfigError("validate requires sim.h and sim.t_s")
    summary = simulate_rounds(cfg.system, cfg.schedule, cfg.sim)
    lam = analytic.lambda_param(cfg.system, cfg.schedule)
    fit = compare_to_poisson(summary, lam)
    out = cfg.output_dir
    _write_rows(out / "poisson_fit.csv",
                ("m_suc", "empirical_freq", "poisson_pmf"),
                zip(fit.support.tolist(), fit.empirical_freq, fit.pmf))
    _write_rows(out / "fit_report.csv",
                ("lambda_analytic", "mean_empirical", "tv_distance",
                 "p_pos_analytic", "p_pos_empirical"),
                [(fit.lambda_analytic, fit.mean_empirical, fit.tv_distance,
                  fit.p_pos_analytic, fit.p_pos_empirical)])
    print(f"lambda={_fmt(lam)} empirical_mean={_fmt(fit.mean_empirical)} "
          f"tv_distance={_fmt(fit.tv_distance)}")
    return EXIT_OK


def _parse_h_list(text: str) -> list[int]:
    try:
        hs = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse h list {text!r}")
    if not hs or any(h < 1 for h in hs):
        raise ConfigError("h list must contain positive integers")
    return hs


def _parse_t_grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"t grid {text!r} must be start:stop:step")
    if step <= 0 or start <= 0:
        raise ConfigError("t grid needs positive start and step")
    ts = []
    k = 0
    while True:
        t = start + k * step
        if t > stop + 1e-12:
            break
        ts.append(t)
        k += 1
    if not ts:
        raise ConfigError("t grid is empty")
    return ts


def cmd_sweep(cfg: ExperimentConfig, h_list: str, t_grid: str) -> int:
    hs = _parse_h_list(h_list)
    ts = _parse_t_grid(t_grid)
    rows = []
    for h in hs:
        lam = analytic.lambda_curve(cfg.system, h, ts)
        g = analytic.g_curve(cfg.system, h, ts)
        for t, lam_v, g_v in zip(ts, lam, g):
            rows.append((h, t, float(g_v), float(lam_v), -math.expm1(-float(lam_v))))
    _write_rows(cfg.output_dir / "surface.csv",
                ("h", "t_s", "g", "lambda", "p_success"), rows)
    print(f"surface: {len(rows)} points")
    return EXIT_OK


def _default_fl_grid(cfg: ExperimentConfig) -> list[Schedule]:
    """Per-h optimum scaled by {0.6, 1.0, 1.6} for h in {8, 16, 24, 40}."""
    schedules = []
    for h in (8, 16, 24, 40):
        t_opt, _, _ = optimizer.optimize_round_length(cfg.system, h, cfg.optimizer)
        for factor in (0.6, 1.0, 1.6):
            schedules.append(Schedule(h, factor * t_opt))
    return schedules


def _parse_schedules(text: str) -> list[Schedule]:
    schedules = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            h_raw, t_raw = part.split(":")
            schedules.append(Schedule(int(h_raw), float(t_raw)))
        except (ValueError, InvalidParameterError) as exc:
            raise ConfigError(f"bad schedule {part!r}: {exc}")
    if not schedules:
        raise ConfigError("schedule list is empty")
    return schedules


def cmd_fl(cfg: ExperimentConfig, schedules_arg: str | None) -> int:
    if schedules_arg is None:
        schedules = _default_fl_grid(cfg)
    else:
        schedules = _parse_schedules(schedules_arg)

    rows = []
    results = []
    for sched in schedules:
        try:
            res = run_fl(cfg.system, sched, cfg.fl)
        except DivergenceError as exc:
            print(f"warning: run h={sched.h} t={_fmt(sched.t)} diverged: {exc}",
                  file=sys.stderr)
            rows.append((sched.h, sched.t, math.nan, 0, math.nan, math.nan))
            continue
        results.append(res)
        for k in range(res.times.size):
            rows.append((sched.h, sched.t, float(res.times[k]), k,
                         float(res.losses[k]), float(res.l_min_curve[k])))
    _write_rows(cfg.output_dir / "fl_runs.csv",
                ("h", "t_s", "time_s", "round", "val_loss", "l_min"), rows)

    grid_desc = ",".join(f"{s.h}:{_fmt(s.t)}" for s in schedules)
    if len(results) >= 8:
        report = proxy_correlation(results, cfg.system)
        if report.degenerate:
            body = "spearman_rho=nan (degenerate: constant ranks)\n"
        else:
            body = f"spearman_rho={_fmt(report.rho)}\n"
        body += f"n_schedules={report.n_schedules}\n"
    else:
        body = "spearman_rho=nan (fewer than 8 completed runs)\n"
        body += f"n_schedules={len(results)}\n"
    body += f"grid={grid_desc}\nhorizon_s={_fmt(cfg.fl.horizon)}\nseed={cfg.fl.seed}\n"
    _write_text(cfg.output_dir / "correlation.txt", body)
    print(body.splitlines()[0])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadfl",
        description="Schedule optimization and validation for roadside "
                    "federated learning")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("optimize", "validate", "sweep", "fl"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override sim and fl seeds")
        if name == "sweep":
            p.add_argument("--h-list", default="8,16,24,40")
            p.add_argument("--t-grid", default="1:40:0.1",
                           help="round-length grid start:stop:step")
        if name == "fl":
            p.add_argument("--schedules", default=None,
                           help="comma-separated h:t pairs; default is the "
                                "0.6/1.0/1.6 grid around per-h optima")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)

    overrides = []
    for token in extra:
        if token.startswith("--") and "=" in token and "." in token.split("=", 1)[0]:
            overrides.append(token[2:])
        else:
            parser.error(f"unrecognized argument: {token}")

    try:
        cfg = parse_config(args.config, overrides)
        if args.out is not None:
            cfg = replace(cfg, output_dir=Path(args.out))
        if args.seed is not None:
            cfg = replace(cfg,
                          sim=replace(cfg.sim, seed=args.seed),
                          fl=replace(cfg.fl, seed=args.seed))

        if args.command == "optimize":
            return cmd_optimize(cfg)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.h_list, args.t_grid)
        return cmd_fl(cfg, args.schedules)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleEnvironmentError, InfeasibleScheduleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
