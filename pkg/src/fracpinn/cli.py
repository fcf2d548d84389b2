"""Command-line entry point.

Every command reads one JSON config (``--config``), optionally patched with
``--set key.path=value``, and writes its outputs plus a ``.meta.json``
sidecar recording the config hash and seed.  Exit codes: 0 success,
2 configuration, 3 numeric/solver, 4 training, 5 I/O or malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from fracpinn import __version__
from fracpinn.analysis import ablation, bootstrap, profile_alpha, write_profile_csv
from fracpinn.config import ConfigError, RunConfig, load_config
from fracpinn.data import (
    CASE_HEADER,
    load_csv,
    make_synthetic,
    read_observations_csv,
    reconstruct_observations,
    write_observations_csv,
)
from fracpinn.errors import (
    ConsistencyError,
    DomainError,
    FracPinnError,
    GridMismatchError,
    NonConvergenceError,
    SingularityError,
    TrainingError,
)
from fracpinn.fracsolver import Trajectory, simulate
from fracpinn.loss import ObservationSet
from fracpinn.model import SimplexState
from fracpinn.trainer import FitResult, TrainConfig, fit

log = logging.getLogger("fracpinn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TRAINING, EXIT_IO = 0, 2, 3, 4, 5


class InputError(Exception):
    """Unreadable or malformed input file."""


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_meta(path: Path, cfg: RunConfig, command: str, **extra) -> None:
    meta = {
        "command": command,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        **extra,
    }
    _dump_json(meta, path.with_name(path.name + ".meta.json"))


def _out_path(arg: str | None, cfg: RunConfig, default_name: str) -> Path:
    path = Path(arg) if arg else Path(cfg.out_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _out_dir(arg: str | None, cfg: RunConfig) -> Path:
    path = Path(arg) if arg else Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve(cfg: RunConfig):
    """Build library objects from the config; invariant failures are config errors."""
    try:
        return cfg.train_config(), cfg.truth_params(), cfg.initial_state(), cfg.noise_spec()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _load_observations(path: str, cfg: RunConfig) -> tuple[ObservationSet, SimplexState, float, int]:
    """Read either an observation CSV or a cumulative case-count CSV.

    Returns observations, initial state, dt and the number of grid steps.
    """
    p = Path(path)
    try:
        with open(p, newline="") as fh:
            first = fh.readline().strip()
    except OSError as exc:
        raise InputError(f"cannot read {p}: {exc.strerror or exc}") from None
    try:
        if tuple(h.strip() for h in first.split(",")) == CASE_HEADER:
            if cfg.data.population is None:
                raise ConfigError("case-count input needs data.population in the config")
            records = load_csv(p)
            obs, ic = reconstruct_observations(records, cfg.data.population, cfg.data.exposed_multiplier,
                                               cfg.data.dt)
            dt = cfg.data.dt
            return obs, ic, dt, int(round(obs.times[-1] / dt))
        obs = read_observations_csv(p)
    except ConsistencyError as exc:
        raise InputError(str(exc)) from None
    if len(obs) == 0:
        raise InputError(f"{p}: no observation rows")
    _, _, ic, _ = _resolve(cfg)
    n_steps = cfg.grid.n_steps
    if obs.times[-1] > cfg.grid.T + 1e-9:
        raise ConfigError(f"observations extend to t={obs.times[-1]:g} beyond grid.T={cfg.grid.T:g}")
    return obs, ic, cfg.grid.dt, n_steps


def _write_fit_outputs(res: FitResult, out: Path, cfg: RunConfig, command: str, prefix: str = "fit") -> None:
    ckpt = out / f"{prefix}.ckpt"
    res.save_checkpoint(ckpt)
    res.write_json(out / f"{prefix}.json", checkpoint_path=ckpt.name)
    res.write_log(out / f"{prefix}_log.csv")
    Trajectory(res.problem.dt, res.trajectory()).to_csv(out / f"{prefix}_trajectory.csv")
    for name in (f"{prefix}.json", f"{prefix}_log.csv", f"{prefix}_trajectory.csv", f"{prefix}.ckpt"):
        _write_meta(out / name, cfg, command, tag=res.tag)


# -- commands


def cmd_simulate(cfg: RunConfig, args) -> int:
    _, params, ic, _ = _resolve(cfg)
    traj = simulate(ic, params, cfg.grid.dt, cfg.grid.n_steps, cfg.solver)
    path = _out_path(args.out, cfg, "trajectory.csv")
    traj.to_csv(path)
    _write_meta(
        path, cfg, "simulate",
        params=params.to_dict(),
        grid={"dt": cfg.grid.dt, "T": cfg.grid.T, "n_steps": cfg.grid.n_steps},
        scheme=cfg.solver.scheme,
        ic=ic.to_dict(),
    )
    print(f"wrote {path} ({len(traj.states)} rows)")
    return EXIT_OK


def cmd_generate(cfg: RunConfig, args) -> int:
    _, params, ic, noise = _resolve(cfg)
    traj = simulate(ic, params, cfg.grid.dt, cfg.grid.n_steps, cfg.solver)
    try:
        obs = make_synthetic(traj, cfg.noise.every, noise)
    except ConsistencyError as exc:
        raise ConfigError(str(exc)) from None
    path = _out_path(args.out, cfg, "observations.csv")
    write_observations_csv(obs, path)
    _write_meta(
        path, cfg, "generate",
        params=params.to_dict(),
        grid={"dt": cfg.grid.dt, "T": cfg.grid.T, "n_steps": cfg.grid.n_steps},
        scheme=cfg.solver.scheme,
        noise={"sigma_noise": noise.sigma_noise, "seed": noise.seed, "every": cfg.noise.every,
               "clip_to_simplex": noise.clip_to_simplex},
    )
    print(f"wrote {path} ({len(obs)} rows)")
    return EXIT_OK


def cmd_fit(cfg: RunConfig, args) -> int:
    tcfg, *_ = _resolve(cfg)
    obs, ic, dt, n_steps = _load_observations(args.obs, cfg)
    res = fit(obs, ic, tcfg, dt, n_steps, tag="fit")
    out = _out_dir(args.out_dir, cfg)
    _write_fit_outputs(res, out, cfg, "fit")
    p = res.params_hat
    print(f"alpha={p.alpha:.6f} beta={p.beta:.6f} sigma={p.sigma:.6f} gamma={p.gamma_r:.6f} mu={p.mu:.6f}"
          f" ({res.stop_reason})")
    return EXIT_OK


def cmd_profile(cfg: RunConfig, args) -> int:
    tcfg, *_ = _resolve(cfg)
    obs, ic, dt, n_steps = _load_observations(args.obs, cfg)
    try:
        points = profile_alpha(obs, ic, tcfg, cfg.analysis.alpha_grid, dt, n_steps, jobs=cfg.jobs)
    except ConsistencyError as exc:
        raise ConfigError(str(exc)) from None
    path = _out_path(args.out, cfg, "profile.csv")
    write_profile_csv(points, path)
    failed = [pt.alpha_fixed for pt in points if pt.error is not None]
    _write_meta(path, cfg, "profile", alpha_grid=list(cfg.analysis.alpha_grid), failed=failed)
    for pt in points:
        print(f"alpha={pt.alpha_fixed:g} loss={pt.terminal_loss:.6e}")
    if len(failed) == len(points):
        raise TrainingError("every profile fit failed")
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig, args) -> int:
    tcfg, *_ = _resolve(cfg)
    obs, ic, dt, n_steps = _load_observations(args.obs, cfg)
    try:
        summary = bootstrap(obs, ic, tcfg, cfg.analysis.n_replicates, cfg.analysis.bootstrap_seed, dt, n_steps,
                            jobs=cfg.jobs)
    except ConsistencyError as exc:
        raise ConfigError(str(exc)) from None
    path = _out_path(args.out, cfg, "bootstrap.json")
    summary.write_json(path)
    _write_meta(path, cfg, "bootstrap", bootstrap_seed=cfg.analysis.bootstrap_seed)
    for key in summary.point:
        print(f"{key}={summary.point[key]:.6f} [{summary.lower[key]:.6f}, {summary.upper[key]:.6f}]")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    tcfg, *_ = _resolve(cfg)
    obs, ic, dt, n_steps = _load_observations(args.obs, cfg)
    disable = cfg.analysis.disable
    if args.disable is not None:
        disable = tuple(d for d in args.disable.split(",") if d)
    try:
        res = ablation(obs, ic, tcfg, disable, dt, n_steps)
    except ConsistencyError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args.out_dir, cfg)
    _write_fit_outputs(res, out, cfg, "ablate", prefix="ablate")
    print(f"{res.tag}: alpha={res.params_hat.alpha:.6f} loss={res.final.total:.6e}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "generate": cmd_generate,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "bootstrap": cmd_bootstrap,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry by dotted path, e.g. truth.alpha=0.9")
    common.add_argument("--jobs", type=int, help="cap on concurrent fits (overrides config jobs)")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="fracpinn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="solve the forward model")
    p.add_argument("--out", help="trajectory CSV path (default: <out_dir>/trajectory.csv)")

    p = sub.add_parser("generate", parents=[common], help="simulate and sample noisy observations")
    p.add_argument("--out", help="observation CSV path (default: <out_dir>/observations.csv)")

    for name, text in (("fit", "train the PINN and estimate parameters"),
                       ("ablate", "fit with loss terms switched off")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--obs", required=True, help="observation CSV or case-count CSV")
        p.add_argument("--out-dir", help="output directory (default: config out_dir)")
        if name == "ablate":
            p.add_argument("--disable", help="comma-separated terms: phys, cons, ic_term, reg")

    p = sub.add_parser("profile", parents=[common], help="profile the loss over fixed alpha values")
    p.add_argument("--obs", required=True)
    p.add_argument("--out", help="profile CSV path (default: <out_dir>/profile.csv)")

    p = sub.add_parser("bootstrap", parents=[common], help="residual bootstrap intervals")
    p.add_argument("--obs", required=True)
    p.add_argument("--out", help="summary JSON path (default: <out_dir>/bootstrap.json)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if args.jobs is not None:
            overrides.append(f"jobs={args.jobs}")
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        where = f" (iteration {exc.iteration}, term {exc.term})" if exc.iteration is not None else ""
        print(f"training error: {exc}{where}", file=sys.stderr)
        return EXIT_TRAINING
    except (SingularityError, NonConvergenceError, DomainError, GridMismatchError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FracPinnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
