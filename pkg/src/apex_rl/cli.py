"""Command line entry point.

Subcommands: train, eval, compare, sweep, gradcheck, gait-diagram. Every
subcommand writes only under the output directory, chosen in order from
``--out``, the ``APEX_RL_OUT`` environment variable and the config's
``output_dir``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import IncompatibleCheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, load_config, save_config
from .evaluation import (
    EvalReport, eval_rollout, extract_phase_offsets, mean_report, nearest_gait, policy_actor, report,
)
from .dynamics import ChainState
from .policy import VARIANTS
from .gradcheck import LQToy, unbiasedness_grid, variance_report, write_grid_csv, write_variance_csv
from .ppo.train import METRIC_COLUMNS, read_metrics, train
from .reference import parse_selector, reference_angles
from .rewards import scale_config

log = logging.getLogger("apex_rl")

OUT_ENV = "APEX_RL_OUT"


class CLIError(Exception):
    pass


def default_config_path() -> Path:
    return Path(str(resources.files("apex_rl") / "configs" / "default.json"))


def version_string() -> str:
    """``git describe``-style version; falls back to the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"], cwd=here, capture_output=True,
            text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def parse_seeds(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise CLIError(f"--seed expects N[,N...], got {text!r}") from None
    if not seeds:
        raise CLIError("--seed needs at least one value")
    return seeds


def resolve_out(args, cfg: RunConfig | None = None) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or (cfg.output_dir if cfg else "runs")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_run_config(args) -> RunConfig:
    cfg = load_config(args.config or default_config_path())
    if getattr(args, "variant", None):
        if args.variant not in VARIANTS:
            raise CLIError(f"--variant must be one of {', '.join(VARIANTS)}, got {args.variant!r}")
        cfg = cfg.replace(variant=args.variant)
        cfg = load_config_dict(cfg.to_dict())
    seeds = parse_seeds(getattr(args, "seed", None))
    if seeds:
        cfg = cfg.replace(seeds=seeds)
    return cfg


def load_config_dict(d: dict) -> RunConfig:
    from .config import config_from_dict

    return config_from_dict(d)


def _train_job(job):
    cfg_dict, seed, metrics_path, ckpt_path = job
    cfg = load_config_dict(cfg_dict)
    train(cfg, seed, metrics_path, ckpt_path)
    return metrics_path


def run_jobs(jobs, threads: int) -> None:
    if threads <= 1 or len(jobs) <= 1:
        for job in jobs:
            _train_job(job)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        list(pool.map(_train_job, jobs))


def write_manifest(out: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    manifest = {
        "version": version_string(),
        "seeds": list(cfg.seeds),
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --- train ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    out = resolve_out(args, cfg)
    save_config(cfg, out / "config.json")
    write_manifest(out, cfg)
    jobs = [
        (cfg.to_dict(), seed, out / f"metrics_seed{seed}.csv", out / f"checkpoint_seed{seed}.apxc")
        for seed in cfg.seeds
    ]
    run_jobs(jobs, args.threads)
    for seed in cfg.seeds:
        print(f"seed {seed}: {out / f'metrics_seed{seed}.csv'}")
    return 0


# --- eval ----------------------------------------------------------------------------


def evaluate_checkpoint(policy, cfg: RunConfig, gait_name: str | None, selector: str | None,
                        episodes: int) -> tuple[EvalReport, str, float]:
    gaits = cfg.gait_specs()
    names = [g.name for g in gaits]
    if selector is not None:
        try:
            sel = parse_selector(selector)
        except ValueError as exc:
            raise CLIError(str(exc)) from None
        if sel.n != len(gaits):
            raise CLIError(f"selector {selector} has n={sel.n} but the checkpoint was trained with {len(gaits)} gait(s)")
        m = sel.m
        if gait_name is not None and gait_name != names[m]:
            raise CLIError(f"selector {selector} commands {names[m]!r}, not {gait_name!r}")
    elif gait_name is not None:
        if gait_name not in names:
            raise CLIError(f"gait {gait_name!r} not in checkpoint gaits {names}")
        m = names.index(gait_name)
    else:
        m = 0
    gait = gaits[m]
    if episodes < 1:
        raise CLIError("--episodes must be >= 1")
    reports = []
    for e in range(episodes):
        # episodes start from the reference state at evenly spaced clip times
        t0 = e * gait.period / episodes
        q, qdot = reference_angles(gait, t0)
        trace = eval_rollout(
            policy_actor(policy, cfg.network.action_scale), gait, m / len(gaits), cfg.variant_config,
            cfg.chain, cfg.rewards, cfg.env.eval_steps, ChainState(q, qdot), t0,
            divergence_limit=cfg.env.divergence_limit,
        )
        assert np.all(trace.decay == 0.0)
        reports.append(report(trace, gait))
    return mean_report(reports), gait.name, m / len(gaits)


def cmd_eval(args) -> int:
    policy, _, _, cfg = _load_ckpt(args.checkpoint)
    rep, gait, sel = evaluate_checkpoint(policy, cfg, args.gait, args.selector, args.episodes)
    out = resolve_out(args, cfg)
    path = out / f"eval_{gait}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gait", "selector", "episodes", "rmse_q", "rmse_h", "rmse_x_ee", "rmse_v", "eval_reward"])
        w.writerow([gait, repr(sel), args.episodes, *(repr(v) for v in (rep.q, rep.h, rep.x_ee, rep.v, rep.reward))])
    print(f"{gait}: q={rep.q:.4f} h={rep.h:.4f} x_ee={rep.x_ee:.4f} v={rep.v:.4f} R={rep.reward:.4f}")
    return 0


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError as exc:
        raise CLIError(f"checkpoint not found: {exc.filename}") from None


# --- compare -------------------------------------------------------------------------


def cmd_compare(args) -> int:
    if len(args.config) < 2:
        raise CLIError("compare needs at least two --config files")
    seeds = parse_seeds(args.seed)
    cfgs = []
    for path in args.config:
        cfg = load_config(path)
        if seeds:
            cfg = cfg.replace(seeds=seeds)
        cfgs.append(cfg)
    joints = {c.n_joints for c in cfgs}
    if len(joints) > 1:
        raise CLIError(f"configs disagree on n_joints: {sorted(joints)}")
    shared = seeds or cfgs[0].seeds
    out = resolve_out(args, cfgs[0])
    jobs, index = [], []
    for k, cfg in enumerate(cfgs):
        cell = out / f"run{k}_{cfg.variant}"
        cell.mkdir(exist_ok=True)
        save_config(cfg, cell / "config.json")
        for seed in shared:
            jobs.append((cfg.to_dict(), seed, cell / f"metrics_seed{seed}.csv", cell / f"checkpoint_seed{seed}.apxc"))
            index.append((cfg.variant, seed, cell / f"metrics_seed{seed}.csv"))
    run_jobs(jobs, args.threads)
    write_long_csv(index, out / "compare.csv")
    write_manifest(out, cfgs[0].replace(seeds=tuple(shared)), {"configs": [str(p) for p in args.config]})
    print(out / "compare.csv")
    return 0


def write_long_csv(index, path) -> None:
    metrics = [c for c in METRIC_COLUMNS if c != "iteration"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seed", "iteration", "metric", "value"])
        for variant, seed, mpath in index:
            with open(mpath, newline="") as src:
                for row in csv.DictReader(src):
                    for m in metrics:
                        w.writerow([variant, seed, row["iteration"], m, row[m]])


# --- sweep ---------------------------------------------------------------------------


def _floats(text: str, flag: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CLIError(f"{flag} expects comma-separated numbers, got {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise CLIError(f"{flag} multipliers must be > 0")
    return vals


def sweep_cells(cfg: RunConfig, sigmas, weights, modes):
    """``(sigma_mult, weight_mult, mode, cfg)`` per grid cell.

    Sigma multipliers scale the style group's kernel widths; weight
    multipliers scale the task group's weights.
    """
    for mode in modes:
        for s in sigmas:
            for wgt in weights:
                rewards = scale_config(cfg.rewards, s, 1.0, "style")
                rewards = scale_config(rewards, 1.0, wgt, "task")
                cell = cfg.replace(rewards=rewards).with_ppo(critic_mode=mode)
                yield s, wgt, mode, cell


def cmd_sweep(args) -> int:
    cfg = load_run_config(args)
    sigmas = _floats(args.sigma, "--sigma")
    weights = _floats(args.weight, "--weight")
    modes = ["multi", "single"] if args.critic_mode == "both" else [args.critic_mode]
    out = resolve_out(args, cfg)
    jobs, index = [], []
    for s, wgt, mode, cell_cfg in sweep_cells(cfg, sigmas, weights, modes):
        cell = out / f"{mode}_sigma{s:g}_weight{wgt:g}"
        cell.mkdir(exist_ok=True)
        save_config(cell_cfg, cell / "config.json")
        for seed in cfg.seeds:
            mpath = cell / f"metrics_seed{seed}.csv"
            jobs.append((cell_cfg.to_dict(), seed, mpath, cell / f"checkpoint_seed{seed}.apxc"))
            index.append((s, wgt, mode, seed, mpath))
    run_jobs(jobs, args.threads)
    final = ["rmse_q", "rmse_h", "rmse_x_ee", "rmse_v", "eval_reward", "mean_total_reward"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["critic_mode", "sigma_mult", "weight_mult", "seed", *final])
        for s, wgt, mode, seed, mpath in index:
            rows = read_metrics(mpath)
            last = rows[-1] if rows else {}
            w.writerow([mode, repr(s), repr(wgt), seed, *(_cell(last.get(k)) for k in final)])
    write_manifest(out, cfg, {"sigma": sigmas, "weight": weights, "critic_modes": modes})
    print(out / "sweep.csv")
    return 0


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


# --- gradcheck -----------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    out = resolve_out(args)
    seed = (parse_seeds(args.seed) or (0,))[0]
    rng = np.random.default_rng(seed)
    cells = unbiasedness_grid(args.samples, rng, sigma=args.sigma)
    write_grid_csv(cells, out / "gradcheck_grid.csv")
    toy = LQToy(goal=1.0, beta=1.0, theta=0.0, sigma=args.sigma)
    rows = variance_report(toy, args.variance_samples, [0.0, 0.25, 0.5, 0.75, 1.0], np.random.default_rng(seed + 1))
    write_variance_csv(rows, out / "gradcheck_variance.csv")
    ok = sum(c.within for c in cells)
    print(f"unbiasedness: {ok}/{len(cells)} cells within 4 stderr")
    for r in rows:
        print(f"c={r.c:.2f} variance={r.variance:.4f}")
    return 0


# --- gait diagram --------------------------------------------------------------------


def cmd_gait_diagram(args) -> int:
    policy, _, _, cfg = _load_ckpt(args.checkpoint)
    gaits = cfg.gait_specs()
    n = len(gaits)
    if args.selector:
        selectors = [parse_selector(s.strip()) for s in args.selector.split(",")]
    else:
        selectors = [parse_selector(f"{m}/{n}") for m in range(n)]
    out = resolve_out(args, cfg)
    path = out / "gait_diagram.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["selector", "commanded_gait", "group", "phase_offset", "frequency", "nearest_gait"])
        for sel in selectors:
            if sel.n != n:
                raise CLIError(f"selector {sel.m}/{sel.n} does not match the checkpoint's {n} gait(s)")
            offsets, freq, _ = gait_phase(policy, cfg, sel.m)
            near = nearest_gait(offsets, [g.name for g in gaits]) or "undefined"
            for g, off in enumerate(offsets):
                w.writerow([repr(sel.value), gaits[sel.m].name, g, "undefined" if math.isnan(off) else repr(float(off)),
                            "undefined" if math.isnan(freq) else repr(freq), near])
            print(f"s={sel.value:.2f} ({gaits[sel.m].name}): offsets={np.round(offsets, 3).tolist()} nearest={near}")
    return 0


def gait_phase(policy, cfg: RunConfig, m: int, steps: int = 400, skip: int = 100):
    """Roll out selector ``m`` with the prior off and recover group phase offsets."""
    gaits = cfg.gait_specs()
    gait = gaits[m]
    q, qdot = reference_angles(gait, 0.0)
    trace = eval_rollout(
        policy_actor(policy, cfg.network.action_scale), gait, m / len(gaits), cfg.variant_config, cfg.chain,
        cfg.rewards, steps, ChainState(q, qdot), 0.0, divergence_limit=cfg.env.divergence_limit,
    )
    offsets, freq = extract_phase_offsets(trace.q[skip:], cfg.chain.dt)
    return offsets, freq, trace


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apex-rl", description="Action-prior PPO on a planar joint chain.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON run config (default: packaged defaults)")
        sp.add_argument("--seed", help="seed list N[,N...]")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else config output_dir)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes across seeds/cells")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("train", help="train one config over its seeds")
    common(sp)
    sp.add_argument("--variant", help="override the config's variant")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="deterministic evaluation of a checkpoint with the prior off")
    common(sp, config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--gait")
    sp.add_argument("--selector", help="M/N")
    sp.add_argument("--episodes", type=int, default=1)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", help="train several configs over shared seeds; long-format CSV")
    sp.add_argument("--config", action="append", required=True, help="repeat for each config")
    sp.add_argument("--seed")
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="reward sensitivity/weight grid")
    common(sp)
    sp.add_argument("--variant")
    sp.add_argument("--sigma", default="1,10", help="style sigma multipliers")
    sp.add_argument("--weight", default="1,30", help="task weight multipliers")
    sp.add_argument("--critic-mode", choices=("multi", "single", "both"), default="both")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", help="policy-gradient unbiasedness and variance on the toy problem")
    common(sp, config=False)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--variance-samples", type=int, default=1_000_000)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("gait-diagram", help="recovered phase offsets per selector")
    common(sp, config=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--selector", help="comma-separated M/N values (default: all)")
    sp.set_defaults(func=cmd_gait_diagram)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CLIError, IncompatibleCheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
