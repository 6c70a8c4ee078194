"""Command-line surface: train, generate, sweep, check.

Exit codes: 0 success, 1 check failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .bundle import init_bundle
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .checks import run_grad_checks, run_theory_checks
from .config import ConfigError, RunConfig, apply_seed_env, load_config
from .engine import GenerationConfig, generate_nara, generate_pure_ar
from .training import SinusoidParams, TrainingConfig, make_sinusoids, train

SWEEP_COLUMNS = "epsilon,acceptance_ratio_pct,mean_l1,sequential_rounds,draft_passes,wall_ms"


def _fmt17(v: float) -> str:
    return f"{float(v):.17g}"


def dataset_from_config(cfg: RunConfig):
    params = SinusoidParams(
        amp_range=(cfg.dataset_amp_min, cfg.dataset_amp_max),
        freq_range=(cfg.dataset_freq_min, cfg.dataset_freq_max),
        noise_std=cfg.dataset_noise,
        length=cfg.dataset_length,
        count=cfg.dataset_count,
        train_fraction=cfg.dataset_train_frac,
    )
    return make_sinusoids(params, cfg.seed)


def bundle_from_config(cfg: RunConfig):
    return init_bundle(
        window=cfg.o,
        chunk=cfg.M,
        hidden=cfg.hidden,
        layers=cfg.layers,
        kappa=cfg.kappa,
        calibration_mode=cfg.calibration,
        seed=cfg.seed,
        config=cfg,
    )


def _write_epoch_log(path: str, logs) -> None:
    def cell(v):
        return "" if v is None else _fmt17(v)

    lines = ["epoch,train_nll,val_nll,prior_l1,conf_bce"]
    for row in logs:
        lines.append(
            f"{row.epoch},{cell(row.train_nll)},{cell(row.val_nll)},{cell(row.prior_l1)},{cell(row.conf_bce)}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_train(args) -> int:
    cfg = apply_seed_env(load_config(args.config))
    dataset = dataset_from_config(cfg)
    bundle = bundle_from_config(cfg)
    bundle.data_mean = dataset.mean
    bundle.data_std = dataset.std
    tcfg = TrainingConfig(lr=cfg.lr, batch=cfg.batch, max_chunk=cfg.B, epochs=cfg.epochs, seed=cfg.seed)
    bundle, logs = train(bundle, dataset, tcfg)
    save_checkpoint(bundle, args.out)
    log_path = args.log if args.log else args.out + ".log.csv"
    _write_epoch_log(log_path, logs)
    print(f"wrote checkpoint {args.out} and epoch log {log_path}")
    return 0


def parse_grid(spec: str) -> list[float]:
    """'start:stop:step' inclusive; values rounded to 9 decimals."""
    try:
        start, stop, step = (float(p) for p in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad grid {spec!r}; expected start:stop:step") from exc
    if step <= 0 or stop < start:
        raise ConfigError("grid requires step > 0 and stop >= start")
    count = int(round((stop - start) / step)) + 1
    grid = [round(start + i * step, 9) for i in range(count)]
    return [g for g in grid if g <= stop + 1e-12]


def run_sweep(bundle, dataset, grid, horizon: int, seed: int):
    """One row per ε: acceptance %, mean l1 vs the true futures, round counters."""
    cfg0 = bundle.config
    window = cfg0.o
    rows = []
    contexts = []
    futures = []
    for seq in dataset.validation:
        if seq.shape[0] < window + horizon:
            continue
        contexts.append(seq[:window])
        futures.append(seq[window : window + horizon])
    if not contexts:
        raise ValueError("validation sequences shorter than window + horizon")
    for eps in grid:
        t0 = time.perf_counter()
        accepted = 0
        emitted = 0
        rounds = 0
        passes = 0
        l1 = 0.0
        for ctx, fut in zip(contexts, futures):
            gcfg = GenerationConfig(epsilon=eps, chunk=cfg0.M, window=window, horizon=horizon, seed=seed)
            trace = generate_nara(bundle, ctx, gcfg)
            accepted += trace.accepted_total
            emitted += trace.accepted_total + trace.resampled_total
            rounds += trace.sequential_rounds
            passes += trace.draft_passes
            l1 += float(np.sum(np.abs(trace.values - fut)))
        rows.append(
            {
                "epsilon": eps,
                "acceptance_ratio_pct": 100.0 * accepted / emitted,
                "mean_l1": l1 / emitted,
                "sequential_rounds": rounds,
                "draft_passes": passes,
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
        )
    return rows


def write_sweep_csv(rows, path: str) -> None:
    lines = [SWEEP_COLUMNS]
    for r in rows:
        lines.append(
            f"{r['epsilon']:g},{_fmt17(r['acceptance_ratio_pct'])},{_fmt17(r['mean_l1'])},"
            f"{r['sequential_rounds']},{r['draft_passes']},{r['wall_ms']:.3f}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def plot_sweep(rows, path: str) -> None:
    """Best-effort two-series plot (error and acceptance vs ε); never raises."""
    try:
        import matplotlib

        matplotlib.use("svg")
        import matplotlib.pyplot as plt

        eps = [r["epsilon"] for r in rows]
        fig, ax1 = plt.subplots(figsize=(6, 4))
        ax1.plot(eps, [r["mean_l1"] for r in rows], "o-", color="tab:blue", label="mean l1")
        ax1.set_xlabel("epsilon")
        ax1.set_ylabel("mean l1 error", color="tab:blue")
        ax2 = ax1.twinx()
        ax2.plot(eps, [r["acceptance_ratio_pct"] for r in rows], "s-", color="tab:red", label="acceptance %")
        ax2.set_ylabel("acceptance (%)", color="tab:red")
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)
    except Exception as exc:  # plotting must not affect exit codes
        print(f"plot skipped: {exc}", file=sys.stderr)


def cmd_sweep(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    if not bundle.conf_trained:
        raise ConfigError("confidence predictor untrained")
    cfg = bundle.config
    seed = cfg.seed
    env = os.environ.get("NARA_SEED")
    if env:
        seed = int(env)
    if args.seed is not None:
        seed = args.seed
    dataset = dataset_from_config(cfg)
    grid = parse_grid(args.grid)
    horizon = args.horizon if args.horizon is not None else cfg.H
    rows = run_sweep(bundle, dataset, grid, horizon, seed)
    write_sweep_csv(rows, args.out)
    if args.plot:
        plot_sweep(rows, args.plot)
    print(f"wrote sweep report {args.out}")
    return 0


def cmd_generate(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    if not bundle.theta_trained:
        raise ConfigError("base model untrained")
    cfg = bundle.config
    seed = cfg.seed
    env = os.environ.get("NARA_SEED")
    if env:
        seed = int(env)
    if args.seed is not None:
        seed = args.seed
    try:
        with open(args.context_file, "r", encoding="utf-8") as fh:
            raw = [float(line) for line in fh.read().split()]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"malformed context file: {exc}") from exc
    if not raw:
        raise ConfigError("context file is empty")
    if args.horizon == 0:
        return 0
    context = bundle.standardize(raw)
    if args.epsilon >= 1.0:
        trace = generate_pure_ar(bundle.ar, context, args.horizon, seed)
    else:
        if not bundle.conf_trained:
            raise ConfigError("confidence predictor untrained")
        gcfg = GenerationConfig(
            epsilon=args.epsilon, chunk=cfg.M, window=cfg.o, horizon=args.horizon, seed=seed
        )
        trace = generate_nara(bundle, context, gcfg)
    for v in bundle.destandardize(trace.values):
        print(_fmt17(v))
    print(
        f"# rounds={trace.sequential_rounds} draft_passes={trace.draft_passes} "
        f"accepted={trace.accepted_total} resampled={trace.resampled_total}",
        file=sys.stderr,
    )
    return 0


def cmd_check(args) -> int:
    if args.what == "grad":
        results = run_grad_checks(seed=args.seed or 0)
    else:
        results = run_theory_checks(seed=args.seed or 0)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {args.what}:{r.name} max_residual={r.residual:.3e} tol={r.tol:g}")
    if failed:
        worst = max(failed, key=lambda r: r.residual / r.tol)
        print(f"FAIL worst offender: {worst.name} residual={worst.residual:.3e}")
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nara", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a bundle from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--log", default=None, help="epoch log CSV path (default: <out>.log.csv)")
    t.set_defaults(fn=cmd_train)

    g = sub.add_parser("generate", help="generate a continuation of a context file")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--epsilon", type=float, required=True)
    g.add_argument("--context-file", required=True)
    g.add_argument("--horizon", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("sweep", help="ε-sweep benchmark over validation contexts")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--grid", default="0.0:1.0:0.1")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", default=None)
    s.add_argument("--horizon", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(fn=cmd_sweep)

    c = sub.add_parser("check", help="run the gradient or theory verification suite")
    c.add_argument("--what", choices=("grad", "theory"), required=True)
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(fn=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
