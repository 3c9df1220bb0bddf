"""Command-line interface.

Subcommands:

    train        one (optimizer, lr, seed) run from a config file
    sweep        the full learning-rate grid; writes reports and figures
    stability    stability verdicts from persisted run records
    verify-aux   auxiliary-seed vs finite-difference Hessian check
    bound        convergence-bound check on the log-cosh test function
    lemmas       randomized sweeps of the lemma inequalities

The output directory defaults to $LEHI_OUTPUT_DIR, then ./lehi-out.
Errors exit nonzero with a single "error: ..." line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys

import numpy as np

from . import bounds, harness
from .losses import LossPair, verify_hessian_identity
from .numcore import SeededRng
from .optimizers import HyperParams


def _default_out() -> str:
    return os.environ.get("LEHI_OUTPUT_DIR", "lehi-out")


def _load_config(path: str) -> harness.SweepConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return harness.SweepConfig.from_dict(json.load(fh))


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ValueError(f"grid must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ValueError("grid needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    spec = next(
        (s for s in cfg.optimizers if args.optimizer in (None, s.kind)), None
    )
    if spec is None:
        raise ValueError(f"optimizer {args.optimizer!r} not in config")
    lr = args.lr if args.lr is not None else cfg.grid[0]
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    epochs = args.epochs if args.epochs is not None else cfg.epochs
    train_ds, eval_ds = harness.build_datasets(cfg)
    dims = [train_ds.features.shape[0]] + cfg.model_hidden + [train_ds.targets.shape[0]]
    run_cfg = harness.RunConfig(
        optimizer=spec.kind,
        hp=spec.hyperparams(lr),
        seed=seed,
        epochs=epochs,
        batch_size=cfg.batch_size,
        loss=cfg.loss,
        model_dims=dims,
        hidden_activation=cfg.hidden_activation,
        spike_threshold=cfg.spike_threshold,
    )
    record = harness.train(run_cfg, train_ds, eval_ds)
    out = args.out
    runs_dir = os.path.join(out, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    with open(os.path.join(runs_dir, "records.jsonl"), "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")
    harness.write_run_metrics_csv(record, os.path.join(runs_dir, f"{record.run_id}.csv"))
    from . import figures

    fig_dir = os.path.join(out, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    metrics = ["train_loss", "eval_loss"]
    if record.eval_accuracy:
        metrics.append("eval_accuracy")
    figures.render_run_curves(
        [record], metrics, os.path.join(fig_dir, f"run_{record.run_id}.png"),
        ema_alpha=cfg.ema_alpha, title=record.run_id,
    )
    status = "diverged" if record.nan_event else "completed"
    final = record.eval_loss[-1] if record.eval_loss else float("nan")
    print(
        f"{record.run_id}: {status}, epochs={record.completed_epochs}, "
        f"final eval_loss={final:.6g}, max |grad|_inf={record.max_grad_seen:.3g}"
    )
    return 1 if record.nan_event else 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    report = harness.sweep(
        cfg, out_dir=args.out, threads=args.threads, render_figures=not args.no_figures
    )
    for optimizer, lr in report.best.items():
        row = next(r for r in report.rows if r.optimizer == optimizer and r.selected)
        print(f"{optimizer}: selected lr={lr:g} (score={row.score:.6g})")
    print(f"report written to {args.out}")
    return 0


def cmd_stability(args) -> int:
    records = harness.read_records_jsonl(os.path.join(args.runs, "records.jsonl"))
    if not records:
        raise ValueError(f"no records under {args.runs}")
    verdicts = harness.stability_report(records, args.spike_threshold, args.mode)
    for v in verdicts:
        print(
            f"{v.optimizer} lr={v.lr:g}: max|grad|={v.max_grad:.3g} "
            f"spikes={v.avg_spikes:.2f} nans={v.nan_failures} -> {v.status}"
        )
    if args.out:
        harness.write_stability_csv(verdicts, args.out)
    return 0


def cmd_verify_aux(args) -> int:
    grid = _parse_grid(args.grid)
    rng = SeededRng(args.seed)
    pair = LossPair(args.loss, batch_scale=1)
    max_err = 0.0
    if args.loss in ("mse", "bce"):
        for p_val in grid:
            p = np.array([[p_val]])
            y = np.array([[1.0 if p_val >= 0 else 0.0]])
            result = verify_hessian_identity(pair, p, y, args.tol)
            max_err = max(max_err, result["max_abs_error"])
    else:
        for p_val in grid:
            p = p_val + rng.normal(args.classes, 1)
            y = np.zeros((args.classes, 1))
            y[0, 0] = 1.0
            result = verify_hessian_identity(pair, p, y, args.tol)
            max_err = max(max_err, result["max_abs_error"])
    ok = max_err < args.tol
    print(f"loss={args.loss} grid_points={grid.size} max_abs_error={max_err:.3e} "
          f"tol={args.tol:g} -> {'ok' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_bound(args) -> int:
    hp = HyperParams(alpha=args.alpha, beta1=args.beta1, beta2=args.beta2, eps=args.eps)
    result = bounds.check_bound_on_trajectory(hp, K=args.iters, d=args.dim, w_start=args.w0)
    margin = result["rhs"] - result["lhs"]
    print(
        f"lhs={result['lhs']:.6e} rhs={result['rhs']:.6e} margin={margin:.6e} "
        f"satisfied={result['satisfied']}"
    )
    return 0 if result["satisfied"] else 1


def cmd_lemmas(args) -> int:
    rng = SeededRng(args.seed)
    failures = 0
    for trial in range(args.trials):
        sub = rng.derive(trial)
        length = 1 + int(sub.uniform(1, 1)[0, 0] * args.max_len)
        a = (sub.uniform(1, length) * 20.0 - 10.0).ravel()
        beta1 = float(sub.uniform(1, 1)[0, 0]) * 0.98
        beta2 = beta1 + (1.0 - beta1) * (0.01 + 0.98 * float(sub.uniform(1, 1)[0, 0]))
        eps = 10.0 ** (-8.0 * float(sub.uniform(1, 1)[0, 0]))
        if not bounds.lemma_sum_check(a, beta1, beta2, eps)["ok"]:
            failures += 1
    geo_checked = geo_failures = 0
    for beta in np.arange(0.1, 1.0, 0.01):
        for k in (1, 2, 5, 10, 50, 100, 500, 1000):
            geo_checked += 1
            if not bounds.geometric_lemma_check(float(beta), k)["ok"]:
                geo_failures += 1
    print(f"sum-lemma trials={args.trials} failures={failures}")
    print(f"geometric-lemma checks={geo_checked} failures={geo_failures}")
    return 0 if failures == 0 and geo_failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lehi", description="optimizer benchmark and verification toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a single training configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--optimizer", help="optimizer kind from the config (default: first)")
    p.add_argument("--lr", type=float, help="learning rate (default: first grid entry)")
    p.add_argument("--seed", type=int, help="run seed (default: first config seed)")
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.add_argument("--out", default=_default_out())
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the full learning-rate sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--threads", type=int, default=1, help="parallel cells cap")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stability", help="classify persisted runs")
    p.add_argument("--runs", required=True, help="directory holding records.jsonl")
    p.add_argument("--spike-threshold", type=float, default=10.0)
    p.add_argument("--mode", choices=("epoch", "step"), default="epoch")
    p.add_argument("--out", help="optional stability.csv path")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("verify-aux", help="auxiliary-seed Hessian identity check")
    # let grid values like -10:10:0.5 pass as arguments, not option strings
    p._negative_number_matcher = re.compile(r"^-\d+(\.\d+)?(:|$)")
    p.add_argument("--loss", required=True, choices=("mse", "bce", "multiclass-ce"))
    p.add_argument("--grid", default="-10:10:0.5", help="start:stop:step of logit values")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--classes", type=int, default=3, help="class count for multiclass-ce")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_aux)

    p = sub.add_parser("bound", help="convergence-bound trajectory check")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--w0", type=float, default=0.5)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("lemmas", help="randomized lemma-inequality sweeps")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--max-len", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lemmas)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
