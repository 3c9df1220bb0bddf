"""Experiment orchestration: training runs, learning-rate sweeps,
risk-adjusted selection, and stability classification.

A run is deterministic given its configuration and seed.  Divergence is
first-class: a non-finite loss or gradient halts the run, the record
keeps the partial metrics (later epochs are absent, never zeroed), and
selection treats the run as worst-possible so a finite competitor always
wins.

Sweep outputs under the chosen directory:

    runs/records.jsonl    one run record per line, self-describing keys
    runs/<id>.csv         per-epoch metrics table for one run
    report.csv            per (optimizer, lr) selection scores
    stability.csv         per (optimizer, lr) stability verdicts
    figures/*.png         smoothed curves and learning-rate sensitivity

report.csv and stability.csv are byte-identical across repeated sweeps of
the same config; run records carry wall-clock timings and are not.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset, Standardizer, load_csv, load_idx, minibatches, split, synthetic_regression
from .losses import LossPair
from .network import MlpModel, backward_seeded, dual_backward, forward, init_mlp
from .numcore import SeededRng
from .optimizers import DEFAULT_EPS, HyperParams, make_optimizer

DIRECTIONS = ("minimize-upper", "maximize-lower")
STATUSES = ("STABLE", "NOISY", "FAILED")

_EVAL_CHUNK = 8192


@dataclass(frozen=True)
class RunConfig:
    optimizer: str
    hp: HyperParams
    seed: int
    epochs: int
    batch_size: int
    loss: str
    model_dims: list[int]
    hidden_activation: str = "relu"
    spike_threshold: float = 10.0

    @property
    def run_id(self) -> str:
        return f"{self.optimizer}_lr{self.hp.alpha:g}_seed{self.seed}"


@dataclass
class RunRecord:
    optimizer: str
    lr: float
    beta1: float
    beta2: float
    eps: float
    weight_decay: float
    seed: int
    epochs: int
    batch_size: int
    loss: str
    model_dims: list[int]
    dataset_fingerprint: str
    spike_threshold: float
    train_loss: list[float] = field(default_factory=list)
    eval_loss: list[float] = field(default_factory=list)
    eval_accuracy: list[float] = field(default_factory=list)
    max_grad_inf: list[float] = field(default_factory=list)
    max_aux_grad_inf: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)
    spike_epochs: int = 0
    spike_steps: int = 0
    max_grad_seen: float = 0.0
    nan_event: bool = False
    first_nan_step: int | None = None

    @property
    def run_id(self) -> str:
        return f"{self.optimizer}_lr{self.lr:g}_seed{self.seed}"

    @property
    def completed_epochs(self) -> int:
        return len(self.train_loss)

    def metric(self, name: str) -> list[float]:
        if name not in ("train_loss", "eval_loss", "eval_accuracy"):
            raise ValueError(f"unknown metric {name!r}")
        return getattr(self, name)

    def to_json(self) -> str:
        payload = asdict(self)
        payload["run_id"] = self.run_id
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        payload = json.loads(line)
        payload.pop("run_id", None)
        return cls(**payload)


def _evaluate(model: MlpModel, ds: Dataset, loss_kind: str) -> tuple[float, float | None]:
    """Mean loss (and accuracy for classification) over a held-out set."""
    total_loss = 0.0
    correct = 0
    pair = LossPair(loss_kind)
    for start in range(0, ds.n, _EVAL_CHUNK):
        idx = np.arange(start, min(start + _EVAL_CHUNK, ds.n))
        x, y = ds.columns(idx)
        p = forward(model, x).outputs
        total_loss += pair.loss_value(p, y) * idx.size
        if ds.task == "classification":
            correct += int((p.argmax(axis=0) == y.argmax(axis=0)).sum())
    accuracy = correct / ds.n if ds.task == "classification" else None
    return total_loss / ds.n, accuracy


def train(
    cfg: RunConfig,
    train_ds: Dataset,
    eval_ds: Dataset,
    model: MlpModel | None = None,
) -> RunRecord:
    """Train one model; deterministic given (config, datasets, seed).

    The auxiliary-scaled optimizers get their auxiliary gradient through a
    second backward pass over the shared forward cache; adam/adamw run a
    single backward pass.  The per-step infinity norm of the primary loss
    gradient is the telemetry driving spikes and stability.
    """
    rng = SeededRng(cfg.seed)
    if model is None:
        model = init_mlp(cfg.model_dims, rng.derive(0), cfg.hidden_activation)
    opt = make_optimizer(cfg.optimizer, cfg.hp)
    batch_rng = rng.derive(1)
    params = model.parameters()
    pair = LossPair(cfg.loss)
    record = RunRecord(
        optimizer=cfg.optimizer,
        lr=cfg.hp.alpha,
        beta1=cfg.hp.beta1,
        beta2=cfg.hp.beta2,
        eps=cfg.hp.eps,
        weight_decay=cfg.hp.weight_decay,
        seed=cfg.seed,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        loss=cfg.loss,
        model_dims=list(cfg.model_dims),
        dataset_fingerprint=train_ds.fingerprint(),
        spike_threshold=cfg.spike_threshold,
    )
    step = 0
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        batch_losses: list[float] = []
        epoch_gmax = 0.0
        epoch_aux_gmax = 0.0
        epoch_spike_steps = 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for idx in minibatches(train_ds, cfg.batch_size, batch_rng, epoch):
                x, y = train_ds.columns(idx)
                cache = forward(model, x)
                loss = pair.loss_value(cache.outputs, y)
                seed_primary = pair.primary_seed(cache.outputs, y)
                if opt.needs_aux:
                    g, g_aux = dual_backward(
                        model, cache, seed_primary, pair.aux_seed(cache.outputs, y),
                        average=False,
                    )
                else:
                    g = backward_seeded(model, cache, seed_primary, average=False)
                    g_aux = None
                step += 1
                gmax = g.max_abs()
                if not math.isnan(gmax):
                    epoch_gmax = max(epoch_gmax, gmax)
                    record.max_grad_seen = max(record.max_grad_seen, gmax)
                    if gmax > cfg.spike_threshold:
                        epoch_spike_steps += 1
                if g_aux is not None:
                    aux_max = g_aux.max_abs()
                    if not math.isnan(aux_max):
                        epoch_aux_gmax = max(epoch_aux_gmax, aux_max)
                if not (
                    math.isfinite(loss)
                    and g.all_finite()
                    and (g_aux is None or g_aux.all_finite())
                ):
                    record.nan_event = True
                    record.first_nan_step = step
                    record.spike_steps += epoch_spike_steps
                    if epoch_spike_steps:
                        record.spike_epochs += 1
                    return record
                batch_losses.append(loss)
                params = opt.step(
                    params, g.arrays(), g_aux.arrays() if g_aux is not None else None
                )
                model.set_parameters(params)
        eval_loss, eval_acc = _evaluate(model, eval_ds, cfg.loss)
        record.train_loss.append(float(np.mean(batch_losses)))
        record.eval_loss.append(eval_loss)
        if eval_acc is not None:
            record.eval_accuracy.append(eval_acc)
        record.max_grad_inf.append(epoch_gmax)
        record.max_aux_grad_inf.append(epoch_aux_gmax)
        record.spike_steps += epoch_spike_steps
        if epoch_spike_steps:
            record.spike_epochs += 1
        record.wall_time.append(time.perf_counter() - started)
    return record


# ---------------------------------------------------------------------------
# Selection scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionScore:
    mean: float
    std: float
    c: float
    direction: str
    window: int
    score: float


def combine_score(mean: float, std: float, c: float, direction: str) -> float:
    """Risk-adjusted score: mean + c*std when minimizing an upper bound,
    mean - c*std when maximizing a lower bound."""
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    return mean + c * std if direction == "minimize-upper" else mean - c * std


def selection_score(
    records: list[RunRecord],
    metric: str,
    window: int,
    c: float,
    direction: str,
) -> SelectionScore:
    """Score a group of runs (one per seed) over the last ``window`` epochs.

    Per-record scores are averaged across seeds; diverged runs score
    worst-possible, which propagates so the group can never beat a
    finite one.
    """
    if window < 2:
        raise ValueError("window must be at least 2 (std undefined otherwise)")
    if not records:
        raise ValueError("no records to score")
    worst = math.inf if direction == "minimize-upper" else -math.inf
    means, stds, scores = [], [], []
    for rec in records:
        if rec.nan_event:
            means.append(worst)
            stds.append(0.0)
            scores.append(worst)
            continue
        series = rec.metric(metric)
        if len(series) < window:
            raise ValueError(
                f"{rec.run_id}: {len(series)} epochs of {metric}, window is {window}"
            )
        tail = np.asarray(series[-window:])
        mu = float(tail.mean())
        sigma = float(tail.std())
        means.append(mu)
        stds.append(sigma)
        scores.append(combine_score(mu, sigma, c, direction))
    return SelectionScore(
        mean=float(np.mean(means)),
        std=float(np.mean(stds)),
        c=c,
        direction=direction,
        window=window,
        score=float(np.mean(scores)),
    )


def ema_smooth(series, alpha: float) -> np.ndarray:
    """Exponential moving average: s_0 = x_0, s_t = a x_t + (1-a) s_{t-1}."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    values = np.asarray(series, dtype=np.float64)
    out = np.empty_like(values)
    if values.size == 0:
        return out
    out[0] = values[0]
    for t in range(1, values.size):
        out[t] = alpha * values[t] + (1.0 - alpha) * out[t - 1]
    return out


# ---------------------------------------------------------------------------
# Stability classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityVerdict:
    optimizer: str
    lr: float
    max_grad: float
    avg_spikes: float
    nan_failures: int
    status: str


def classify_stability(max_grad: float, avg_spikes: float, nan_failures: int) -> str:
    """FAILED beats NOISY beats STABLE."""
    if nan_failures > 0:
        return "FAILED"
    if avg_spikes > 0:
        return "NOISY"
    return "STABLE"


def stability_report(
    records: list[RunRecord],
    spike_threshold: float = 10.0,
    mode: str = "epoch",
) -> list[StabilityVerdict]:
    """Per (optimizer, lr) cell: max gradient norm seen across runs, mean
    spike count, divergence count, and the verdict.

    Epoch mode counts completed epochs whose max gradient norm exceeded
    the threshold (recomputable for any threshold); step mode uses the
    per-step counts taken at each run's own recorded threshold.
    """
    if mode not in ("epoch", "step"):
        raise ValueError("mode must be 'epoch' or 'step'")
    cells: dict[tuple[str, float], list[RunRecord]] = {}
    for rec in records:
        cells.setdefault((rec.optimizer, rec.lr), []).append(rec)
    verdicts = []
    for (opt, lr), group in cells.items():
        max_grad = max(rec.max_grad_seen for rec in group)
        if mode == "epoch":
            counts = [
                sum(1 for gmax in rec.max_grad_inf if gmax > spike_threshold)
                for rec in group
            ]
        else:
            counts = [rec.spike_steps for rec in group]
        nan_failures = sum(1 for rec in group if rec.nan_event)
        avg_spikes = float(np.mean(counts))
        verdicts.append(
            StabilityVerdict(
                optimizer=opt,
                lr=lr,
                max_grad=max_grad,
                avg_spikes=avg_spikes,
                nan_failures=nan_failures,
                status=classify_stability(max_grad, avg_spikes, nan_failures),
            )
        )
    return verdicts


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float | None = None  # None: family default
    weight_decay: float = 0.0

    def hyperparams(self, lr: float) -> HyperParams:
        eps = self.eps if self.eps is not None else DEFAULT_EPS[self.kind]
        return HyperParams(
            alpha=lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=eps,
            weight_decay=self.weight_decay,
        )


@dataclass
class SweepConfig:
    dataset: dict
    model_hidden: list[int]
    loss: str
    optimizers: list[OptimizerSpec]
    grid: list[float]
    seeds: list[int]
    epochs: int
    batch_size: int
    metric: str = "eval_loss"
    window: int | None = None  # None: ceil(10% of epochs)
    c: float = 2.0
    direction: str = "minimize-upper"
    train_fraction: float = 0.8
    split_seed: int = 0
    standardize: bool = True
    hidden_activation: str = "relu"
    spike_threshold: float = 10.0
    spike_mode: str = "epoch"
    ema_alpha: float = 0.3

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepConfig":
        sel = raw.get("selection", {})
        spl = raw.get("split", {})
        return cls(
            dataset=raw["dataset"],
            model_hidden=list(raw.get("model", {}).get("hidden", [])),
            loss=raw["loss"],
            optimizers=[OptimizerSpec(**spec) for spec in raw["optimizers"]],
            grid=[float(x) for x in raw["grid"]],
            seeds=[int(s) for s in raw["seeds"]],
            epochs=int(raw["epochs"]),
            batch_size=int(raw["batch_size"]),
            metric=sel.get("metric", "eval_loss"),
            window=sel.get("window"),
            c=float(sel.get("c", 2.0)),
            direction=sel.get("direction", "minimize-upper"),
            train_fraction=float(spl.get("train_fraction", 0.8)),
            split_seed=int(spl.get("seed", 0)),
            standardize=bool(raw.get("standardize", True)),
            hidden_activation=raw.get("model", {}).get("activation", "relu"),
            spike_threshold=float(raw.get("spike_threshold", 10.0)),
            spike_mode=raw.get("spike_mode", "epoch"),
            ema_alpha=float(raw.get("ema_alpha", 0.3)),
        )

    @property
    def selection_window(self) -> int:
        if self.window is not None:
            return int(self.window)
        return max(2, math.ceil(0.1 * self.epochs))


@dataclass(frozen=True)
class SelectionRow:
    optimizer: str
    lr: float
    mean: float
    std: float
    score: float
    selected: bool


@dataclass
class SweepReport:
    rows: list[SelectionRow]
    best: dict[str, float]  # optimizer -> selected lr
    verdicts: list[StabilityVerdict]
    records: list[RunRecord]


def build_datasets(cfg: SweepConfig) -> tuple[Dataset, Dataset]:
    """Materialize (train, eval) per the config's dataset section."""
    spec = dict(cfg.dataset)
    kind = spec.pop("kind")
    if kind == "synthetic-regression":
        ds = synthetic_regression(
            SeededRng(int(spec.get("seed", 0))),
            n=int(spec["n"]),
            d_x=int(spec["d_x"]),
            noise_std=float(spec.get("noise_std", 0.0)),
        )
        train_ds, eval_ds = split(ds, cfg.train_fraction, SeededRng(cfg.split_seed))
    elif kind == "csv":
        ds = load_csv(
            spec["path"],
            feature_columns=[int(i) for i in spec["feature_columns"]],
            target_columns=[int(i) for i in spec["target_columns"]],
            header=bool(spec.get("header", True)),
            task=spec.get("task", "regression"),
            class_count=spec.get("class_count"),
        )
        train_ds, eval_ds = split(ds, cfg.train_fraction, SeededRng(cfg.split_seed))
    elif kind == "idx":
        train_ds = load_idx(spec["train_images"], spec["train_labels"])
        eval_ds = load_idx(spec["test_images"], spec["test_labels"])
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    if cfg.standardize:
        feat_std = Standardizer.fit(train_ds.features)
        train_feat = feat_std.transform(train_ds.features)
        eval_feat = feat_std.transform(eval_ds.features)
        if train_ds.task == "regression":
            targ_std = Standardizer.fit(train_ds.targets)
            train_targ = targ_std.transform(train_ds.targets)
            eval_targ = targ_std.transform(eval_ds.targets)
        else:
            train_targ, eval_targ = train_ds.targets, eval_ds.targets
        train_ds = Dataset(train_feat, train_targ, train_ds.task, train_ds.class_count)
        eval_ds = Dataset(eval_feat, eval_targ, eval_ds.task, eval_ds.class_count)
    return train_ds, eval_ds


def _run_cell(
    cfg: SweepConfig, spec: OptimizerSpec, lr: float, seed: int,
    train_ds: Dataset, eval_ds: Dataset,
) -> RunRecord:
    dims = [train_ds.features.shape[0]] + list(cfg.model_hidden) + [
        train_ds.targets.shape[0]
    ]
    run_cfg = RunConfig(
        optimizer=spec.kind,
        hp=spec.hyperparams(lr),
        seed=seed,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        loss=cfg.loss,
        model_dims=dims,
        hidden_activation=cfg.hidden_activation,
        spike_threshold=cfg.spike_threshold,
    )
    return train(run_cfg, train_ds, eval_ds)


def sweep(
    cfg: SweepConfig,
    out_dir: str | None = None,
    threads: int = 1,
    render_figures: bool = True,
) -> SweepReport:
    """Run every (optimizer, lr, seed) cell, score and classify them, and
    optionally persist reports, records, and figures.

    Cells are independent; with threads > 1 they run concurrently, and
    aggregation stays a deterministic reduce in (optimizer, lr, seed)
    order, so the outputs do not depend on scheduling.
    """
    train_ds, eval_ds = build_datasets(cfg)
    cells = [
        (spec, lr, seed)
        for spec in cfg.optimizers
        for lr in cfg.grid
        for seed in cfg.seeds
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(
                pool.map(
                    lambda cell: _run_cell(cfg, *cell, train_ds, eval_ds), cells
                )
            )
    else:
        records = [_run_cell(cfg, *cell, train_ds, eval_ds) for cell in cells]

    by_cell: dict[tuple[str, float], list[RunRecord]] = {}
    for rec in records:
        by_cell.setdefault((rec.optimizer, rec.lr), []).append(rec)

    window = cfg.selection_window
    rows: list[SelectionRow] = []
    best: dict[str, float] = {}
    for spec in cfg.optimizers:
        cell_scores = []
        for lr in cfg.grid:
            sc = selection_score(
                by_cell[(spec.kind, lr)], cfg.metric, window, cfg.c, cfg.direction
            )
            cell_scores.append((lr, sc))
        # argbest with ties broken toward the smaller learning rate
        ordered = sorted(cell_scores, key=lambda item: item[0])
        if cfg.direction == "minimize-upper":
            best_lr = min(ordered, key=lambda item: item[1].score)[0]
        else:
            best_lr = max(ordered, key=lambda item: item[1].score)[0]
        best[spec.kind] = best_lr
        for lr, sc in cell_scores:
            rows.append(
                SelectionRow(
                    optimizer=spec.kind,
                    lr=lr,
                    mean=sc.mean,
                    std=sc.std,
                    score=sc.score,
                    selected=lr == best_lr,
                )
            )

    verdicts = stability_report(records, cfg.spike_threshold, cfg.spike_mode)
    report = SweepReport(rows=rows, best=best, verdicts=verdicts, records=records)
    if out_dir is not None:
        write_sweep_outputs(report, cfg, out_dir, render_figures=render_figures)
    return report


def write_sweep_outputs(
    report: SweepReport,
    cfg: SweepConfig,
    out_dir: str,
    render_figures: bool = True,
) -> None:
    runs_dir = os.path.join(out_dir, "runs")
    os.makedirs(runs_dir, exist_ok=True)
    with open(os.path.join(runs_dir, "records.jsonl"), "w", encoding="utf-8") as fh:
        for rec in report.records:
            fh.write(rec.to_json() + "\n")
    for rec in report.records:
        write_run_metrics_csv(rec, os.path.join(runs_dir, f"{rec.run_id}.csv"))
    write_report_csv(report.rows, os.path.join(out_dir, "report.csv"))
    write_stability_csv(report.verdicts, os.path.join(out_dir, "stability.csv"))
    if render_figures:
        from . import figures

        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        figures.render_selected_curves(
            report, cfg.metric, os.path.join(fig_dir, f"curves_{cfg.metric}.png"),
            ema_alpha=cfg.ema_alpha,
        )
        figures.render_lr_sensitivity(
            report.rows, os.path.join(fig_dir, f"lr_sensitivity_{cfg.metric}.png"),
            direction=cfg.direction,
        )


def write_run_metrics_csv(rec: RunRecord, path: str) -> None:
    cols = ["epoch", "train_loss", "eval_loss", "eval_accuracy",
            "max_grad_inf", "max_aux_grad_inf"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for e in range(rec.completed_epochs):
            acc = repr(rec.eval_accuracy[e]) if rec.eval_accuracy else ""
            fh.write(
                f"{e},{rec.train_loss[e]!r},{rec.eval_loss[e]!r},{acc},"
                f"{rec.max_grad_inf[e]!r},{rec.max_aux_grad_inf[e]!r}\n"
            )


def write_report_csv(rows: list[SelectionRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("optimizer,lr,mean,std,score,selected\n")
        for r in rows:
            fh.write(
                f"{r.optimizer},{r.lr!r},{r.mean!r},{r.std!r},{r.score!r},"
                f"{int(r.selected)}\n"
            )


def write_stability_csv(verdicts: list[StabilityVerdict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("optimizer,lr,max_grad_inf,avg_spikes,nan_failures,status\n")
        for v in verdicts:
            fh.write(
                f"{v.optimizer},{v.lr!r},{v.max_grad!r},{v.avg_spikes!r},"
                f"{v.nan_failures},{v.status}\n"
            )


def read_records_jsonl(path: str) -> list[RunRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_json(line))
    return records
