"""Alternating-minimization training loop.

Each round generates a fresh batch of negatives by refining uniform draws
toward the current classifier's target level set, then runs parameter updates
against a positive batch. The lazy variant (``train``) does a fixed number K
of updates per round; the full variant (``train_full_alternation``) keeps
updating on the same pair of batches until the risk plateaus before the
negatives are refreshed.

During the warm-start epochs the refinement is skipped (T=0), so negatives
are plain uniform samples from the domain box.

A complementary distribution must keep a 2*margin gap from the data support;
generated points that land closer than that to a training point are not
complementary and are dropped from the round's negative batch. On volumetric
supports this matters a lot: without the gap the stray in-support negatives
carry the full hinge weight and pin the learned field near +margin instead
of letting it stretch into the distance function.
"""

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .data_io import domain_box
from .hkr import (HKRParams, RMSPropState, bce_grad, bce_loss, hkr_batch_risk,
                  hkr_grad, rmsprop_step)
from .sampler import SamplerConfig, newton_raphson_negatives

PLATEAU_REL_TOL = 1e-4
PLATEAU_PATIENCE = 50
MAX_INNER_UPDATES = 2000


class TrainingDiverged(RuntimeError):
    """Raised when the batch risk becomes non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 40
    warm_start_epochs: int = 5
    updates_per_round: int = 1  # K
    batch_size: int = 128
    hkr: HKRParams = field(default_factory=HKRParams)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    lr_start: float = 1e-3
    lr_end: float = 1e-3
    seed: int = 0
    constrained: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.warm_start_epochs <= self.epochs:
            raise ValueError("warm_start_epochs must be in [0, epochs]")
        if self.updates_per_round < 1:
            raise ValueError("updates_per_round must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    steps: list = field(default_factory=list)
    risks: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    final_grad_norm_mean: float = float("nan")
    final_grad_norm_max: float = float("nan")
    total_rounds: int = 0
    converged_rounds: int = 0


def write_run_report(path, report):
    """CSV of (step, risk, lr), one row per optimizer step."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "risk", "lr"])
        for step, risk, lr in zip(report.steps, report.risks, report.lrs):
            writer.writerow([step, repr(float(risk)), repr(float(lr))])


def train(data, net, cfg, rng=None, box=None, checkpoint_dir=None):
    """Lazy alternation: K optimizer updates per negative-batch refresh."""
    return _run(data, net, cfg, rng, box, checkpoint_dir, plateau=False)


def train_full_alternation(data, net, cfg, rng=None, box=None,
                           checkpoint_dir=None, plateau_rel_tol=PLATEAU_REL_TOL,
                           patience=PLATEAU_PATIENCE,
                           max_inner_updates=MAX_INNER_UPDATES):
    """Full alternation: updates on each batch pair continue until the risk
    plateaus (relative change below plateau_rel_tol across the patience
    window) before the negatives are regenerated.

    With a plateau rule that never fires within max_inner_updates this is
    update-for-update identical to ``train`` with K = max_inner_updates.
    """
    return _run(data, net, cfg, rng, box, checkpoint_dir, plateau=True,
                plateau_rel_tol=plateau_rel_tol, patience=patience,
                max_inner_updates=max_inner_updates)


def _run(data, net, cfg, rng, box, checkpoint_dir, plateau,
         plateau_rel_tol=PLATEAU_REL_TOL, patience=PLATEAU_PATIENCE,
         max_inner_updates=MAX_INNER_UPDATES):
    if data.dim != net.input_dim:
        raise ValueError(f"data dim {data.dim} != net input dim {net.input_dim}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if box is None:
        box = domain_box(data)
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    X = data.points
    n = data.n
    data_tree = cKDTree(X)
    gap = 2.0 * cfg.hkr.margin
    rounds_per_epoch = math.ceil(n / cfg.batch_size)
    total_rounds = cfg.epochs * rounds_per_epoch
    # lr is scheduled per update for fixed K; per round when the number of
    # inner updates is data-dependent
    if plateau:
        total_ticks = max(total_rounds - 1, 1)
    else:
        total_ticks = max(total_rounds * cfg.updates_per_round - 1, 1)

    def lr_at(tick):
        return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * (tick / total_ticks)

    opt = RMSPropState.zeros(net.n_params())
    report = TrainReport()
    step = 0
    round_index = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        warm = epoch < cfg.warm_start_epochs
        scfg = replace(cfg.sampler, steps_T=0) if warm else cfg.sampler
        for start in range(0, n, cfg.batch_size):
            pos = X[order[start:start + cfg.batch_size]]
            # project once up front: the sampler reads the cached projection,
            # and the first update reuses its tape
            tapes = net.project_with_tapes() if cfg.constrained else None
            neg = newton_raphson_negatives(net, box, scfg, rng, pos.shape[0])
            neg = _complementary_only(neg, data_tree, gap)
            batch = np.vstack([pos, neg])
            upstream_fn, risk_fn = _loss_functions(cfg, pos.shape[0])

            inner_risks = []
            budget = max_inner_updates if plateau else cfg.updates_per_round
            for k in range(budget):
                if k > 0 and cfg.constrained:
                    tapes = net.project_with_tapes()
                lr = lr_at(round_index if plateau else step)
                opt.learning_rate = lr
                scores, grads = net.value_and_param_gradients(
                    batch, upstream_fn, tapes)
                risk = risk_fn(scores)
                if not np.isfinite(risk):
                    raise TrainingDiverged(
                        f"non-finite risk {risk} at step {step} "
                        f"(epoch {epoch}, lr {lr:g})")
                net.set_params_flat(
                    rmsprop_step(opt, net.params_flat(), net.grads_flat(grads)))
                report.steps.append(step)
                report.risks.append(risk)
                report.lrs.append(lr)
                inner_risks.append(risk)
                step += 1
                if plateau and len(inner_risks) > patience:
                    ref = inner_risks[-1 - patience]
                    if abs(inner_risks[-1] - ref) <= plateau_rel_tol * max(abs(ref), 1e-12):
                        report.converged_rounds += 1
                        break
            round_index += 1
        report.epoch_seconds.append(time.perf_counter() - t0)
        if checkpoint_dir is not None:
            _checkpoint(net, checkpoint_dir, epoch, step)

    report.total_rounds = round_index
    norms = np.linalg.norm(net.input_gradients(X), axis=1)
    report.final_grad_norm_mean = float(norms.mean())
    report.final_grad_norm_max = float(norms.max())
    return net, report


def _complementary_only(neg, data_tree, gap):
    """Keep only negatives at least `gap` away from every training point.

    If every draw hugs the data (tiny domains or huge margins) the farthest
    half is kept instead so the batch risk stays defined.
    """
    dist, _ = data_tree.query(neg)
    keep = dist >= gap
    if keep.any():
        return neg[keep]
    order = np.argsort(-dist)
    return neg[order[:max(1, len(neg) // 2)]]


def _loss_functions(cfg, n_pos):
    if cfg.constrained:
        def upstream_fn(scores):
            n_neg = scores.shape[0] - n_pos
            return np.concatenate([
                hkr_grad(1.0, scores[:n_pos], cfg.hkr) / n_pos,
                hkr_grad(-1.0, scores[n_pos:], cfg.hkr) / n_neg])

        def risk_fn(scores):
            return hkr_batch_risk(scores[:n_pos], scores[n_pos:], cfg.hkr)
    else:
        # conventional baseline: plain BCE over the pooled batch,
        # positives labelled 1 and sampled negatives labelled 0
        def upstream_fn(scores):
            y = (np.arange(scores.shape[0]) < n_pos).astype(np.float64)
            return bce_grad(y, scores) / scores.shape[0]

        def risk_fn(scores):
            y = (np.arange(scores.shape[0]) < n_pos).astype(np.float64)
            return float(np.mean(bce_loss(y, scores)))
    return upstream_fn, risk_fn


def _checkpoint(net, checkpoint_dir, epoch, step):
    from .model_io import save_model
    save_model(net, checkpoint_dir / f"epoch_{epoch:04d}.json",
               metadata={"epoch": epoch, "steps_done": step})
