"""
Masked-diffusion training: corpus assembly, the weighted loss and Adam.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import Divergence, NoMaskedPositions, OverLength
from app.denoiser.checkpoint import save_checkpoint
from app.denoiser.model import Params, backward_batch, forward_batch, init_params
from app.models.config import ModelConfig, TrainingConfig
from app.models.layout import LayoutSequence, MaskState
from app.models.plan import PlanFormat
from app.models.problem import Problem
from app.planner.oracle import oracle_plan
from app.seqcore.layout import (
    TEMPLATE_PLAN_REQUEST, TEMPLATE_SOLVE, apply_mask, assemble_layout, forward_mask,
)
from app.seqcore.vocab import Vocab, default_vocab
from app.taskgen.solver import solution_text
from app.utils.export import write_csv

logger = logging.getLogger(__name__)

WEIGHTINGS = ("inverse_t", "unweighted")
TRAIN_PLAN_BUDGET = 100

Batch = Sequence[Tuple[LayoutSequence, MaskState]]


@dataclass
class TrainResult:
    params: Params
    config: ModelConfig
    curve: List[Dict[str, float]] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [row["loss"] for row in self.curve]


# Corpus

def fill_completion(layout: LayoutSequence, text: str, vocab: Vocab) -> Optional[LayoutSequence]:
    """Write gold text into the Completion region, PAD-filled; None if it does not fit."""
    ids = vocab.encode(text)
    size = len(layout.completion_positions)
    if len(ids) > size:
        return None
    return layout.with_completion(ids + [vocab.pad_id] * (size - len(ids)))


def build_training_layouts(problems: Sequence[Problem], training: TrainingConfig,
                           vocab: Optional[Vocab] = None, max_len: int = 512,
                           seed: int = 0) -> List[LayoutSequence]:
    """Gold-completed layouts: bare, oracle-plan conditioned, and plan-request.

    A fraction of examples carry an oracle plan in a random format so the
    model learns to read plans; a smaller fraction ask for the plan itself
    so the model can act as its own planner.
    """
    vocab = vocab or default_vocab()
    rng = np.random.default_rng(seed)
    formats = list(PlanFormat)
    layouts: List[LayoutSequence] = []
    skipped = 0
    for problem in problems:
        draw = rng.random()
        fmt = formats[int(rng.integers(0, len(formats)))]
        try:
            if draw < training.plan_request_fraction:
                plan = oracle_plan(problem, fmt, TRAIN_PLAN_BUDGET, vocab=vocab)
                layout = assemble_layout(problem, None, TEMPLATE_PLAN_REQUEST, vocab,
                                         training.gen_len, max_len)
                target = plan.text
            else:
                plan = None
                if draw < training.plan_request_fraction + training.plan_fraction:
                    plan = oracle_plan(problem, fmt, TRAIN_PLAN_BUDGET, vocab=vocab)
                layout = assemble_layout(problem, plan, TEMPLATE_SOLVE, vocab,
                                         training.gen_len, max_len)
                target = solution_text(problem)
        except OverLength:
            skipped += 1
            continue
        filled = fill_completion(layout, target, vocab)
        if filled is None:
            skipped += 1
            continue
        layouts.append(filled)
    if skipped:
        logger.warning(f"Skipped {skipped} problems whose layout exceeded the length limits")
    logger.info(f"Built {len(layouts)} training layouts from {len(problems)} problems")
    return layouts


def sample_mask(layout: LayoutSequence, rng: np.random.Generator) -> MaskState:
    """Draw t uniform in (0, 1] and mask; at least one Completion position is masked."""
    t = 1.0 - rng.random()
    state = forward_mask(layout, t, rng)
    if state.n_masked == 0:
        positions = layout.completion_positions
        forced = positions[int(rng.integers(0, len(positions)))]
        masked = list(state.masked)
        masked[forced] = True
        state = MaskState(masked=tuple(masked), t=t)
    return state


# Loss

def _collate(batch: Batch, vocab: Vocab):
    n = max(len(layout) for layout, _ in batch)
    size = len(batch)
    ids = np.full((size, n), vocab.pad_id, dtype=np.int64)
    targets = np.full((size, n), vocab.pad_id, dtype=np.int64)
    valid = np.zeros((size, n), dtype=bool)
    loss_mask = np.zeros((size, n), dtype=bool)
    t = np.zeros(size)
    for b, (layout, state) in enumerate(batch):
        length = len(layout)
        ids[b, :length] = apply_mask(layout, state, vocab)
        targets[b, :length] = layout.ids
        valid[b, :length] = True
        loss_mask[b, :length] = state.masked
        t[b] = state.t
    return ids, targets, valid, loss_mask, t


def diffusion_loss(params: Params, config: ModelConfig, batch: Batch,
                   vocab: Optional[Vocab] = None, weighting: str = "inverse_t",
                   with_grads: bool = True) -> Tuple[float, Optional[Params]]:
    """Mean over examples of w(t) times the mean cross-entropy at masked positions.

    w(t) = 1/t for "inverse_t", 1 for "unweighted".
    """
    vocab = vocab or default_vocab()
    if weighting not in WEIGHTINGS:
        raise ValueError(f"Unknown loss weighting: {weighting}")
    if not batch:
        raise NoMaskedPositions("empty batch")
    for layout, state in batch:
        if state.n_masked == 0:
            raise NoMaskedPositions("every example needs at least one masked position")
        if state.t <= 0:
            raise NoMaskedPositions("masked example recorded a noise level of 0")

    ids, targets, valid, loss_mask, t = _collate(batch, vocab)
    logits, cache = forward_batch(params, config, ids, valid)

    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    ce = -np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]

    counts = loss_mask.sum(axis=1)
    weights = 1.0 / t if weighting == "inverse_t" else np.ones_like(t)
    per_example = (ce * loss_mask).sum(axis=1) / counts
    loss = float(np.mean(weights * per_example))
    if not with_grads:
        return loss, None

    scale = (weights / (counts * len(batch)))[:, None, None]
    dlogits = np.exp(log_probs)
    np.put_along_axis(dlogits, targets[..., None],
                      np.take_along_axis(dlogits, targets[..., None], axis=-1) - 1.0, axis=-1)
    dlogits = dlogits * loss_mask[..., None] * scale
    return loss, backward_batch(params, config, cache, dlogits)


# Optimisation

def clip_gradients(grads: Params, max_norm: Optional[float]) -> float:
    """Scale gradients in place to a global L2 norm of at most max_norm; return the raw norm."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm > 0:
        factor = max_norm / norm
        for g in grads.values():
            g *= factor
    return norm


class Adam:
    """Adaptive-moment gradient descent without weight decay."""

    def __init__(self, params: Params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _eval_loss(params, config, eval_set, vocab, hp: TrainingConfig) -> float:
    total = 0.0
    for start in range(0, len(eval_set), hp.batch_size):
        chunk = eval_set[start:start + hp.batch_size]
        loss, _ = diffusion_loss(params, config, chunk, vocab, hp.loss_weighting, with_grads=False)
        total += loss * len(chunk)
    return total / len(eval_set)


def train(config: ModelConfig, corpus: Sequence[LayoutSequence], hyperparams: TrainingConfig,
          seed: int, vocab: Optional[Vocab] = None,
          checkpoint_path: Union[str, Path, None] = None,
          on_epoch: Optional[Callable[[Dict[str, float]], None]] = None,
          checkpoint_extra: Optional[Dict[str, object]] = None) -> TrainResult:
    """
    Train the denoiser on gold-completed layouts.

    The curve holds one row per epoch (row 0 is before any update) with the
    loss on a fixed-mask evaluation subset and the mean training batch loss.

    Raises:
        Divergence: the loss became non-finite; carries the last good params
    """
    vocab = vocab or default_vocab()
    if not corpus:
        raise ValueError("training corpus is empty")
    if config.vocab_size == 0:
        config = replace(config, vocab_size=len(vocab))

    rng = np.random.default_rng(seed)
    eval_rng = np.random.default_rng([seed, 1])
    params = init_params(config, seed)
    optimizer = Adam(params, hyperparams.lr, hyperparams.beta1, hyperparams.beta2, hyperparams.eps)

    eval_layouts = list(corpus[:max(1, min(hyperparams.eval_examples, len(corpus)))])
    eval_set = [(layout, sample_mask(layout, eval_rng)) for layout in eval_layouts]

    initial = _eval_loss(params, config, eval_set, vocab, hyperparams)
    curve = [{"epoch": 0, "loss": initial, "train_loss": initial}]
    logger.info(f"Training on {len(corpus)} layouts for {hyperparams.epochs} epochs; "
                f"initial loss {initial:.4f}")
    if on_epoch:
        on_epoch(curve[0])

    for epoch in range(1, hyperparams.epochs + 1):
        order = rng.permutation(len(corpus))
        batch_losses = []
        for start in range(0, len(order), hyperparams.batch_size):
            batch = [(corpus[i], sample_mask(corpus[i], rng))
                     for i in order[start:start + hyperparams.batch_size]]
            loss, grads = diffusion_loss(params, config, batch, vocab, hyperparams.loss_weighting)
            if not np.isfinite(loss):
                _diverged(params, config, epoch, checkpoint_path)
            clip_gradients(grads, hyperparams.grad_clip)
            last_good = {name: p.copy() for name, p in params.items()}
            optimizer.step(params, grads)
            if not all(np.all(np.isfinite(p)) for p in params.values()):
                _diverged(last_good, config, epoch, checkpoint_path)
            batch_losses.append(loss)

        row = {
            "epoch": epoch,
            "loss": _eval_loss(params, config, eval_set, vocab, hyperparams),
            "train_loss": float(np.mean(batch_losses)),
        }
        if not np.isfinite(row["loss"]):
            _diverged(last_good, config, epoch, checkpoint_path)
        curve.append(row)
        logger.info(f"Epoch {epoch}: loss {row['loss']:.4f} (train {row['train_loss']:.4f})")
        if on_epoch:
            on_epoch(row)

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, params, config,
                        {"seed": seed, "epochs": hyperparams.epochs, **(checkpoint_extra or {})})
    return TrainResult(params=params, config=config, curve=curve)


def _diverged(params: Params, config: ModelConfig, epoch: int,
              checkpoint_path: Union[str, Path, None]) -> None:
    saved = None
    if checkpoint_path is not None:
        saved = str(save_checkpoint(checkpoint_path, params, config, {"diverged_at_epoch": epoch}))
    logger.error(f"Training diverged at epoch {epoch}")
    raise Divergence(f"Loss became non-finite at epoch {epoch}", epoch=epoch,
                     last_good_params=params, checkpoint=saved)


def write_loss_curve(curve: List[Dict[str, float]], path: Union[str, Path]) -> Path:
    return write_csv(curve, path, fieldnames=["epoch", "loss", "train_loss"])
