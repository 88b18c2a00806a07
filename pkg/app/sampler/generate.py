"""
Reverse-process generation: iterative unmasking with a frozen prompt scaffold.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.errors import ShapeMismatch
from app.denoiser.model import Params, attention_maps, forward_batch
from app.models.config import ModelConfig, SamplerConfig
from app.models.layout import LayoutSequence
from app.sampler.schedule import select_positions, unmask_schedule
from app.seqcore.vocab import Vocab, default_vocab

logger = logging.getLogger(__name__)


@dataclass
class StepRecord:
    """Positions revealed at one step, the tokens committed and their confidences."""
    step: int
    positions: List[int] = field(default_factory=list)
    tokens: List[int] = field(default_factory=list)
    confidences: List[float] = field(default_factory=list)


@dataclass
class DenoiseTrace:
    layout: LayoutSequence
    steps: List[StepRecord] = field(default_factory=list)
    # step index -> (layers, heads, query, key)
    attention: Dict[int, np.ndarray] = field(default_factory=dict)

    def unmasked_positions(self) -> List[int]:
        return [p for record in self.steps for p in record.positions]

    def token_history(self, initial_ids) -> List[np.ndarray]:
        """Sequence state after each step, starting from the initial ids."""
        ids = np.asarray(initial_ids, dtype=np.int64).copy()
        states = [ids.copy()]
        for record in self.steps:
            ids[record.positions] = record.tokens
            states.append(ids.copy())
        return states


def _excluded_ids(vocab: Vocab) -> List[int]:
    return [vocab.mask_id, vocab.bos_id]


def _step_distribution(logits: np.ndarray, temperature: float) -> np.ndarray:
    scaled = logits / temperature if temperature > 0 else logits
    scaled = scaled - scaled.max(axis=-1, keepdims=True)
    probs = np.exp(scaled)
    return probs / probs.sum(axis=-1, keepdims=True)


def generate(params: Params, config: ModelConfig, layout: LayoutSequence, scfg: SamplerConfig,
             vocab: Optional[Vocab] = None,
             rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, DenoiseTrace]:
    """
    Fill the Completion region over scfg.steps denoising steps.

    Each step runs the model on the current sequence, predicts every masked
    position, and commits the predictions chosen by the remask strategy.
    Committed tokens and frozen positions never change. Steps with a zero
    count do nothing.

    Returns:
        The completed ids and the per-step trace
    """
    vocab = vocab or default_vocab()
    rng = rng if rng is not None else np.random.default_rng(scfg.seed)
    completion = layout.completion_positions
    if len(completion) != scfg.gen_len:
        raise ShapeMismatch("layout completion length differs from the sampler gen_len",
                            layout=len(completion), gen_len=scfg.gen_len)
    ids = np.asarray(layout.ids, dtype=np.int64).copy()
    if np.any(ids[completion] != vocab.mask_id):
        raise ShapeMismatch("the Completion region must start fully masked")

    counts = unmask_schedule(scfg.gen_len, scfg.steps)
    last_active = max(s for s, c in enumerate(counts) if c > 0)
    excluded = _excluded_ids(vocab)
    masked = list(completion)
    trace = DenoiseTrace(layout=layout)

    for step, count in enumerate(counts):
        if count == 0:
            trace.steps.append(StepRecord(step=step))
            continue
        logits, cache = forward_batch(params, config, ids[None, :])
        logits = logits[0, masked]
        logits[:, excluded] = -np.inf

        # untempered max probability
        plain = _step_distribution(logits, 0.0)
        confidences = plain.max(axis=-1)
        if scfg.temperature > 0:
            probs = _step_distribution(logits, scfg.temperature)
            # inverse-CDF draw, one uniform per masked position
            draws = rng.random(len(probs))[:, None]
            chosen = np.minimum((probs.cumsum(axis=-1) < draws).sum(axis=-1), probs.shape[-1] - 1)
        else:
            chosen = np.argmax(plain, axis=-1)

        picked = select_positions(confidences, count, scfg.remask_strategy, rng)
        record = StepRecord(step=step)
        for j in picked:
            position = masked[j]
            ids[position] = chosen[j]
            record.positions.append(position)
            record.tokens.append(int(chosen[j]))
            record.confidences.append(float(confidences[j]))
        trace.steps.append(record)
        revealed = set(picked)
        masked = [p for j, p in enumerate(masked) if j not in revealed]

        if scfg.trace_attention and (step % scfg.trace_every == 0 or step == last_active):
            trace.attention[step] = attention_maps(cache)

    logger.debug(f"Generated {scfg.gen_len} tokens in {scfg.steps} steps "
                 f"({len(trace.attention)} attention snapshots)")
    return ids, trace


def completion_text(ids: np.ndarray, layout: LayoutSequence, vocab: Optional[Vocab] = None) -> str:
    vocab = vocab or default_vocab()
    return vocab.decode(ids[layout.completion_start:], skip_special=True)
