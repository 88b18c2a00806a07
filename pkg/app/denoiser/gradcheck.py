"""
Finite-difference validation of the hand-written backward pass.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.denoiser.model import init_params
from app.denoiser.training import build_training_layouts, diffusion_loss
from app.models.config import ModelConfig, TrainingConfig
from app.models.layout import LayoutSequence, MaskState
from app.models.problem import TaskFamily
from app.seqcore.layout import forward_mask
from app.seqcore.vocab import default_vocab
from app.taskgen.generators import gen_problems

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4
DEFAULT_SAMPLES = 200
RELATIVE_FLOOR = 1e-5
CHECK_NOISE_LEVEL = 0.5


@dataclass(frozen=True)
class GradSample:
    name: str
    index: int
    analytic: float
    numeric: float

    @property
    def relative_error(self) -> float:
        denom = max(abs(self.analytic), abs(self.numeric), RELATIVE_FLOOR)
        return abs(self.analytic - self.numeric) / denom


@dataclass
class GradCheckReport:
    samples: List[GradSample] = field(default_factory=list)

    @property
    def max_relative_error(self) -> float:
        return max((s.relative_error for s in self.samples), default=0.0)

    @property
    def worst(self) -> Optional[GradSample]:
        return max(self.samples, key=lambda s: s.relative_error, default=None)

    def errors_for(self, name: str, index: Optional[int] = None) -> List[float]:
        return [s.relative_error for s in self.samples
                if s.name == name and (index is None or s.index == index)]


def _mask_at(layout: LayoutSequence, t: float, rng: np.random.Generator) -> MaskState:
    while True:
        state = forward_mask(layout, t, rng)
        if state.n_masked:
            return state


def small_config(layers: int = 2) -> ModelConfig:
    return ModelConfig(layers=layers, d_model=16, heads=2, d_ff=32,
                       vocab_size=len(default_vocab()), max_len=96)


def grad_check(config: Optional[ModelConfig] = None, seed: int = 0, eps: float = DEFAULT_EPS,
               n_samples: int = DEFAULT_SAMPLES,
               corrupt: Optional[Tuple[str, int]] = None) -> GradCheckReport:
    """
    Compare analytic gradients with central differences on sampled parameters.

    Args:
        config: Model shape; defaults to 2 layers, d_model 16
        seed: Seeds the parameters, batch and sampled coordinates
        eps: Finite-difference step
        n_samples: Number of parameter coordinates compared
        corrupt: (name, flat index) whose analytic gradient is offset by 1.0;
            that coordinate is always among the samples

    Returns:
        A report whose max_relative_error summarises the check
    """
    vocab = default_vocab()
    config = config or small_config()
    rng = np.random.default_rng(seed)
    params = init_params(config, seed)

    problems = gen_problems(TaskFamily.CHAIN_ARITHMETIC, 2, 3, seed)
    hp = TrainingConfig(gen_len=24, plan_fraction=0.5, plan_request_fraction=0.0)
    layouts = build_training_layouts(problems, hp, vocab, config.max_len, seed)
    batch = [(layout, _mask_at(layout, CHECK_NOISE_LEVEL, rng)) for layout in layouts]

    _, grads = diffusion_loss(params, config, batch, vocab)
    if corrupt is not None:
        grads[corrupt[0]].flat[corrupt[1]] += 1.0

    names = sorted(params)
    coords = []
    if corrupt is not None:
        coords.append(corrupt)
    while len(coords) < n_samples:
        name = names[int(rng.integers(0, len(names)))]
        coords.append((name, int(rng.integers(0, params[name].size))))

    report = GradCheckReport()
    for name, index in coords:
        flat = params[name].reshape(-1)
        original = flat[index]
        flat[index] = original + eps
        plus, _ = diffusion_loss(params, config, batch, vocab, with_grads=False)
        flat[index] = original - eps
        minus, _ = diffusion_loss(params, config, batch, vocab, with_grads=False)
        flat[index] = original
        numeric = (plus - minus) / (2 * eps)
        report.samples.append(GradSample(name, index, float(grads[name].flat[index]), numeric))

    worst = report.worst
    logger.info(f"Gradient check over {len(report.samples)} coordinates: "
                f"max relative error {report.max_relative_error:.2e}"
                + (f" at {worst.name}[{worst.index}]" if worst else ""))
    return report
