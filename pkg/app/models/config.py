"""
Configuration models: model, training, sampler, data, grid and experiment.
"""

from dataclasses import dataclass, field
from typing import List, Optional

from app.models.plan import PlannerEndpointConfig
from app.models.result import RemaskStrategy


@dataclass
class ModelConfig:
    layers: int = 4
    d_model: int = 128
    heads: int = 4
    d_ff: int = 512
    vocab_size: int = 0  # filled from the vocabulary when left at 0
    max_len: int = 512

    def __post_init__(self):
        if self.heads < 1 or self.d_model % self.heads != 0:
            raise ValueError(f"d_model ({self.d_model}) must be divisible by heads ({self.heads})")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads


@dataclass
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: Optional[float] = 1.0
    plan_fraction: float = 0.5
    plan_request_fraction: float = 0.1
    loss_weighting: str = "inverse_t"  # or "unweighted"
    eval_examples: int = 128
    gen_len: int = 64


@dataclass
class SamplerConfig:
    steps: int = 64
    gen_len: int = 64
    remask_strategy: RemaskStrategy = RemaskStrategy.LOW_CONFIDENCE
    temperature: float = 0.0
    seed: int = 0
    trace_attention: bool = False
    trace_every: int = 4

    def __post_init__(self):
        if self.gen_len < 1:
            raise ValueError("gen_len must be at least 1")
        if not 1 <= self.steps <= self.gen_len * 4:
            raise ValueError(f"steps must lie in [1, {self.gen_len * 4}], got {self.steps}")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")
        self.remask_strategy = RemaskStrategy(self.remask_strategy)


@dataclass
class DataConfig:
    train_families: List[str] = field(default_factory=lambda: ["chain"])
    test_families: List[str] = field(default_factory=lambda: ["chain", "countdown", "latin"])
    train_problems: int = 2000
    train_difficulties: List[int] = field(default_factory=lambda: [2, 3, 4, 5, 6, 7, 8])
    test_problems: int = 100
    test_difficulties: List[int] = field(default_factory=lambda: [4, 5, 6])
    test_fraction: float = 0.2
    train_path: str = "data/train.jsonl"
    test_path: str = "data/test.jsonl"


@dataclass
class GridConfig:
    formats: List[str] = field(default_factory=lambda: ["hybrid"])
    budgets: List[int] = field(default_factory=lambda: [100])
    planners: List[str] = field(default_factory=lambda: ["oracle-frontier"])
    ablations: List[str] = field(default_factory=lambda: ["none"])
    gen_lens: List[int] = field(default_factory=lambda: [64])
    steps: List[int] = field(default_factory=lambda: [64])
    seeds: List[int] = field(default_factory=lambda: [42])
    include_bare: bool = True
    # Compute-matched controls as (gen_len, steps) pairs run without a plan.
    controls: List[List[int]] = field(default_factory=list)
    remask_strategy: str = "low_confidence"
    temperature: float = 0.0


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    endpoint: PlannerEndpointConfig = field(default_factory=PlannerEndpointConfig)
    checkpoint: str = "runs/model.npz"
    plan_cache: str = "runs/plans.jsonl"
    output_dir: str = "runs"
    seed: int = 42
    workers: int = 4
    config_hash: str = ""
