import pytest

from app.denoiser.model import init_params
from app.harness.runner import Executor
from app.models.config import ModelConfig
from app.models.problem import Problem, TaskFamily
from app.seqcore.vocab import default_vocab
from app.taskgen.generators import gen_problems


def pytest_addoption(parser):
    parser.addoption("--acceptance", action="store_true", default=False,
                     help="run the directional experiments on a fully trained model")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains a model or runs many samples")
    config.addinivalue_line("markers", "acceptance: full-recipe experiments, run with --acceptance")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--acceptance"):
        return
    skip = pytest.mark.skip(reason="needs --acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def vocab():
    return default_vocab()


@pytest.fixture
def tiny_config(vocab):
    """A 1-layer model small enough for per-test sampling."""
    return ModelConfig(layers=1, d_model=16, heads=2, d_ff=32, vocab_size=len(vocab), max_len=128)


@pytest.fixture
def executor(tiny_config, vocab):
    """An untrained executor; outputs are arbitrary but deterministic."""
    return Executor(params=init_params(tiny_config, seed=7), config=tiny_config, vocab=vocab)


@pytest.fixture
def chain_problem():
    return Problem(
        id="chain-example",
        family=TaskFamily.CHAIN_ARITHMETIC,
        difficulty=2,
        text="start 3 ; add 4 ; mul 2 ; mod 10 ?",
        gold_answer=4,
        gold_trace=(("add", 4, 7), ("mul", 2, 4)),
    )


@pytest.fixture
def chain_problems():
    return gen_problems(TaskFamily.CHAIN_ARITHMETIC, 3, 6, seed=11)
