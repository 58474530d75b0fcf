import numpy as np
import pytest

from moe_forecast.model import ModelConfig, MoeParameters
from moe_forecast.numerics import make_rng


def random_params(config: ModelConfig, seed: int = 0, scale: float = 0.5) -> MoeParameters:
    """Every tensor drawn N(0, scale^2), biases included, so no entry sits at
    a structural zero."""
    rng = make_rng(seed)
    return MoeParameters(config, rng.normal(0.0, scale, size=MoeParameters(config).size))


@pytest.fixture
def small_config():
    return ModelConfig(input_dim=5, hidden_sizes=(3, 4))


@pytest.fixture
def rng():
    return make_rng(1234)


def pytest_configure(config):
    np.set_printoptions(precision=6, suppress=True)


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def skip_criterion(number: int, reason: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:>2}: SKIP  {reason}"
    pytest.skip(reason)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
