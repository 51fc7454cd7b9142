import pytest

from cosine_ws.config import TrainConfig
from cosine_ws.synthetic import SyntheticSpec, generate_benchmark


@pytest.fixture(scope="session")
def tiny_benchmark():
    spec = SyntheticSpec(vocab_size=300, keywords_per_class=10, seed=5,
                         samples={"train": 240, "dev": 0, "test": 120})
    return generate_benchmark(spec)


@pytest.fixture
def tiny_config():
    return TrainConfig(T1=20, T2=30, T3=10, xi=0.3, lam=0.1, learning_rate=0.03,
                       batch_size=16, seed=3, hash_buckets=1024, embed_dim=8, repr_dim=8,
                       init_scale=0.1)


_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
