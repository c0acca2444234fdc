import numpy as np
import pytest

from semrec.encoder import ModelConfig, ModelParameters
from semrec.synthetic import SyntheticSpec, generate, to_labeled
from semrec.wordrep import PretrainedRepr, PretrainedTable


@pytest.fixture(scope="session")
def small_synth():
    """8 clusters x 6 docs; quick enough for training-loop tests."""
    return generate(SyntheticSpec(clusters=8, docs_per_cluster=6, doc_length=12, seed=3))


@pytest.fixture(scope="session")
def small_labeled(small_synth):
    return to_labeled(small_synth)


@pytest.fixture
def toy_table():
    rng = np.random.default_rng(5)
    words = ["ram", "loves", "playing", "cricket", "bat", "ball", "tea", "cup"]
    return PretrainedTable(3, {w: rng.standard_normal(3) for w in words})


@pytest.fixture
def toy_model(toy_table):
    def make(mode="shared", seed=0, **cfg):
        cfg = {"k": 1, "n_filters": 5, "semantic_dim": 3, **cfg}
        return ModelParameters.initialize(mode, PretrainedRepr(toy_table), ModelConfig(word_dim=3, **cfg), seed)

    return make


# acceptance reporting ---------------------------------------------------------

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
