from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance lines, printed in the terminal summary so they survive output capture
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_artifact(tmp_path_factory):
    """A small trained random-forest artifact on a synthetic corpus."""
    from dorclass.models import TrainConfig
    from dorclass.pipeline import train_artifact, vectorize_file
    from dorclass.clean import write_payloads
    from dorclass.synth import SyntheticSpec, synthetic_corpus

    root = tmp_path_factory.mktemp("artifact")
    docs = synthetic_corpus(SyntheticSpec(n_docs=400, signature_size=10, filler_size=200, seed=3))
    with open(root / "train.jsonl", "w", encoding="utf-8") as fh:
        write_payloads(docs, fh)
    vectorize_file(root / "train.jsonl", root / "train.csr", root / "vec.bin", root / "sel.json", "s")
    cfg = TrainConfig(family="rf", n_trees=5, seed=1)
    return train_artifact(root / "train.csr", root / "train.jsonl", cfg, root / "rf-s",
                          root / "vec.bin", root / "sel.json", "s")
