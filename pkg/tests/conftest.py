import numpy as np
import pytest

from twincf.datagen import gen_unconfounded
from twincf.learn import TrainConfig, make_labels, train

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


@pytest.fixture(scope="session")
def e1_trained():
    """Model trained on 20k uniform unconfounded rows with the default config."""
    gen = gen_unconfounded([1 / 3, 1 / 3, 1 / 3], 0.5, 20_000, seed=0)
    ds = make_labels(gen.data, gen.generator)
    return gen, train(ds, TrainConfig())
