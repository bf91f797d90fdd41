from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects ``(criterion, passed, detail)`` lines for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    text = [f"{'PASS' if ok else 'FAIL'}  {name}: {detail}" for name, ok, detail in lines]
    for line in text:
        terminalreporter.write_line(line)
    out = Path(config.rootpath) / "results"
    out.mkdir(exist_ok=True)
    (out / "acceptance.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
