import pytest

from hallcube.deformation import default_params
from hallcube.geometry import default_config

# one (name, ok, detail) triple per acceptance gate, printed after the run
CRITERIA: list[tuple[str, bool, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    CRITERIA.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus):
    if not CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, ok, detail in sorted(CRITERIA):
        line = f"{name}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def params(config):
    return default_params(config)
