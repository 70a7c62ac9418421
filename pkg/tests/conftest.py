import pytest

from nrules import SCENARIO_DIR, dsl


def scenario_path(name: str):
    return SCENARIO_DIR / f"{name}.scn"


@pytest.fixture(scope="session")
def load_scenario():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = dsl.load(scenario_path(name))
        return cache[name]

    return get


TWO_LEVEL = """\
[basis]
s1 s2
[components]
S1 s1
S2 s2
[hamiltonian]
s1 s2 1.0
[jumps]
S1 -> S2
[initial]
s1 1 0
[run]
name two
dt 0.001
t_max 1.5707963267948966
method expm
"""


@pytest.fixture
def two_level_spec():
    return dsl.parse(TWO_LEVEL)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
