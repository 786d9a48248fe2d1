import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from symq.disciplines import Discipline

settings.register_profile("symq", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("symq")

TABLE3 = Discipline.table([[1], [0.7, 0.3], [0.2, 0.5, 0.3]], name="table")


@st.composite
def table_disciplines(draw, max_rows=6):
    """Random table disciplines with nonnegative weights and a positive entry per row."""
    n_rows = draw(st.integers(1, max_rows))
    rows = []
    for n in range(1, n_rows + 1):
        row = draw(st.lists(st.floats(0.0, 10.0), min_size=n, max_size=n))
        if sum(row) <= 0:
            row[draw(st.integers(0, n - 1))] = 1.0
        rows.append(row)
    ext = draw(st.sampled_from(["repeat", "uniform"]))
    return Discipline.table(rows, extension=ext)


def any_discipline():
    return st.one_of(st.just(Discipline.ps()), st.just(Discipline.lcfs()), table_disciplines())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
