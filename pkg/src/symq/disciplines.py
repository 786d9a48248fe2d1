"""Symmetric service disciplines.

A discipline assigns, for every queue length ``n``, a vector of service
rates ``gamma(n, 1..n)`` summing to one. The same vector is the law of the
position an arriving customer takes in a queue that grows to ``n``.
Positions are 1-indexed everywhere in the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

SUM_TOL = 1e-12

PS = "ps"
LCFS = "lcfs"
TABLE = "table"

EXTENSIONS = ("repeat", "uniform")


class InvalidDisciplineError(ValueError):
    pass


@dataclass(frozen=True)
class Discipline:
    """Rate/insertion law of a symmetric queue.

    ``rows[n-1]`` holds the weights for queue length ``n`` (Table kind only).
    For ``n`` beyond the table, ``extension="repeat"`` pads the last row with
    zeros and ``extension="uniform"`` falls back to processor sharing.
    """

    kind: str
    rows: tuple[tuple[float, ...], ...] = ()
    extension: str = "repeat"
    normalize: bool = True
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in (PS, LCFS, TABLE):
            raise InvalidDisciplineError(
                f"unknown discipline kind {self.kind!r}; symmetric kinds are ps, lcfs, table"
            )
        if self.kind == TABLE:
            if not self.rows:
                raise InvalidDisciplineError("table discipline needs at least one row")
            if self.extension not in EXTENSIONS:
                raise InvalidDisciplineError(f"unknown extension rule {self.extension!r}")
            for n, row in enumerate(self.rows, start=1):
                if len(row) != n:
                    raise InvalidDisciplineError(
                        f"table row for n={n} has {len(row)} entries, expected {n}"
                    )
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @classmethod
    def ps(cls) -> "Discipline":
        return cls(PS)

    @classmethod
    def lcfs(cls) -> "Discipline":
        return cls(LCFS)

    @classmethod
    def table(cls, rows: Sequence[Sequence[float]], extension: str = "repeat",
              normalize: bool = True, name: str = "table") -> "Discipline":
        return cls(TABLE, tuple(tuple(float(x) for x in row) for row in rows),
                   extension, normalize, name)

    @property
    def n_max(self) -> int:
        return len(self.rows)

    def rates(self, n: int) -> np.ndarray:
        return rates(self, n)

    def to_config(self) -> dict:
        if self.kind != TABLE:
            return {"kind": self.kind}
        return {"kind": TABLE, "rows": [list(r) for r in self.rows],
                "extension": self.extension}


def _raw_row(d: Discipline, n: int) -> tuple[float, ...]:
    if d.kind == PS:
        return (1.0 / n,) * n
    if d.kind == LCFS:
        return (1.0,) + (0.0,) * (n - 1)
    if n <= d.n_max:
        return d.rows[n - 1]
    if d.extension == "uniform":
        return (1.0 / n,) * n
    last = d.rows[-1]
    return last + (0.0,) * (n - len(last))


@lru_cache(maxsize=4096)
def _rates_tuple(d: Discipline, n: int) -> tuple[float, ...]:
    row = _raw_row(d, n)
    if d.kind != TABLE:
        return row
    for i, g in enumerate(row, start=1):
        if g < 0:
            raise InvalidDisciplineError(f"negative weight at (n={n}, i={i})")
    total = sum(row)
    if total <= 0:
        raise InvalidDisciplineError(f"all weights zero for n={n}")
    if abs(total - 1.0) > SUM_TOL:
        if not d.normalize:
            raise InvalidDisciplineError(f"row n={n} sums to {total}, not 1")
        row = tuple(g / total for g in row)
    return row


def rates(d: Discipline, n: int) -> np.ndarray:
    """Return ``gamma(n, i)`` for ``i = 1..n`` as a float array."""
    if n < 1:
        raise ValueError(f"queue length must be >= 1, got {n}")
    return np.array(_rates_tuple(d, int(n)))


@lru_cache(maxsize=4096)
def _cumulative(d: Discipline, n: int) -> tuple[float, ...]:
    return tuple(np.cumsum(_rates_tuple(d, n)).tolist())


def insertion_position(d: Discipline, n_before: int, u: float) -> int:
    """Position (1-based) taken by an arrival that finds ``n_before`` customers.

    Inverse-CDF walk over ``rates(d, n_before + 1)``; zero-rate positions are
    never chosen.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    if d.kind == LCFS:
        return 1
    n = n_before + 1
    if d.kind == PS:
        return min(int(u * n), n - 1) + 1
    cum = _cumulative(d, n)
    for i, c in enumerate(cum):
        if u < c:
            return i + 1
    # u falls in the rounding gap below 1.0: last position with positive rate
    g = _rates_tuple(d, n)
    return max(i for i in range(n) if g[i] > 0) + 1


@dataclass
class ValidationReport:
    n_checked: int
    violations: list[tuple[int, int | None, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return f"ok (n <= {self.n_checked})"
        lines = [f"(n={n}, i={i}): {msg}" for n, i, msg in self.violations]
        return "\n".join(lines)


def validate(d: Discipline, n_check: int) -> ValidationReport:
    """Check nonnegativity and the sum-to-one constraint for all ``n <= n_check``."""
    if n_check < 1:
        raise ValueError("n_check must be >= 1")
    report = ValidationReport(n_check)
    for n in range(1, n_check + 1):
        row = _raw_row(d, n)
        bad = False
        for i, g in enumerate(row, start=1):
            if g < 0 or not np.isfinite(g):
                report.violations.append((n, i, f"weight {g} is not a nonnegative number"))
                bad = True
        if bad:
            continue
        total = sum(row)
        if total <= 0:
            report.violations.append((n, None, "all weights are zero"))
        elif abs(total - 1.0) > SUM_TOL and not (d.kind == TABLE and d.normalize):
            report.violations.append((n, None, f"weights sum to {total}, not 1"))
    return report


def from_config(spec: dict) -> Discipline:
    kind = str(spec.get("kind", "")).lower()
    if kind == TABLE:
        return Discipline.table(spec["rows"], spec.get("extension", "repeat"),
                                spec.get("normalize", True), spec.get("name", "table"))
    if kind in (PS, LCFS):
        return Discipline(kind, name=spec.get("name", kind))
    raise InvalidDisciplineError(
        f"unknown discipline kind {kind!r}; symmetric kinds are ps, lcfs, table"
    )
