"""Scenario types, probability tables and their serialization.

Settings are 0-based in code: ``x in range(n_x)``, ``y in range(n_y)``.
Outcome ``b=0`` is the ``+1`` outcome of an expectation value.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
NORM_TOL = 1e-12


class PamError(Exception):
    """Base class for errors raised by this package."""


class NormalizationError(PamError):
    pass


class RangeError(PamError):
    pass


class ShapeError(PamError):
    pass


def reduce_phase(phase: float) -> float:
    """Map a finite phase onto ``[0, 2*pi)``."""
    phase = float(phase)
    if not math.isfinite(phase):
        raise RangeError(f"phase must be finite, got {phase!r}")
    r = math.fmod(phase, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if r >= TWO_PI:
        r = 0.0
    return r


@dataclass(frozen=True)
class PamScenario:
    n_x: int
    n_y: int
    n_b: int = 2
    dim: int = 2

    def __post_init__(self):
        for name in ("n_x", "n_y", "n_b", "dim"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ShapeError(f"{name} must be a positive integer, got {value!r}")
        if self.n_b != 2:
            raise ShapeError("only binary outcomes (n_b=2) are supported")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_b, self.n_x, self.n_y)


# Scenarios used by the two witnesses.
W2_SCENARIO = PamScenario(n_x=4, n_y=2, dim=2)
IDW_SCENARIO = PamScenario(n_x=3, n_y=2, dim=2)


@dataclass(frozen=True)
class PhaseConfig:
    """Preparation phases ``phi[x]`` and measurement phases ``sigma[y]``, in radians.

    Phases are reduced modulo 2*pi on construction.
    """

    phi: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        if len(self.phi) < 1 or len(self.sigma) < 1:
            raise ShapeError("phase lists must be nonempty")
        object.__setattr__(self, "phi", tuple(reduce_phase(p) for p in self.phi))
        object.__setattr__(self, "sigma", tuple(reduce_phase(s) for s in self.sigma))

    @property
    def scenario(self) -> PamScenario:
        return PamScenario(n_x=len(self.phi), n_y=len(self.sigma))

    def check(self, scenario: PamScenario) -> None:
        if len(self.phi) != scenario.n_x or len(self.sigma) != scenario.n_y:
            raise ShapeError(
                f"config has {len(self.phi)} preparations and {len(self.sigma)} "
                f"measurements, scenario expects {scenario.n_x} and {scenario.n_y}"
            )

    def to_dict(self) -> dict:
        return {"phi": list(self.phi), "sigma": list(self.sigma)}


class ProbabilityTable:
    """Conditional distribution ``p(b|x,y)`` stored as an array indexed ``[b, x, y]``.

    The underlying array is read-only. Construction checks the shape only;
    use :func:`validate_table` for normalization and range checks.
    """

    __slots__ = ("_p",)

    def __init__(self, p):
        arr = np.array(p, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != 2 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ShapeError(f"expected an array of shape (2, n_x, n_y), got {arr.shape}")
        arr.setflags(write=False)
        self._p = arr

    @classmethod
    def from_p0(cls, p0) -> "ProbabilityTable":
        """Build a table from ``p(0|x,y)`` given as an ``(n_x, n_y)`` array."""
        p0 = np.asarray(p0, dtype=float)
        if p0.ndim != 2:
            raise ShapeError(f"p0 must be 2-dimensional, got shape {p0.shape}")
        return cls(np.stack([p0, 1.0 - p0]))

    @property
    def p(self) -> np.ndarray:
        return self._p

    @property
    def p0(self) -> np.ndarray:
        return self._p[0]

    @property
    def n_x(self) -> int:
        return self._p.shape[1]

    @property
    def n_y(self) -> int:
        return self._p.shape[2]

    @property
    def scenario(self) -> PamScenario:
        return PamScenario(n_x=self.n_x, n_y=self.n_y)

    def __getitem__(self, idx):
        return self._p[idx]

    def __eq__(self, other):
        if not isinstance(other, ProbabilityTable):
            return NotImplemented
        return self._p.shape == other._p.shape and bool(np.array_equal(self._p, other._p))

    def __hash__(self):
        return hash((self._p.shape, self._p.tobytes()))

    def __repr__(self):
        return f"ProbabilityTable(n_x={self.n_x}, n_y={self.n_y}, p0={self.p0.tolist()})"

    def expectations(self) -> np.ndarray:
        """All ``<B_xy> = p(0|x,y) - p(1|x,y)`` as an ``(n_x, n_y)`` array."""
        return self._p[0] - self._p[1]

    # -- serialization -----------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y", "p0", "p1"])
        for x in range(self.n_x):
            for y in range(self.n_y):
                writer.writerow([x, y, repr(float(self._p[0, x, y])), repr(float(self._p[1, x, y]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ProbabilityTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ShapeError("empty table CSV")
        if set(rows[0]) != {"x", "y", "p0", "p1"}:
            raise ShapeError(f"unexpected CSV columns {list(rows[0])}")
        return cls._from_entries((int(r["x"]), int(r["y"]), float(r["p0"]), float(r["p1"])) for r in rows)

    def to_json(self) -> str:
        data = {
            f"{x},{y}": [float(self._p[0, x, y]), float(self._p[1, x, y])]
            for x in range(self.n_x)
            for y in range(self.n_y)
        }
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "ProbabilityTable":
        data = json.loads(text)
        entries = []
        for key, (p0, p1) in data.items():
            x, y = (int(k) for k in key.split(","))
            entries.append((x, y, float(p0), float(p1)))
        return cls._from_entries(entries)

    @classmethod
    def _from_entries(cls, entries) -> "ProbabilityTable":
        entries = list(entries)
        n_x = max(e[0] for e in entries) + 1
        n_y = max(e[1] for e in entries) + 1
        if len(entries) != n_x * n_y or len({(e[0], e[1]) for e in entries}) != n_x * n_y:
            raise ShapeError("serialized table does not cover every (x, y) exactly once")
        p = np.empty((2, n_x, n_y))
        for x, y, p0, p1 in entries:
            if x < 0 or y < 0:
                raise ShapeError(f"negative setting index ({x}, {y})")
            p[0, x, y] = p0
            p[1, x, y] = p1
        return cls(p)


def validate_table(table: ProbabilityTable, scenario: PamScenario | None = None,
                   tol: float = NORM_TOL) -> ProbabilityTable:
    """Check shape, range and normalization; return ``table`` unchanged."""
    if not isinstance(table, ProbabilityTable):
        raise ShapeError(f"expected a ProbabilityTable, got {type(table).__name__}")
    if scenario is not None and table.p.shape != scenario.shape:
        raise ShapeError(f"table shape {table.p.shape} does not match scenario {scenario.shape}")
    p = table.p
    if not np.all(np.isfinite(p)):
        raise RangeError("table contains non-finite entries")
    bad = np.argwhere((p < 0.0) | (p > 1.0))
    if bad.size:
        b, x, y = bad[0]
        raise RangeError(f"p({b}|{x},{y}) = {p[b, x, y]!r} is outside [0, 1]")
    dev = np.abs(p.sum(axis=0) - 1.0)
    if np.any(dev > tol):
        x, y = np.unravel_index(int(np.argmax(dev)), dev.shape)
        raise NormalizationError(
            f"sum_b p(b|{x},{y}) = {p[:, x, y].sum()!r} deviates from 1 by more than {tol}"
        )
    return table


def expectation(table: ProbabilityTable, x: int, y: int) -> float:
    """``<B_xy> = p(0|x,y) - p(1|x,y)``."""
    if not (0 <= x < table.n_x and 0 <= y < table.n_y):
        raise IndexError(f"setting ({x}, {y}) out of range for a {table.n_x}x{table.n_y} table")
    return float(table.p[0, x, y] - table.p[1, x, y])


def mix_tables(weights: Sequence[float], tables: Sequence[ProbabilityTable]) -> ProbabilityTable:
    """Convex combination of tables sharing one shape."""
    if len(weights) != len(tables) or not tables:
        raise ShapeError("need one weight per table and at least one table")
    shape = tables[0].p.shape
    if any(t.p.shape != shape for t in tables):
        raise ShapeError("cannot mix tables of different shapes")
    acc = np.zeros(shape)
    for w, t in zip(weights, tables):
        acc += w * t.p
    return ProbabilityTable(acc)
