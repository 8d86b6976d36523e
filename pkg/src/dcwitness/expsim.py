"""Monte Carlo model of the photon-counting experiment and the phase sweep.

Each trial is one photon pair from the source. The trigger photon reaches
its detector with probability ``T_a`` and its click is what the
QRNG-driven Pockels cell reacts to. The signal photon survives with
probability ``T_b`` and is detected with probability ``eta``; when it is
detected, it lands on D0 with the visibility-damped Born probability.

Random streams come from one ``SeedSequence``: the first child allocates
trials to settings, then one child per setting draws that setting's
outcomes. Results depend only on the seed.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pam_core import TWO_PI, PhaseConfig, ProbabilityTable, ShapeError, reduce_phase
from .quantum_model import DeviceModel, Policy, interference_p0
from .witness import ALGEBRAIC_BOUND_IDW, CLASSICAL_BOUND_IDW, EmptySetting

SWEEP_SIGMA = (math.pi / 2, 0.0)
DEFAULT_BINS = 100


class Accounting(str, enum.Enum):
    """What counts as a run in the ledger."""

    #: a run is a trigger click; pairs whose trigger is lost are never seen
    PER_TRIGGER = "per_trigger"
    #: a run is a source pair; a lost trigger counts as a lost signal
    PER_PAIR = "per_pair"


class XMode(str, enum.Enum):
    ROUND_ROBIN = "round_robin"
    UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class CountLedger:
    """Event counts per setting, each an ``(n_x, n_y)`` integer array."""

    trigger: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    lost: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("trigger", "d0", "d1", "lost"):
            a = np.array(getattr(self, name), dtype=np.int64)
            if a.ndim != 2:
                raise ShapeError(f"{name} must be a 2-d array of counts")
            if np.any(a < 0):
                raise ValueError(f"{name} has negative counts")
            a.setflags(write=False)
            arrays[name] = a
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1:
            raise ShapeError(f"count arrays disagree in shape: {shapes}")
        if np.any(arrays["d0"] + arrays["d1"] + arrays["lost"] != arrays["trigger"]):
            raise ValueError("d0 + d1 + lost must equal trigger for every setting")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.trigger.shape

    def __eq__(self, other):
        if not isinstance(other, CountLedger):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("trigger", "d0", "d1", "lost"))

    def outcome_counts(self, policy) -> tuple[np.ndarray, np.ndarray]:
        """``(n0, n1)``: how many runs each policy labels ``b=0`` and ``b=1``."""
        policy = Policy.parse(policy)
        if policy is Policy.POST_SELECTED:
            return self.d0, self.d1
        return self.d1 + self.lost, self.d0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "trigger", "d0", "d1", "lost"])
        n_x, n_y = self.shape
        for x in range(n_x):
            for y in range(n_y):
                w.writerow([x, y, self.trigger[x, y], self.d0[x, y], self.d1[x, y], self.lost[x, y]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CountLedger":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ShapeError("empty ledger CSV")
        n_x = max(int(r["x"]) for r in rows) + 1
        n_y = max(int(r["y"]) for r in rows) + 1
        if len(rows) != n_x * n_y:
            raise ShapeError("ledger CSV does not cover every setting exactly once")
        out = {k: np.zeros((n_x, n_y), dtype=np.int64) for k in ("trigger", "d0", "d1", "lost")}
        for r in rows:
            x, y = int(r["x"]), int(r["y"])
            for k in out:
                out[k][x, y] = int(r[k])
        return cls(**out)


def _setting_streams(seed: int, n_settings: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    ss = np.random.SeedSequence(int(seed))
    children = ss.spawn(1 + n_settings)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]


def _sample_counts(p0: np.ndarray, pairs: np.ndarray, device: DeviceModel,
                   streams: Sequence[np.random.Generator], accounting: Accounting) -> CountLedger:
    n_x, n_y = p0.shape
    out = {k: np.zeros((n_x, n_y), dtype=np.int64) for k in ("trigger", "d0", "d1", "lost")}
    p_signal = device.eta * device.t_b
    for x in range(n_x):
        for y in range(n_y):
            rng = streams[x * n_y + y]
            n = int(pairs[x, y])
            triggered = int(rng.binomial(n, device.t_a))
            detected = int(rng.binomial(triggered, p_signal))
            d0 = int(rng.binomial(detected, p0[x, y]))
            runs = triggered if accounting is Accounting.PER_TRIGGER else n
            out["trigger"][x, y] = runs
            out["d0"][x, y] = d0
            out["d1"][x, y] = detected - d0
            out["lost"][x, y] = runs - detected
    return CountLedger(**out)


def run_experiment(config: PhaseConfig, device: DeviceModel, trials: int, seed: int = 0,
                   x_mode: XMode | str = XMode.ROUND_ROBIN,
                   accounting: Accounting | str = Accounting.PER_TRIGGER) -> CountLedger:
    """Simulate ``trials`` photon pairs and return per-setting counts.

    ``y`` is uniform for every pair (a fair QRNG). ``x`` cycles through the
    preparations by default, or is drawn uniformly with ``x_mode="uniform"``.
    """
    if int(trials) < 1:
        raise ValueError("trials must be at least 1")
    trials = int(trials)
    x_mode = XMode(x_mode)
    accounting = Accounting(accounting)
    n_x, n_y = len(config.phi), len(config.sigma)
    alloc, streams = _setting_streams(seed, n_x * n_y)

    if x_mode is XMode.ROUND_ROBIN:
        per_x = np.full(n_x, trials // n_x, dtype=np.int64)
        per_x[: trials % n_x] += 1
        pairs = np.array([alloc.multinomial(n, [1.0 / n_y] * n_y) for n in per_x])
    else:
        pairs = alloc.multinomial(trials, [1.0 / (n_x * n_y)] * (n_x * n_y)).reshape(n_x, n_y)

    p0 = interference_p0(config.phi, config.sigma, device.visibility)
    return _sample_counts(p0, pairs, device, streams, accounting)


def run_fixed_counts(config: PhaseConfig, device: DeviceModel, pairs_per_setting: int, seed: int = 0,
                     accounting: Accounting | str = Accounting.PER_TRIGGER) -> CountLedger:
    """Like :func:`run_experiment` but with exactly ``pairs_per_setting`` pairs per setting."""
    if int(pairs_per_setting) < 1:
        raise ValueError("pairs_per_setting must be at least 1")
    n_x, n_y = len(config.phi), len(config.sigma)
    _, streams = _setting_streams(seed, n_x * n_y)
    pairs = np.full((n_x, n_y), int(pairs_per_setting), dtype=np.int64)
    p0 = interference_p0(config.phi, config.sigma, device.visibility)
    return _sample_counts(p0, pairs, device, streams, Accounting(accounting))


def estimate_table(ledger: CountLedger, policy) -> ProbabilityTable:
    """Empirical ``p(b|x,y)`` under an outcome-assignment policy.

    Post-selection reads ``b=0`` from D0 coincidences. Inclusive assignment
    reads ``b=1`` from D0 coincidences and ``b=0`` from everything else, so
    the two labelings are deliberately swapped.
    """
    policy = Policy.parse(policy)
    n0, n1 = ledger.outcome_counts(policy)
    n = n0 + n1
    empty = np.argwhere(n == 0)
    if empty.size:
        x, y = empty[0]
        raise EmptySetting(f"setting (x={x}, y={y}) has no events under policy {policy.value}")
    return ProbabilityTable(np.stack([n0 / n, n1 / n]))


# -- phase sweep -------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """Grid of preparation phases and the data source for the sweep.

    ``source`` is ``"analytic"`` (expected tables under ``device``) or
    ``"simulated"`` (counts drawn per grid point and measurement setting).
    """

    grid: tuple[float, ...]
    sigma: tuple[float, float] = SWEEP_SIGMA
    source: str = "analytic"
    device: DeviceModel = field(default_factory=DeviceModel)
    trials_per_setting: int = 10_000
    seed: int = 0
    bins: int = DEFAULT_BINS
    accounting: Accounting = Accounting.PER_TRIGGER

    def __post_init__(self):
        if len(self.grid) == 0:
            raise ShapeError("sweep grid must be nonempty")
        object.__setattr__(self, "grid", tuple(reduce_phase(g) for g in self.grid))
        object.__setattr__(self, "sigma", tuple(reduce_phase(s) for s in self.sigma))
        if len(self.sigma) != 2:
            raise ShapeError("the I_DW sweep uses exactly two measurement phases")
        if self.source not in ("analytic", "simulated"):
            raise ValueError(f"unknown sweep source {self.source!r}")
        if self.bins < 1:
            raise ValueError("bins must be positive")
        object.__setattr__(self, "accounting", Accounting(self.accounting))

    @classmethod
    def uniform(cls, n: int = 70, **kwargs) -> "SweepSpec":
        return cls(grid=tuple(np.arange(n) * (TWO_PI / n)), **kwargs)


@dataclass(frozen=True, eq=False)
class SweepResult:
    values: np.ndarray          # I_DW per tuple, indexed [x1, x2, x3] over the grid
    counts: np.ndarray
    edges: np.ndarray
    grid: tuple[float, ...]

    @property
    def n_tuples(self) -> int:
        return int(self.values.size)

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    @property
    def argmax(self) -> tuple[float, float, float]:
        i = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return tuple(self.grid[k] for k in i)

    @property
    def fraction_above_classical(self) -> float:
        return float(np.count_nonzero(self.values > CLASSICAL_BOUND_IDW)) / self.n_tuples

    def summary(self) -> dict:
        return {
            "max": self.max_value,
            "argmax_phi": list(self.argmax),
            "fraction_above_3": self.fraction_above_classical,
            "n_tuples": self.n_tuples,
        }

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count", "frequency"])
        total = self.n_tuples
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(c) / total)])
        return buf.getvalue()


def grid_expectations(spec: SweepSpec) -> np.ndarray:
    """``<B>`` for every grid phase and both measurement phases, shape ``(n, 2)``."""
    config = PhaseConfig(spec.grid, spec.sigma)
    device = spec.device
    if spec.source == "analytic":
        p0 = interference_p0(config.phi, config.sigma, device.visibility)
        if device.policy is Policy.POST_SELECTED:
            return 2.0 * p0 - 1.0
        p1 = device.coincidence_efficiency * p0
        return 1.0 - 2.0 * p1
    ledger = run_fixed_counts(config, device, spec.trials_per_setting, spec.seed, spec.accounting)
    return estimate_table(ledger, device.policy).expectations()


def sweep_values(e: np.ndarray) -> np.ndarray:
    """I_DW for every tuple ``(x1, x2, x3)`` drawn from the rows of ``e``."""
    e = np.asarray(e, dtype=float)
    first = e[:, 0] + e[:, 1]
    second = e[:, 0] - e[:, 1]
    third = -e[:, 0]
    return np.abs(first[:, None, None] + second[None, :, None] + third[None, None, :])


def sweep_idw(spec: SweepSpec) -> SweepResult:
    """Histogram of I_DW over all ``len(grid)**3`` preparation-phase tuples.

    Each grid phase is measured (or computed) once per measurement setting
    and the tuples are assembled from those shared estimates.
    """
    values = sweep_values(grid_expectations(spec))
    # guard the top edge against rounding past the algebraic maximum
    counts, edges = np.histogram(np.minimum(values, ALGEBRAIC_BOUND_IDW), bins=spec.bins,
                                 range=(0.0, ALGEBRAIC_BOUND_IDW))
    return SweepResult(values=values, counts=counts, edges=edges, grid=spec.grid)

