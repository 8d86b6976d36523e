"""The W2 determinant witness and the linear I_DW witness.

Witness formulas use 1-based settings; arrays here are 0-based, so ``p(i,j)`` is
``p0[i-1, j-1]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .pam_core import (
    IDW_SCENARIO,
    TWO_PI,
    W2_SCENARIO,
    PamError,
    PhaseConfig,
    ProbabilityTable,
    ShapeError,
    reduce_phase,
)
from .quantum_model import Policy

CLASSICAL_BOUND_IDW = 3.0
QUANTUM_BOUND_IDW = 1.0 + 2.0 * math.sqrt(2.0)
ALGEBRAIC_BOUND_IDW = 5.0
CLASSICAL_BOUND_W2 = 0.0
QUANTUM_BOUND_W2 = 1.0


class EmptySetting(PamError):
    pass


# -- array kernels -----------------------------------------------------------
# These act on p0 = p(0|x,y) with shape (..., n_x, n_y) so that grids of
# tables can be evaluated in one call.

def det_w2_p0(p0) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float)
    a = p0[..., 0, 0] - p0[..., 1, 0]
    b = p0[..., 2, 0] - p0[..., 3, 0]
    c = p0[..., 0, 1] - p0[..., 1, 1]
    d = p0[..., 2, 1] - p0[..., 3, 1]
    return a * d - b * c


def idw_signed_e(e) -> np.ndarray:
    """Signed I_DW combination of expectation values ``e[..., x, y]``."""
    e = np.asarray(e, dtype=float)
    return e[..., 0, 0] + e[..., 0, 1] + e[..., 1, 0] - e[..., 1, 1] - e[..., 2, 0]


def idw_signed_p0(p0) -> np.ndarray:
    return idw_signed_e(2.0 * np.asarray(p0, dtype=float) - 1.0)


# -- table-level witnesses ---------------------------------------------------

def _check_shape(table: ProbabilityTable, n_x: int, n_y: int, name: str) -> None:
    if not isinstance(table, ProbabilityTable):
        raise ShapeError(f"{name} needs a ProbabilityTable, got {type(table).__name__}")
    if table.p.shape != (2, n_x, n_y):
        raise ShapeError(f"{name} needs a table of shape (2, {n_x}, {n_y}), got {table.p.shape}")


def w2_matrix(table: ProbabilityTable) -> np.ndarray:
    """The 2x2 matrix of probability differences whose determinant is W2."""
    _check_shape(table, 4, 2, "W2")
    p = table.p0
    return np.array([
        [p[0, 0] - p[1, 0], p[2, 0] - p[3, 0]],
        [p[0, 1] - p[1, 1], p[2, 1] - p[3, 1]],
    ])


def det_w2(table: ProbabilityTable) -> float:
    """Signed determinant of the W2 matrix; the witness statistic is its absolute value."""
    _check_shape(table, 4, 2, "W2")
    return float(det_w2_p0(table.p0))


def abs_det_w2(table: ProbabilityTable) -> float:
    return abs(det_w2(table))


def i_dw(table: ProbabilityTable) -> float:
    """``|<B11> + <B12> + <B21> - <B22> - <B31>|``.

    Only five expectations are read; the (x=3, y=2) entry is ignored.
    """
    _check_shape(table, 3, 2, "I_DW")
    return abs(float(idw_signed_e(table.expectations())))


WITNESSES: dict[str, Callable[[ProbabilityTable], float]] = {
    "w2": abs_det_w2,
    "idw": i_dw,
}

SCENARIOS = {"w2": W2_SCENARIO, "idw": IDW_SCENARIO}


def parse_witness(name: str) -> str:
    key = str(name).strip().lower().replace("_", "")
    if key in ("w2", "detw2"):
        return "w2"
    if key in ("idw",):
        return "idw"
    raise ValueError(f"unknown witness {name!r}; expected 'w2' or 'idw'")


# -- results and uncertainty -------------------------------------------------

@dataclass(frozen=True)
class WitnessResult:
    witness: str
    value: float
    stderr: float = 0.0
    maximizing_config: Optional[PhaseConfig] = None
    degenerate: bool = False

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"witness value must be finite, got {self.value!r}")
        if not (self.stderr >= 0.0):
            raise ValueError(f"stderr must be nonnegative, got {self.stderr!r}")

    def to_dict(self) -> dict:
        cfg = self.maximizing_config
        return {
            "witness": self.witness,
            "value": self.value,
            "stderr": self.stderr,
            "phases": list(cfg.phi) if cfg else None,
            "sigma": list(cfg.sigma) if cfg else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "WitnessResult":
        d = json.loads(text)
        cfg = None
        if d.get("phases") is not None:
            cfg = PhaseConfig(tuple(d["phases"]), tuple(d["sigma"]))
        return cls(d["witness"], float(d["value"]), float(d["stderr"]), cfg)


def expectation_variance(n0, n1) -> np.ndarray:
    """Binomial variance of ``<B> = (n0 - n1)/(n0 + n1)``: ``4 n0 n1 / (n0+n1)^3``."""
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    n = n0 + n1
    return 4.0 * n0 * n1 / n**3


def witness_stderr(ledger, witness: str, policy=Policy.POST_SELECTED) -> WitnessResult:
    """Witness value from a count ledger with first-order propagated error.

    ``ledger`` must provide ``outcome_counts(policy) -> (n0, n1)`` arrays of
    shape ``(n_x, n_y)``. For the absolute-value witnesses the error is that
    of the signed quantity.
    """
    witness = parse_witness(witness)
    policy = Policy.parse(policy)
    n0, n1 = ledger.outcome_counts(policy)
    n0 = np.asarray(n0, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    n = n0 + n1
    scen = SCENARIOS[witness]
    if n.shape != (scen.n_x, scen.n_y):
        raise ShapeError(f"{witness} needs {scen.n_x}x{scen.n_y} settings, ledger has {n.shape}")
    # I_DW never reads (x=3, y=2)
    used = np.ones(n.shape, dtype=bool)
    if witness == "idw":
        used[2, 1] = False
    empty = np.argwhere((n == 0) & used)
    if empty.size:
        x, y = empty[0]
        raise EmptySetting(f"setting (x={x}, y={y}) has no events under policy {policy.value}")
    safe_n = np.where(n > 0, n, 1.0)
    p0 = n0 / safe_n
    # unused settings may be empty; safe_n keeps them at zero variance
    var_b = 4.0 * n0 * n1 / safe_n**3
    degenerate = bool(np.any(((n0 == 0) | (n1 == 0)) & used))

    if witness == "idw":
        signed = float(idw_signed_p0(p0))
        var = var_b[0, 0] + var_b[0, 1] + var_b[1, 0] + var_b[1, 1] + var_b[2, 0]
        return WitnessResult("idw", abs(signed), float(math.sqrt(var)), degenerate=degenerate)

    var_p = var_b / 4.0
    a = p0[0, 0] - p0[1, 0]
    b = p0[2, 0] - p0[3, 0]
    c = p0[0, 1] - p0[1, 1]
    d = p0[2, 1] - p0[3, 1]
    grad = np.array([
        [d, -b],
        [-d, b],
        [-c, a],
        [c, -a],
    ])
    signed = float(a * d - b * c)
    var = float(np.sum(grad**2 * var_p))
    return WitnessResult("w2", abs(signed), math.sqrt(var), degenerate=degenerate)


# -- quantum optimization ----------------------------------------------------

def _objective_p0(witness: str):
    if witness == "w2":
        return lambda p0: np.abs(det_w2_p0(p0))
    return lambda p0: np.abs(idw_signed_p0(p0))


def _coordinate_ascent(f, x0: np.ndarray, step: float, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Compass search on a periodic box: poll +-step per coordinate, halve on failure."""
    x = np.mod(x0, TWO_PI)
    fx = f(x)
    while step >= tol:
        improved = False
        for i in range(x.size):
            for direction in (1.0, -1.0):
                trial = x.copy()
                trial[i] = (trial[i] + direction * step) % TWO_PI
                ft = f(trial)
                if ft > fx:
                    x, fx = trial, ft
                    improved = True
                    break
        if not improved:
            step *= 0.5
    return x, fx


def maximize_quantum(witness: str, fixed_sigma: Optional[Sequence[float]] = None,
                     grid_n: int = 8, seed: int = 0, n_starts: int = 20,
                     visibility: float = 1.0) -> WitnessResult:
    """Maximize a witness over qubit phase settings.

    A coarse grid over the free phases seeds ``n_starts`` compass searches
    (half from the best grid points, half uniformly random from ``seed``);
    the step halves until it drops below 1e-9. Among equal maxima the
    lexicographically smallest reduced phase tuple is returned.

    When both measurement phases are free, the first one is pinned to zero
    during the grid stage: only the sums ``phi_x + sigma_y`` matter, so this
    loses nothing and removes one grid dimension.
    """
    witness = parse_witness(witness)
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    scen = SCENARIOS[witness]
    n_x, n_y = scen.n_x, scen.n_y
    obj = _objective_p0(witness)

    if fixed_sigma is not None:
        sigma_fixed = np.array([reduce_phase(s) for s in fixed_sigma], dtype=float)
        if sigma_fixed.shape != (n_y,):
            raise ShapeError(f"fixed_sigma needs {n_y} values")

        def split(v):
            return v[..., :n_x], np.broadcast_to(sigma_fixed, v.shape[:-1] + (n_y,))
        dims = n_x
        grid_dims = n_x
    else:
        def split(v):
            return v[..., :n_x], v[..., n_x:]
        dims = n_x + n_y
        grid_dims = dims - 1

    def batch_value(v):
        phi, sig = split(v)
        p0 = 0.5 * (1.0 + visibility * np.cos(phi[..., :, None] + sig[..., None, :]))
        return obj(p0)

    def value(v):
        return float(batch_value(v))

    axis = np.arange(grid_n) * (TWO_PI / grid_n)
    mesh = np.stack(np.meshgrid(*([axis] * grid_dims), indexing="ij"), axis=-1).reshape(-1, grid_dims)
    if grid_dims < dims:
        # sigma_1 pinned to zero
        mesh = np.insert(mesh, n_x, 0.0, axis=1)
    grid_vals = batch_value(mesh)

    n_grid_starts = max(1, n_starts // 2)
    order = np.argsort(-grid_vals, kind="stable")[:n_grid_starts]
    rng = np.random.default_rng(seed)
    starts = [mesh[i] for i in order]
    starts += list(rng.uniform(0.0, TWO_PI, size=(max(0, n_starts - len(starts)), dims)))

    step0 = TWO_PI / grid_n / 2.0
    results = [_coordinate_ascent(value, np.array(s, dtype=float), step0) for s in starts]
    best = max(fx for _, fx in results)
    ties = [x for x, fx in results if fx >= best - 1e-12]
    best_x = min(ties, key=lambda x: tuple(np.round(x, 12)))
    phi, sig = split(best_x)
    cfg = PhaseConfig(tuple(float(v) for v in phi), tuple(float(v) for v in sig))
    return WitnessResult(witness, float(best), 0.0, cfg)
