"""Classical hidden-variable models with a bounded message.

A deterministic strategy sends ``lam = encoder[x]`` and answers
``b = decoder[lam][y]``. Every classical model with message dimension ``d``
and no shared randomness is a mixture of these, so maxima of convex
witnesses are attained on them.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .pam_core import W2_SCENARIO, PamError, PamScenario, ProbabilityTable, ShapeError
from .witness import CLASSICAL_BOUND_IDW, det_w2_p0

DEFAULT_CAP = 10**6
DEFAULT_COMPONENTS = 4


class CapExceeded(PamError):
    pass


@dataclass(frozen=True, order=True)
class DeterministicStrategy:
    encoder: tuple[int, ...]
    decoder: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        enc = tuple(int(v) for v in self.encoder)
        dec = tuple(tuple(int(b) for b in row) for row in self.decoder)
        if not enc or not dec:
            raise ShapeError("encoder and decoder must be nonempty")
        dim = len(dec)
        if any(not 0 <= lam < dim for lam in enc):
            raise ShapeError(f"encoder values must lie in 0..{dim - 1}")
        n_y = len(dec[0])
        if n_y < 1 or any(len(row) != n_y for row in dec):
            raise ShapeError("decoder must be a dim x n_y table")
        if any(b not in (0, 1) for row in dec for b in row):
            raise ShapeError("decoder outcomes must be 0 or 1")
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)

    @property
    def scenario(self) -> PamScenario:
        return PamScenario(n_x=len(self.encoder), n_y=len(self.decoder[0]), dim=len(self.decoder))

    def p0(self) -> np.ndarray:
        dec = np.array(self.decoder)
        return (dec[list(self.encoder)] == 0).astype(float)

    def to_dict(self) -> dict:
        return {"encoder": list(self.encoder), "decoder": [list(r) for r in self.decoder]}

    @classmethod
    def from_dict(cls, d: dict) -> "DeterministicStrategy":
        return cls(tuple(d["encoder"]), tuple(tuple(r) for r in d["decoder"]))


@dataclass(frozen=True)
class CorrelatedStrategy:
    """Mixture of deterministic strategies driven by shared randomness."""

    weights: tuple[float, ...]
    components: tuple[DeterministicStrategy, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        comps = tuple(self.components)
        if not comps or len(w) != len(comps):
            raise ShapeError("need at least one component and one weight per component")
        if any(v < 0.0 or v > 1.0 for v in w):
            raise ShapeError("weights must lie in [0, 1]")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ShapeError(f"weights sum to {math.fsum(w)!r}, not 1")
        shapes = {c.scenario for c in comps}
        if len(shapes) != 1:
            raise ShapeError("all components must share one scenario")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def scenario(self) -> PamScenario:
        return self.components[0].scenario

    def p0(self) -> np.ndarray:
        return sum(w * c.p0() for w, c in zip(self.weights, self.components))

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "components": [c.to_dict() for c in self.components]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CorrelatedStrategy":
        d = json.loads(text)
        return cls(tuple(d["weights"]), tuple(DeterministicStrategy.from_dict(c) for c in d["components"]))


def strategy_count(scenario: PamScenario) -> int:
    return scenario.dim ** scenario.n_x * 2 ** (scenario.dim * scenario.n_y)


def iter_deterministic(scenario: PamScenario, cap: int = DEFAULT_CAP) -> Iterator[DeterministicStrategy]:
    count = strategy_count(scenario)
    if count > cap:
        raise CapExceeded(f"{count} deterministic strategies exceed the cap of {cap}")
    d, n_x, n_y = scenario.dim, scenario.n_x, scenario.n_y
    decoders = [
        tuple(tuple(bits[lam * n_y:(lam + 1) * n_y]) for lam in range(d))
        for bits in itertools.product((0, 1), repeat=d * n_y)
    ]
    for enc in itertools.product(range(d), repeat=n_x):
        for dec in decoders:
            yield DeterministicStrategy(enc, dec)


def enumerate_deterministic(scenario: PamScenario, cap: int = DEFAULT_CAP) -> list[DeterministicStrategy]:
    """All ``d**n_x * 2**(d*n_y)`` deterministic strategies in lexicographic order."""
    return list(iter_deterministic(scenario, cap))


def strategy_table(strategy: DeterministicStrategy | CorrelatedStrategy,
                   scenario: PamScenario | None = None) -> ProbabilityTable:
    if scenario is not None:
        s = strategy.scenario
        if (s.n_x, s.n_y, s.dim) != (scenario.n_x, scenario.n_y, scenario.dim):
            raise ShapeError(f"strategy is for {s}, expected {scenario}")
    return ProbabilityTable.from_p0(strategy.p0())


def classical_max(witness: Callable[[ProbabilityTable], float], scenario: PamScenario,
                  cap: int = DEFAULT_CAP) -> tuple[float, DeterministicStrategy]:
    """Maximum of ``witness`` over deterministic strategies.

    Ties go to the lexicographically smallest strategy.
    """
    best_val, best = -math.inf, None
    for strat in iter_deterministic(scenario, cap):
        val = witness(ProbabilityTable.from_p0(strat.p0()))
        if val > best_val:
            best_val, best = val, strat
    return best_val, best


def independent_mixture_p0(encoder_mix: Sequence[tuple[float, Sequence[int]]],
                           decoder_mix: Sequence[tuple[float, Sequence[Sequence[int]]]],
                           dim: int | None = None) -> np.ndarray:
    """``p(0|x,y)`` for independently randomized encoder and decoder.

    ``encoder_mix`` is a list of ``(weight, encoder)`` and ``decoder_mix`` a
    list of ``(weight, decoder)``; the model is their product mixture.
    """
    enc_w = np.array([w for w, _ in encoder_mix], dtype=float)
    encs = np.array([e for _, e in encoder_mix], dtype=int)
    dec_w = np.array([w for w, _ in decoder_mix], dtype=float)
    decs = np.array([d for _, d in decoder_mix], dtype=int)
    if dim is None:
        dim = decs.shape[1]
    # p(lam|x) and the averaged answer G(lam, y) = p(b=0|lam, y)
    p_lam = np.einsum("k,kxl->xl", enc_w, np.eye(dim)[encs])
    g = np.einsum("k,kly->ly", dec_w, (decs == 0).astype(float))
    return p_lam @ g


def independent_det_is_zero(encoder_mix, decoder_mix) -> float:
    """``|det W2|`` of the product mixture; at most ~1e-16 for any input."""
    return float(abs(det_w2_p0(independent_mixture_p0(encoder_mix, decoder_mix))))


def correlated_det_certificate() -> CorrelatedStrategy:
    """Equal mixture of two deterministic strategies with ``|det W2| = 1``.

    Difference matrices are ``(1,1)(1,1)^T`` and ``(1,-1)(1,-1)^T``; their
    average is the identity.
    """
    a = DeterministicStrategy((0, 1, 0, 1), ((0, 0), (1, 1)))
    b = DeterministicStrategy((0, 1, 1, 0), ((0, 1), (1, 0)))
    return CorrelatedStrategy((0.5, 0.5), (a, b))


def _climb(tables: np.ndarray, idx: np.ndarray, w: np.ndarray, tol: float = 1e-9):
    """Alternate exhaustive component swaps and pairwise weight transfers."""

    def value(idx, w):
        return abs(float(det_w2_p0(np.tensordot(w, tables[idx], axes=1))))

    k = idx.size
    cur = value(idx, w)
    while True:
        improved = False
        for i in range(k):
            # p0 of the mixture as a function of component i's table
            rest = np.tensordot(w, tables[idx], axes=1) - w[i] * tables[idx[i]]
            cand = np.abs(det_w2_p0(rest[None] + w[i] * tables))
            j = int(np.argmax(cand))
            if cand[j] > cur + 1e-15:
                idx = idx.copy()
                idx[i] = j
                cur = float(cand[j])
                improved = True
        step = 0.25
        while step >= tol and k > 1:
            moved = False
            for i, j in itertools.permutations(range(k), 2):
                delta = min(step, w[j])
                if delta <= 0.0:
                    continue
                trial = w.copy()
                trial[i] += delta
                trial[j] -= delta
                val = value(idx, trial)
                if val > cur + 1e-15:
                    w, cur, moved, improved = trial, val, True, True
            if not moved:
                step *= 0.5
        if not improved:
            return cur, idx, w


def correlated_det_search(n_components: int = DEFAULT_COMPONENTS, restarts: int = 50,
                          seed: int = 0) -> tuple[float, CorrelatedStrategy]:
    """Randomized hill-climb for the largest ``|det W2|`` under shared randomness."""
    if n_components < 1:
        raise ValueError("n_components must be at least 1")
    strategies = enumerate_deterministic(W2_SCENARIO)
    tables = np.array([s.p0() for s in strategies])
    rng = np.random.default_rng(seed)
    best_val, best_idx, best_w = -1.0, None, None
    for _ in range(max(1, restarts)):
        idx = rng.integers(0, len(strategies), size=n_components)
        w = rng.dirichlet(np.ones(n_components))
        val, idx, w = _climb(tables, idx, w)
        if val > best_val:
            best_val, best_idx, best_w = val, idx, w
    # renormalize away rounding drift from the weight moves
    w = best_w / math.fsum(best_w)
    strat = CorrelatedStrategy(tuple(float(v) for v in w), tuple(strategies[i] for i in best_idx))
    return best_val, strat


def min_retrocausality(i_dw_value: float) -> float:
    """Least measurement-to-message influence that explains ``i_dw_value`` classically."""
    if not math.isfinite(i_dw_value):
        raise ValueError(f"I_DW value must be finite, got {i_dw_value!r}")
    return max((i_dw_value - CLASSICAL_BOUND_IDW) / 4.0, 0.0)
