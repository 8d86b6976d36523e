"""Qubit model of the polarization Mach-Zehnder interferometer.

The first half-wave plate prepares the balanced superposition of the two
polarizations, the liquid crystal adds ``phi_x`` between them, the Pockels
cell adds ``sigma_y`` and the second half-wave plate plus PBS projects. With
our labeling the detector read as ``b=0`` fires with probability

    p(0|x,y) = (1 + cos(phi_x + sigma_y)) / 2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .pam_core import PamError, PhaseConfig, ProbabilityTable

TOL = 1e-12
IDENTITY = np.eye(2, dtype=complex)


class InvalidInput(PamError):
    pass


class Policy(str, enum.Enum):
    """How trigger events are turned into outcomes ``b``."""

    #: condition on a signal coincidence; D0 coincidence means b=0
    POST_SELECTED = "post_selected"
    #: every trigger is a run; D0 coincidence means b=1, anything else b=0
    INCLUSIVE = "inclusive"

    @classmethod
    def parse(cls, value) -> "Policy":
        if isinstance(value, cls):
            return value
        aliases = {
            "post_selected": cls.POST_SELECTED, "postselected": cls.POST_SELECTED,
            "fair_sampling": cls.POST_SELECTED,
            "inclusive": cls.INCLUSIVE, "inclusive_assignment": cls.INCLUSIVE,
            "inclusiveassignment": cls.INCLUSIVE, "loophole_free": cls.INCLUSIVE,
        }
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise ValueError(f"unknown policy {value!r}") from None


def _eigvalsh2(m: np.ndarray) -> tuple[float, float]:
    # closed form for a Hermitian 2x2 matrix
    a = m[0, 0].real
    d = m[1, 1].real
    off = abs(m[0, 1])
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), off)
    return mean - rad, mean + rad


def _is_hermitian(m: np.ndarray) -> bool:
    return bool(np.all(np.abs(m - m.conj().T) <= TOL))


@dataclass(frozen=True, eq=False)
class QubitState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise InvalidInput(f"density matrix must be 2x2, got {rho.shape}")
        if not _is_hermitian(rho):
            raise InvalidInput("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > TOL:
            raise InvalidInput(f"density matrix has trace {np.trace(rho)!r}")
        if _eigvalsh2(rho)[0] < -TOL:
            raise InvalidInput("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)


@dataclass(frozen=True, eq=False)
class MeasurementEffect:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise InvalidInput(f"effect must be 2x2, got {m.shape}")
        if not _is_hermitian(m):
            raise InvalidInput("effect is not Hermitian")
        lo, hi = _eigvalsh2(m)
        if lo < -TOL or hi > 1.0 + TOL:
            raise InvalidInput(f"effect eigenvalues ({lo}, {hi}) outside [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def complement(self) -> "MeasurementEffect":
        return MeasurementEffect(IDENTITY - self.matrix)


@dataclass(frozen=True)
class DeviceModel:
    """Detector efficiency, arm transmittances, visibility and assignment policy."""

    eta: float = 1.0
    t_a: float = 1.0
    t_b: float = 1.0
    visibility: float = 1.0
    policy: Policy = Policy.POST_SELECTED

    def __post_init__(self):
        for name in ("eta", "t_a", "t_b", "visibility"):
            value = float(getattr(self, name))
            if not (0.0 <= value <= 1.0):
                raise InvalidInput(f"{name} out of [0,1]: {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "policy", Policy.parse(self.policy))

    @property
    def coincidence_efficiency(self) -> float:
        """Probability that a source pair yields a signal coincidence."""
        return self.eta * self.t_a * self.t_b

    def to_dict(self) -> dict:
        return {"eta": self.eta, "t_a": self.t_a, "t_b": self.t_b,
                "visibility": self.visibility, "policy": self.policy.value}


def prepare_state(phi: float) -> QubitState:
    """Pure state ``(|0> + e^{i phi}|1>)/sqrt(2)`` as a density matrix."""
    if not math.isfinite(phi):
        raise InvalidInput(f"phase must be finite, got {phi!r}")
    e = complex(math.cos(phi), math.sin(phi))
    rho = 0.5 * np.array([[1.0, e.conjugate()], [e, 1.0]], dtype=complex)
    return QubitState(rho)


def measurement_effects(sigma: float) -> tuple[MeasurementEffect, MeasurementEffect]:
    """Projectors onto ``(|0> +- e^{-i sigma}|1>)/sqrt(2)``; the first is ``b=0``."""
    if not math.isfinite(sigma):
        raise InvalidInput(f"phase must be finite, got {sigma!r}")
    e = complex(math.cos(sigma), -math.sin(sigma))
    m0 = 0.5 * np.array([[1.0, e.conjugate()], [e, 1.0]], dtype=complex)
    # the companion is built as 1 - M0 so that completeness holds exactly
    m1 = IDENTITY - m0
    return MeasurementEffect(m0), MeasurementEffect(m1)


def born_probability(state: QubitState, effect: MeasurementEffect) -> float:
    if not isinstance(state, QubitState) or not isinstance(effect, MeasurementEffect):
        raise InvalidInput("expected a QubitState and a MeasurementEffect")
    p = float(np.trace(state.rho @ effect.matrix).real)
    if -TOL <= p < 0.0:
        p = 0.0
    elif 1.0 < p <= 1.0 + TOL:
        p = 1.0
    elif not 0.0 <= p <= 1.0:
        raise InvalidInput(f"Born probability {p!r} outside [0, 1]")
    return p


def born_table(config: PhaseConfig) -> ProbabilityTable:
    """Table assembled setting by setting from states and effects."""
    p0 = np.empty((len(config.phi), len(config.sigma)))
    effects = [measurement_effects(s)[0] for s in config.sigma]
    for x, phi in enumerate(config.phi):
        rho = prepare_state(phi)
        for y, m0 in enumerate(effects):
            p0[x, y] = born_probability(rho, m0)
    return ProbabilityTable.from_p0(p0)


def interference_p0(phi, sigma, visibility: float = 1.0) -> np.ndarray:
    """``(1 + V cos(phi_x + sigma_y))/2`` on the outer grid of ``phi`` and ``sigma``."""
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return 0.5 * (1.0 + visibility * np.cos(np.add.outer(phi, sigma)))


def ideal_table(config: PhaseConfig) -> ProbabilityTable:
    return ProbabilityTable.from_p0(interference_p0(config.phi, config.sigma))


def lossy_table(config: PhaseConfig, device: DeviceModel) -> ProbabilityTable:
    """Expected table under visibility loss and the device's assignment policy.

    Post-selection conditions on a coincidence, so efficiency and
    transmittances drop out. Inclusive assignment reports ``b=1`` only for a
    coincidence with D0, which happens with probability ``eta*T_a*T_b*p_V(0)``.
    """
    p0 = interference_p0(config.phi, config.sigma, device.visibility)
    if device.policy is Policy.POST_SELECTED:
        return ProbabilityTable.from_p0(p0)
    p1 = device.coincidence_efficiency * p0
    return ProbabilityTable(np.stack([1.0 - p1, p1]))
