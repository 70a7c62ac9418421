"""Amplitudes, square moduli and modular currents over a partitioned basis."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class StructuralError(ValueError):
    """Dimension or shape mismatch between a state and its partition."""


class Status(str, enum.Enum):
    REALIZED = "realized"
    READY = "ready"
    DORMANT = "dormant"


@dataclass(frozen=True)
class BasisLabel:
    index: int
    name: str


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise StructuralError("amplitudes must be one-dimensional")
        if not np.all(np.isfinite(amps)):
            raise StructuralError("amplitudes must be finite")
        object.__setattr__(self, "amplitudes", amps)

    def __len__(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True)
class ComponentPartition:
    """Disjoint groups of basis indices, each with a status.

    ``names`` and ``components`` are in scenario order; that order is the
    fixed component ordering used for stochastic selection.
    """

    names: tuple[str, ...]
    components: tuple[tuple[int, ...], ...]
    statuses: tuple[Status, ...]
    size: int = field(default=-1)

    def __post_init__(self):
        comps = tuple(tuple(int(i) for i in c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "statuses", tuple(Status(s) for s in self.statuses))
        object.__setattr__(self, "names", tuple(self.names))
        if not (len(self.names) == len(comps) == len(self.statuses)):
            raise StructuralError("names, components and statuses differ in length")
        flat = [i for c in comps for i in c]
        n = self.size if self.size >= 0 else len(flat)
        object.__setattr__(self, "size", n)
        if sorted(flat) != list(range(n)):
            raise StructuralError("components must partition 0..N-1 exactly")

    def __len__(self) -> int:
        return len(self.components)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def with_statuses(self, statuses: Sequence[Status]) -> "ComponentPartition":
        return ComponentPartition(self.names, self.components, tuple(statuses), self.size)

    def having(self, status: Status) -> list[int]:
        return [m for m, s in enumerate(self.statuses) if s is status]

    def membership(self) -> np.ndarray:
        """N x M 0/1 matrix mapping basis states to components."""
        out = np.zeros((self.size, len(self.components)))
        for m, comp in enumerate(self.components):
            out[list(comp), m] = 1.0
        return out

    def mask(self, members: Sequence[int]) -> np.ndarray:
        out = np.zeros(self.size, dtype=bool)
        for m in members:
            out[list(self.components[m])] = True
        return out


@dataclass(frozen=True)
class CurrentReport:
    per_component_J: np.ndarray
    per_component_s: np.ndarray
    total_s: float


def _amplitudes(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.amplitudes
    return np.asarray(state, dtype=complex)


def _check(amps: np.ndarray, part: ComponentPartition) -> None:
    if amps.shape[-1] != part.size:
        raise StructuralError(
            f"state has {amps.shape[-1]} amplitudes, partition covers {part.size}"
        )


def component_square_modulus(state, part: ComponentPartition, m: int) -> float:
    amps = _amplitudes(state)
    _check(amps, part)
    if not 0 <= m < len(part):
        raise StructuralError(f"no component {m}")
    sub = amps[list(part.components[m])]
    return float(np.sum(sub.real**2 + sub.imag**2))


def total_square_modulus(state) -> float:
    amps = _amplitudes(state)
    return float(np.sum(amps.real**2 + amps.imag**2))


def current_density(amps: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Per-basis-state rate of change of |amplitude|^2 under i dPhi/dt = H Phi.

    Works row-wise on a stack of states of shape (..., N).
    """
    h_phi = amps @ matrix.T
    return 2.0 * (amps.conj() * h_phi).imag


def modular_currents(state, part: ComponentPartition, h_eff) -> CurrentReport:
    amps = _amplitudes(state)
    _check(amps, part)
    matrix = getattr(h_eff, "matrix", h_eff)
    if matrix.shape != (part.size, part.size):
        raise StructuralError("operator shape does not match the partition")
    if not hasattr(h_eff, "matrix") and not np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=1e-12):
        # EffectiveHamiltonian is checked when built; raw arrays are checked here
        raise StructuralError("driving operator is not Hermitian")
    member = part.membership()
    dens = current_density(amps, matrix)
    mod = amps.real**2 + amps.imag**2
    return CurrentReport(
        per_component_J=dens @ member,
        per_component_s=mod @ member,
        total_s=float(mod.sum()),
    )
