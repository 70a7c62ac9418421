"""Fixed-step integration of i dPhi/dt = H Phi with hazard quadrature.

Between collapses the effective operator is constant, so one RK4 step is the
fixed linear map R(-i H dt) with R(z) = 1 + z + z^2/2 + z^3/6 + z^4/24.
``SpectralPropagator`` applies that map in the eigenbasis of H, where the
k-th iterate is a diagonal power; this gives the same iterates as stepping
RK4 k times (to rounding) while letting a whole block of steps be computed
at once. ``method="expm"`` swaps R for the exact exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .rules import EffectiveHamiltonian, locate_in_step
from .state import ComponentPartition, StateVector, Status

MAX_HALVINGS = 30
# allowed square-modulus drift over a whole horizon
NORM_BUDGET = 1e-10
# per-step drift at or below rounding level is accepted as is
DRIFT_FLOOR = 1e-15


class StepRejected(RuntimeError):
    def __init__(self, estimate: float, tolerance: float):
        super().__init__(f"step-doubling estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}")
        self.estimate = estimate
        self.tolerance = tolerance


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float
    t_max: float
    tolerance: float = 1e-10
    method: str = "rk4"

    def __post_init__(self):
        if not (self.dt > 0 and self.t_max > 0 and self.tolerance > 0):
            raise ValueError("dt, t_max and tolerance must be positive")
        if self.method not in ("rk4", "expm"):
            raise ValueError(f"unknown method {self.method!r}")

    @classmethod
    def from_run(cls, run) -> "IntegrationConfig":
        return cls(run.dt, run.t_max, run.tolerance, run.method)


@dataclass
class HazardAccumulator:
    threshold: float
    value: float = 0.0

    def reset(self, threshold: float) -> None:
        self.threshold = threshold
        self.value = 0.0


def _matrix(h) -> np.ndarray:
    return getattr(h, "matrix", h)


def rk4_step(matrix: np.ndarray, psi: np.ndarray, dt: float) -> np.ndarray:
    def f(y):
        return -1j * (matrix @ y)

    k1 = f(psi)
    k2 = f(psi + 0.5 * dt * k1)
    k3 = f(psi + 0.5 * dt * k2)
    k4 = f(psi + dt * k3)
    return psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step(state: StateVector, h_eff, dt: float, tolerance: float | None = None) -> StateVector:
    """One classical RK4 step; with a tolerance, reject via step doubling."""
    matrix = _matrix(h_eff)
    full = rk4_step(matrix, state.amplitudes, dt)
    if tolerance is not None:
        half = rk4_step(matrix, rk4_step(matrix, state.amplitudes, dt / 2), dt / 2)
        estimate = float(np.linalg.norm(full - half))
        if estimate > tolerance:
            raise StepRejected(estimate, tolerance)
    return StateVector(full, state.time + dt)


def _rk4_multiplier(z: np.ndarray) -> np.ndarray:
    return 1 + z * (1 + z / 2 * (1 + z / 3 * (1 + z / 4)))


class SpectralPropagator:
    """Repeated fixed steps of a constant Hermitian operator.

    Basis states whose rows and columns are zero never change and are left
    out of the eigendecomposition. The step is halved until the step-doubling
    estimate is within ``tolerance`` and, for RK4, the per-step norm drift
    keeps the drift over ``horizon`` within ``norm_budget`` (per-step drift
    within ``tolerance`` when no horizon is given). ``dt`` holds the
    accepted step.
    """

    def __init__(
        self,
        h_eff,
        dt: float,
        method: str = "rk4",
        tolerance: float = 1e-10,
        horizon: float | None = None,
        norm_budget: float = NORM_BUDGET,
    ):
        matrix = _matrix(h_eff)
        self.matrix = matrix
        self.method = method
        n = matrix.shape[0]
        nz = np.any(matrix != 0, axis=0) | np.any(matrix != 0, axis=1)
        self.active = np.flatnonzero(nz)
        self.frozen = np.flatnonzero(~nz)
        sub = matrix[np.ix_(self.active, self.active)]
        if sub.size:
            self.energies, self.vectors = np.linalg.eigh(sub)
        else:
            self.energies, self.vectors = np.zeros(0), np.zeros((0, 0), dtype=complex)
        self.size = n
        self.requested_dt = dt
        for _ in range(MAX_HALVINGS + 1):
            self.dt = dt
            self.estimate = self.error_estimate(dt)
            drift_cap = tolerance if horizon is None else max(norm_budget * dt / horizon, DRIFT_FLOOR)
            if self.estimate <= tolerance and self.norm_drift(dt) <= drift_cap:
                break
            dt = dt / 2
        else:
            raise StepRejected(self.estimate, tolerance)
        self.step_multiplier = self.multiplier(self.dt)
        self.sparse = sparse.csr_matrix(matrix)

    def multiplier(self, tau: float) -> np.ndarray:
        z = -1j * self.energies * tau
        if self.method == "expm":
            return np.exp(z)
        return _rk4_multiplier(z)

    def error_estimate(self, dt: float) -> float:
        """Step-doubling estimate: |R(z) - R(z/2)^2| over the spectrum."""
        if not self.energies.size or self.method == "expm":
            return 0.0
        return float(np.max(np.abs(self.multiplier(dt) - self.multiplier(dt / 2) ** 2)))

    def norm_drift(self, dt: float) -> float:
        """Worst per-step change of square modulus, | |R(z)|^2 - 1 |."""
        if not self.energies.size or self.method == "expm":
            return 0.0
        return float(np.max(np.abs(np.abs(self.multiplier(dt)) ** 2 - 1.0)))

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ psi[self.active]

    def assemble(self, coef: np.ndarray, template: np.ndarray) -> np.ndarray:
        """States (rows) from eigen-coefficients (rows); frozen entries from template."""
        coef = np.atleast_2d(coef)
        out = np.empty((coef.shape[0], self.size), dtype=complex)
        out[:, self.active] = coef @ self.vectors.T
        out[:, self.frozen] = template[self.frozen]
        return out

    def powers(self, c0: np.ndarray, k: np.ndarray) -> np.ndarray:
        return c0[None, :] * np.power(self.step_multiplier[None, :], k[:, None])

    def substep(self, psi: np.ndarray, tau: float) -> np.ndarray:
        c = self.coefficients(psi) * self.multiplier(tau)
        return self.assemble(c, psi)[0]

    def propagate(self, psi: np.ndarray, n_steps: int) -> np.ndarray:
        c = self.powers(self.coefficients(psi), np.array([n_steps]))
        return self.assemble(c, psi)[0]


def hazard_of_states(
    states: np.ndarray, h_sparse, ready_member: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Hazard and total square modulus for a stack of states (rows)."""
    h_phi = (h_sparse @ states.T).T
    dens = 2.0 * (states.conj() * h_phi).imag
    s = np.sum(states.real**2 + states.imag**2, axis=1)
    if ready_member.shape[1] == 0:
        return np.zeros(len(states)), s
    currents = np.clip(dens @ ready_member, 0.0, None)
    return currents.sum(axis=1) / s, s


@dataclass
class _Chunk:
    k0: int
    states: np.ndarray
    hazard: np.ndarray
    cumulative: np.ndarray


@dataclass
class Segment:
    """Deterministic trajectory between two collapses, built lazily in chunks.

    Node k sits at ``t0 + k * dt`` for k = 0..n_steps, the last node at or
    beyond ``t_end``. The accumulated hazard uses the trapezoid rule on the
    node hazards; inside a step the hazard at ``t_k + tau`` comes from a
    sub-step of length tau from node k, so both share one grid.
    """

    propagator: SpectralPropagator
    psi0: np.ndarray
    t0: float
    t_end: float
    ready_member: np.ndarray
    chunk_size: int = 256
    keep_states: bool = False
    chunks: list = field(default_factory=list)

    def __post_init__(self):
        dt = self.propagator.dt
        span = self.t_end - self.t0
        self.n_steps = math.ceil(span / dt) if span > 0 else 0
        self._c0 = self.propagator.coefficients(self.psi0)

    @property
    def dt(self) -> float:
        return self.propagator.dt

    def time(self, k: int) -> float:
        return self.t0 + k * self.dt

    def _extend(self) -> bool:
        k0 = len(self.chunks) * self.chunk_size
        if k0 > self.n_steps:
            return False
        k = np.arange(k0, min(k0 + self.chunk_size, self.n_steps + 1))
        states = self.propagator.assemble(self.propagator.powers(self._c0, k), self.psi0)
        lam, _ = hazard_of_states(states, self.propagator.sparse, self.ready_member)
        if self.chunks:
            prev = self.chunks[-1]
            lam_prev = np.concatenate(([prev.hazard[-1]], lam[:-1]))
            start = prev.cumulative[-1]
            inc = 0.5 * self.dt * (lam_prev + lam)
        else:
            start = 0.0
            inc = 0.5 * self.dt * (np.concatenate(([lam[0]], lam[:-1])) + lam)
            inc[0] = 0.0
        cumulative = start + np.cumsum(inc)
        self.chunks.append(_Chunk(k0, states if self.keep_states else None, lam, cumulative))
        return True

    def _node(self, k: int) -> tuple[float, float]:
        while k >= len(self.chunks) * self.chunk_size:
            if not self._extend():
                raise IndexError(k)
        ch = self.chunks[k // self.chunk_size]
        i = k - ch.k0
        return ch.hazard[i], ch.cumulative[i]

    def state(self, k: int) -> np.ndarray:
        """State at node k, computed on its own so the value never depends on chunking."""
        c = self.propagator.powers(self._c0, np.array([k]))
        return self.propagator.assemble(c, self.psi0)[0]

    def stored_states(self, k0: int, k1: int) -> np.ndarray:
        """Node states k0..k1-1 (requires keep_states)."""
        while k1 - 1 >= len(self.chunks) * self.chunk_size and self._extend():
            pass
        rows = [ch.states[max(k0 - ch.k0, 0): max(k1 - ch.k0, 0)] for ch in self.chunks]
        return np.concatenate([r for r in rows if len(r)]) if any(len(r) for r in rows) else np.zeros((0, self.psi0.size), complex)

    def node_hazards(self, k0: int, k1: int) -> np.ndarray:
        while k1 - 1 >= len(self.chunks) * self.chunk_size and self._extend():
            pass
        return np.concatenate([ch.hazard for ch in self.chunks])[k0:k1]

    def hazard_at(self, psi: np.ndarray) -> float:
        if not self.ready_member.shape[1]:
            return 0.0
        dens = 2.0 * (psi.conj() * (self.propagator.sparse @ psi)).imag
        s = float(np.sum(psi.real**2 + psi.imag**2))
        return float(np.clip(dens @ self.ready_member, 0.0, None).sum() / s)

    def cumulative_in_step(self, k: int, tau: float, psi_k: np.ndarray | None = None) -> float:
        lam_k, cum_k = self._node(k)
        if tau == 0.0:
            return float(cum_k)
        if psi_k is None:
            psi_k = self.state(k)
        lam_tau = self.hazard_at(self.propagator.substep(psi_k, tau))
        return float(cum_k + 0.5 * tau * (lam_k + lam_tau))

    def first_crossing(self, threshold: float) -> int | None:
        """Node k with cumulative(k) < threshold <= cumulative(k + 1)."""
        i = 0
        while True:
            if i >= len(self.chunks) and not self._extend():
                return None
            ch = self.chunks[i]
            if ch.cumulative[-1] >= threshold:
                j = int(np.searchsorted(ch.cumulative, threshold, side="left"))
                return ch.k0 + j - 1
            i += 1

    def locate(self, threshold: float) -> tuple[float, np.ndarray] | None:
        """Collapse time and state for a threshold, or None before t_end."""
        k = self.first_crossing(threshold)
        if k is None:
            return None
        if k < 0:
            return self.t0, self.psi0.copy()
        psi_k = self.state(k)
        tau = locate_in_step(lambda x: self.cumulative_in_step(k, x, psi_k) - threshold, self.dt, threshold)
        t_sc = self.time(k) + tau
        if t_sc > self.t_end:
            return None
        return t_sc, self.propagator.substep(psi_k, tau)

    def end_state(self) -> np.ndarray:
        if self.n_steps == 0:
            return self.psi0.copy()
        k = self.n_steps - 1
        return self.propagator.substep(self.state(k), self.t_end - self.time(k))

    def cumulative_until(self, k: int) -> float:
        return float(self._node(k)[1])


@dataclass(frozen=True)
class RanToHorizon:
    state: StateVector


@dataclass(frozen=True)
class EventAt:
    t_sc: float
    state: StateVector


def ready_membership(part: ComponentPartition) -> np.ndarray:
    return part.membership()[:, part.having(Status.READY)]


def advance_with_hazard(
    state: StateVector,
    part: ComponentPartition,
    h_eff: EffectiveHamiltonian,
    acc: HazardAccumulator,
    cfg: IntegrationConfig,
    propagator: SpectralPropagator | None = None,
) -> RanToHorizon | EventAt:
    """Integrate state and accumulated hazard until the threshold or t_max."""
    prop = propagator or SpectralPropagator(h_eff, cfg.dt, cfg.method, cfg.tolerance, horizon=cfg.t_max)
    seg = Segment(prop, state.amplitudes, state.time, cfg.t_max, ready_membership(part))
    hit = seg.locate(acc.threshold)
    if hit is None:
        if seg.n_steps:
            acc.value = seg.cumulative_in_step(seg.n_steps - 1, cfg.t_max - seg.time(seg.n_steps - 1))
        return RanToHorizon(StateVector(seg.end_state(), max(cfg.t_max, state.time)))
    t_sc, psi = hit
    acc.value = acc.threshold
    return EventAt(t_sc, StateVector(psi, t_sc))
