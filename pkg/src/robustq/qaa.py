"""Amplitude amplification and phase estimation, sequential and in superposition.

Phase estimates live on the grid ``g_M(j) = pi * min(j, M - j) / M``.  The
estimate register therefore has ``M // 2 + 1`` levels, and level ``k``
stands for the angle ``pi * k / M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qstate import (
    BasisPredicate,
    Operator,
    RegisterLayout,
    StateVector,
    apply_classical_map,
    apply_controlled_power,
    apply_fourier,
    apply_operator,
    conditional_distribution,
    measurement_distribution,
    zero_state,
)

GOOD_ESTIMATE_BOUND = 8 / np.pi**2
_ANGLE_SLACK = 1e-12


def arc_distance(w0: float, w1: float) -> float | np.ndarray:
    """Distance between ``w0`` and ``w1`` on the circle of circumference 1."""
    r = np.mod(np.subtract(w1, w0), 1.0)
    return np.minimum(r, 1.0 - r)


def grid_angle(j: int, M: int) -> float:
    if not 0 <= j < M:
        raise ValueError(f"grid index {j} outside [0, {M})")
    return np.pi * j / M if 2 * j <= M else np.pi - np.pi * j / M


def grid_level(j: np.ndarray | int, M: int) -> np.ndarray | int:
    """Estimate-register level holding ``g_M(j)``, i.e. ``min(j, M - j)``."""
    return np.minimum(j, M - np.asarray(j)) if np.ndim(j) else min(int(j), M - int(j))


def fejer(delta: np.ndarray | float, M: int) -> np.ndarray:
    """``sin^2(M pi delta) / (M^2 sin^2(pi delta))``, taking the value 1 at ``delta = 0``."""
    delta = np.asarray(delta, dtype=float)
    s = np.sin(np.pi * delta)
    small = np.abs(s) < 1e-14
    safe = np.where(small, 1.0, s)
    out = np.sin(M * np.pi * delta) ** 2 / (M**2 * safe**2)
    return np.where(small, 1.0, out)


def index_distribution(theta: float, M: int) -> np.ndarray:
    """Probability of reading ``j`` from the estimation register before the grid map."""
    j = np.arange(M) / M
    plus = fejer(arc_distance(j, theta / np.pi), M)
    minus = fejer(arc_distance(j, 1 - theta / np.pi), M)
    return (plus + minus) / 2


@dataclass
class PhaseDistribution:
    """Distribution of an angle estimate over the levels ``pi * k / M``."""

    M: int
    probs: np.ndarray
    oracle_calls: int = 0
    grover_calls: int = 0

    @property
    def angles(self) -> np.ndarray:
        return np.pi * np.arange(self.M // 2 + 1) / self.M

    def mass_within(self, theta: float, radius: float | None = None) -> float:
        radius = np.pi / self.M if radius is None else radius
        close = np.abs(self.angles - theta) <= radius + _ANGLE_SLACK
        return float(self.probs[close].sum())

    def prob_above(self, threshold: float) -> float:
        return float(self.probs[self.angles > threshold].sum())


def fold_to_levels(per_index: np.ndarray, M: int) -> np.ndarray:
    """Sum a per-``j`` table (last axis of length ``M``) onto estimate levels."""
    levels = grid_level(np.arange(M), M)
    out = np.zeros(per_index.shape[:-1] + (M // 2 + 1,))
    for j, k in enumerate(levels):
        out[..., k] += per_index[..., j]
    return out


def predicted_phase_distribution(theta: float, M: int) -> PhaseDistribution:
    if not 0 <= theta <= np.pi / 2:
        raise ValueError(f"angle {theta} outside [0, pi/2]")
    return PhaseDistribution(M, fold_to_levels(index_distribution(theta, M), M))


@dataclass
class SearchInstance:
    """A preparation unitary ``A`` on the registers of ``layout`` and a good-state predicate.

    ``A`` starts from the all-zero state of ``layout`` and must not be controlled.
    """

    A: Operator
    chi: BasisPredicate
    layout: RegisterLayout

    def __post_init__(self) -> None:
        if self.A.controls:
            raise ValueError("a search instance's preparation must not be controlled")

    def initial_state(self) -> StateVector:
        return apply_operator(zero_state(self.layout), self.A)

    @property
    def p(self) -> float:
        silent = Operator(self.A.targets, self.A.blocks)
        return good_mass(apply_operator(zero_state(self.layout), silent), self.chi)

    @property
    def theta_p(self) -> float:
        return float(np.arcsin(np.sqrt(min(max(self.p, 0.0), 1.0))))


def good_mass(state: StateVector, chi: BasisPredicate) -> float:
    mask = chi.mask(state.layout).reshape(-1)
    return float(np.sum(np.abs(state.amplitudes[mask]) ** 2))


def grover_operator_from(A: Operator, chi: BasisPredicate, layout: RegisterLayout) -> Operator:
    """``Q = -A S_0 A^-1 S_chi`` with ``S_0`` acting on the targets of ``A``.

    ``chi`` may read the control registers of ``A`` as well as its targets, so
    one block of ``Q`` is built per control value.
    """
    names = A.controls + A.targets
    dims = [layout.dim(n) for n in names]
    mask = chi.local_mask(names, dims).reshape(A.control_shape + (A.dim,))
    s_chi = np.where(mask, -1.0, 1.0)
    s0 = np.ones(A.dim)
    s0[0] = -1.0
    Adag = np.conj(np.swapaxes(A.blocks, -1, -2))
    blocks = -(A.blocks @ (s0[:, None] * (Adag * s_chi[..., None, :])))
    return Operator(A.targets, blocks, A.controls, 2 * A.cost, A.counter)


def grover_operator(inst: SearchInstance) -> Operator:
    return grover_operator_from(inst.A, inst.chi, inst.layout)


def amplify(inst: SearchInstance, j: int) -> StateVector:
    """``Q^j A |0>``."""
    if j < 0:
        raise ValueError("iteration count must be non-negative")
    Q = grover_operator(inst)
    state = inst.initial_state()
    for _ in range(j):
        state = apply_operator(state, Q)
    return state


def estimation_core(
    state: StateVector,
    O: Operator,
    chi: BasisPredicate,
    M: int,
    reg: str = "j",
    first_query: bool = True,
) -> StateVector:
    """Query, Fourier on ``reg``, ``Lambda_M(Q)`` controlled by ``reg``, inverse Fourier.

    ``reg`` must already be present in ``state`` with dimension ``M`` and be zero.
    With ``first_query=False`` the caller has applied ``O`` already.
    """
    if state.layout.dim(reg) != M:
        raise ValueError(f"register {reg!r} must have dimension {M}")
    if first_query:
        state = apply_operator(state, O)
    state = apply_fourier(state, reg, M)
    Q = grover_operator_from(O, chi, state.layout)
    state = apply_controlled_power(state, reg, Q, M)
    return apply_fourier(state, reg, M, inverse=True)


def par_est_phase(
    O: Operator,
    chi: BasisPredicate,
    M: int,
    initial: StateVector,
    reg: str = "j",
    est: str = "est",
) -> StateVector:
    """Phase estimation run coherently for every index held in the control registers of ``O``.

    ``initial`` holds the index superposition with the targets of ``O`` at
    zero.  Two registers are appended: ``reg`` (dimension ``M``) and ``est``
    (dimension ``M // 2 + 1``).  ``est`` receives the grid level ``g_M(j)``.
    """
    if M < 2:
        raise ValueError("modulus must be at least 2")
    state = initial.extend((reg, M), (est, M // 2 + 1))
    state = estimation_core(state, O, chi, M, reg)
    return apply_classical_map(state, lambda j: grid_level(j, M), [reg], est)


def estimate_distribution(state: StateVector, given: str | tuple[str, ...] = "x", est: str = "est") -> np.ndarray:
    """``P(est | given)`` from a state produced by :func:`par_est_phase`."""
    given = (given,) if isinstance(given, str) else tuple(given)
    return conditional_distribution(state, given, [est])


def est_phase(inst: SearchInstance, M: int) -> PhaseDistribution:
    """Exact output distribution of the phase estimate of ``inst``."""
    if M < 2:
        raise ValueError("modulus must be at least 2")
    before = inst.A.counter.count if inst.A.counter else 0
    state = par_est_phase(inst.A, inst.chi, M, zero_state(inst.layout))
    calls = (inst.A.counter.count - before) if inst.A.counter else (2 * M + 1) * inst.A.cost
    probs = measurement_distribution(state, ["est"])
    return PhaseDistribution(M, probs, oracle_calls=calls, grover_calls=M)


def success_angles(O: Operator, chi: BasisPredicate, layout: RegisterLayout) -> np.ndarray:
    """Per-control-value angle ``theta`` with ``sin^2(theta)`` the good mass of one query."""
    names = O.controls + O.targets
    dims = [layout.dim(n) for n in names]
    mask = chi.local_mask(names, dims).reshape(O.control_shape + (O.dim,))
    p = np.sum(np.abs(O.blocks[..., :, 0]) ** 2 * mask, axis=-1)
    return np.arcsin(np.sqrt(np.clip(p, 0.0, 1.0)))
