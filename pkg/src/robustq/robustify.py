"""Simulate a constant-bias oracle from an oracle of small known bias.

The pipeline runs coherently over the index register ``x``:

1. Estimate the angle ``theta_x`` (``sin theta_x = 2 eps_x``) with parallel
   phase estimation of the signed oracle, modulus ``M1``.
2. From the estimate, derive a de-randomised amplification schedule
   ``(m*, theta*, p*, p~)``.  Derived values are read as functions of the
   estimation index ``j`` and are never written to their own registers.
3. Put a Hadamard on the output qubit.  Controlled on it, apply
   ``signed oracle (x) R`` and then ``m = min(m*, M2)`` amplification
   rounds.  This turns the bias into a sign flip ``(-1)^f(x)``.
4. A second Hadamard turns the sign flip into a bit on the output qubit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracles import BiasedOracle, SignedOracle, build_signed_oracle
from .qaa import estimation_core, grover_operator_from
from .qstate import (
    Operator,
    RegisterLayout,
    StateVector,
    all_zero,
    apply_controlled_power,
    apply_fourier,
    apply_hadamard,
    apply_operator,
    basis_state,
    conditional_distribution,
    controlled_power,
    kron_blocks,
)

TARGET_SUCCESS = 2 / 3


def lemma_one_parameters(eps: float) -> tuple[float, int, int]:
    """``(theta, M1, M2)`` for a known bias bound ``eps``."""
    if not 0 < eps <= 0.5:
        raise ValueError(f"bias bound {eps} outside (0, 1/2]")
    theta = math.asin(2 * eps)
    c = 3 * math.pi * (math.pi + 1)
    M1 = math.ceil(c / theta)
    M2 = math.ceil(0.5 * (c / (2 * (3 * math.pi + 2) * theta) + 1))
    return theta, M1, M2


def queries_per_simulation(eps: float) -> int:
    """Base-oracle calls of one simulated query.

    The estimation stage costs ``2 (2 M1 + 1)`` and the amplification stage
    ``2 + 4 M2``.
    """
    _, M1, M2 = lemma_one_parameters(eps)
    return 4 * (M1 + M2 + 1)


def _rounds_for_level(k: int, M: int) -> int:
    """``ceil((pi / (2 theta~) - 1) / 2)`` at ``theta~ = pi k / M``, in exact integers."""
    return max(0, -((2 * k - M) // (4 * k)))


@dataclass(frozen=True)
class AmplifySchedule:
    theta_tilde: float
    m_star: int | None
    theta_star: float
    p_star: float
    p_tilde: float
    m_clamped: int


def _schedule(theta_tilde: float, m_star: int | None, M2: int) -> AmplifySchedule:
    if m_star is None:
        return AmplifySchedule(0.0, None, 0.0, 0.0, 0.0, M2)
    theta_star = math.pi / (4 * m_star + 2)
    return AmplifySchedule(
        theta_tilde,
        m_star,
        theta_star,
        math.sin(theta_star) ** 2,
        math.sin(theta_tilde) ** 2,
        min(m_star, M2),
    )


def schedule_from_estimate(theta_tilde: float, M2: int) -> AmplifySchedule:
    if not 0 <= theta_tilde <= math.pi / 2 + 1e-12:
        raise ValueError(f"estimate {theta_tilde} outside [0, pi/2]")
    if theta_tilde == 0:
        return _schedule(0.0, None, M2)
    # round off float noise so that exact grid angles such as pi/6 land on their integer
    x = 0.5 * (math.pi / (2 * theta_tilde) - 1)
    m_star = max(0, math.ceil(x - 1e-9))
    return _schedule(theta_tilde, m_star, M2)


def schedule_from_level(k: int, M: int, M2: int) -> AmplifySchedule:
    """Schedule for the grid estimate ``pi k / M``."""
    if k == 0:
        return _schedule(0.0, None, M2)
    return _schedule(math.pi * k / M, _rounds_for_level(k, M), M2)


def rotation_R(p_star: float, p_tilde: float) -> np.ndarray:
    """Real rotation with ``|0> -> sqrt(r)|0> + sqrt(1 - r)|1>``, ``r = min(1, p*/p~)``."""
    if p_tilde <= 0:
        return np.eye(2)
    c = math.sqrt(min(1.0, p_star / p_tilde))
    s = math.sqrt(max(0.0, 1.0 - c * c))
    return np.array([[c, -s], [s, c]])


@dataclass
class SimulatedOracle:
    """Coherent simulation of a bias-1/6 oracle from a biased oracle.

    ``clamp`` and ``rotate`` exist to switch off the cap ``M2`` on the
    number of rounds and the rotation ``R``.  Without the cap the
    zero-estimate branch uses the round count of the smallest nonzero
    estimate.
    """

    base: BiasedOracle
    eps: float
    clamp: bool = True
    rotate: bool = True
    signed: SignedOracle = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.theta, self.M1, self.M2 = lemma_one_parameters(self.eps)
        self.signed = build_signed_oracle(self.base)
        M1 = self.M1
        self.levels = np.minimum(np.arange(M1), M1 - np.arange(M1))
        self.schedules = [schedule_from_level(int(k), M1, self.M2) for k in self.levels]
        if self.clamp:
            self.rounds = np.array([s.m_clamped for s in self.schedules])
        else:
            finest = _rounds_for_level(1, M1)
            self.rounds = np.array([finest if s.m_star is None else s.m_star for s in self.schedules])
        if self.rotate:
            self.R = np.stack([rotation_R(s.p_star, s.p_tilde) for s in self.schedules])
        else:
            self.R = np.broadcast_to(np.eye(2), (M1, 2, 2))
        self.max_rounds = self.M2 if self.clamp else int(self.rounds.max())

    @property
    def spec(self):
        return self.base.spec

    @property
    def workspace_dim(self) -> int:
        return self.signed.dim

    @property
    def queries_per_application(self) -> int:
        return 2 * (2 * self.M1 + 1) + 2 + 4 * self.max_rounds

    def registers(self, prefix: str = "") -> list[tuple[str, int]]:
        D = self.workspace_dim
        return [
            (prefix + "est_ws", D),
            (prefix + "j", self.M1),
            (prefix + "amp_ws", D),
            (prefix + "rot", 2),
            (prefix + "out", 2),
        ]

    def layout(self) -> RegisterLayout:
        return RegisterLayout([("x", self.spec.N)] + self.registers())

    def _composite(self, x: str, prefix: str) -> Operator:
        """``signed oracle (x) R_j`` on ``(amp_ws, rot)`` with controls ``(x, j)``."""
        core = self.signed.blocks[:, None]
        blocks = kron_blocks(core, self.R[None])
        return Operator(
            (prefix + "amp_ws", prefix + "rot"),
            blocks,
            (x, prefix + "j"),
            cost=2,
            counter=self.base.counter,
        )

    def _amplifier(self, x: str, prefix: str) -> tuple[Operator, Operator]:
        O = self._composite(x, prefix)
        layout = RegisterLayout(
            [(x, self.spec.N), (prefix + "j", self.M1), (prefix + "amp_ws", self.workspace_dim), (prefix + "rot", 2)]
        )
        Q = grover_operator_from(O, all_zero(prefix + "amp_ws", prefix + "rot"), layout)
        rounds = self.rounds
        power = controlled_power(prefix + "j", self.M1, Q, self.max_rounds, exponent=lambda j: rounds[j])
        return O.when(prefix + "out", 2), power.when(prefix + "out", 2)

    def _estimator(self, x: str, prefix: str) -> Operator:
        return self.signed.operator(x, (prefix + "est_ws",))

    def apply(self, state: StateVector, x: str = "x", prefix: str = "", stop_before_last: bool = False) -> StateVector:
        """Run the pipeline on ``state``, which must hold the registers of :meth:`registers` at zero."""
        state = estimation_core(state, self._estimator(x, prefix), all_zero(prefix + "est_ws"), self.M1, prefix + "j")
        state = apply_hadamard(state, prefix + "out")
        O, power = self._amplifier(x, prefix)
        state = apply_operator(state, O)
        state = apply_operator(state, power)
        if stop_before_last:
            return state
        return apply_hadamard(state, prefix + "out")

    def inverse(self, state: StateVector, x: str = "x", prefix: str = "") -> StateVector:
        j = prefix + "j"
        state = apply_hadamard(state, prefix + "out", inverse=True)
        O, power = self._amplifier(x, prefix)
        state = apply_operator(state, power, inverse=True)
        state = apply_operator(state, O, inverse=True)
        state = apply_hadamard(state, prefix + "out", inverse=True)
        S = self._estimator(x, prefix)
        layout = state.layout
        Q = grover_operator_from(S, all_zero(prefix + "est_ws"), layout)
        state = apply_fourier(state, j, self.M1)
        state = apply_controlled_power(state, j, Q, self.M1, inverse=True)
        state = apply_fourier(state, j, self.M1, inverse=True)
        return apply_operator(state, S, inverse=True)

    def run(self, x: int | None = None) -> StateVector:
        """Final state from ``|x>|0...0>``, or from the uniform index superposition if ``x`` is None."""
        layout = self.layout()
        if x is None:
            state = apply_fourier(basis_state(layout, {}), "x", self.spec.N)
        else:
            state = basis_state(layout, {"x": x})
        return self.apply(state)

    def output_distribution(self) -> np.ndarray:
        """``P(out = b | x)`` with shape ``(N, 2)``."""
        return conditional_distribution(self.run(), ["x"], ["out"])

    def success_probabilities(self) -> np.ndarray:
        table = self.output_distribution()
        f = np.asarray(self.spec.f)
        return table[np.arange(self.spec.N), f]

    def estimate_weights(self) -> np.ndarray:
        """``|delta_{x,j}|^2``: probability of each estimation index for each ``x``."""
        layout = RegisterLayout([("x", self.spec.N), ("est_ws", self.workspace_dim), ("j", self.M1)])
        state = apply_fourier(basis_state(layout, {}), "x", self.spec.N)
        state = estimation_core(state, self._estimator("x", ""), all_zero("est_ws"), self.M1, "j")
        return conditional_distribution(state, ["x"], ["j"])

    def branch_gammas(self) -> np.ndarray:
        """``gamma_{x,j}`` read off the state just before the final Hadamard.

        For each branch, project both halves of the output qubit onto
        ``amp_ws = rot = 0`` and take their overlap relative to the
        unamplified half.  Branches with no amplitude give NaN.
        """
        state = self.apply(
            apply_fourier(basis_state(self.layout(), {}), "x", self.spec.N), stop_before_last=True
        )
        t = state.tensor()[:, :, :, 0, 0, :]  # (x, est_ws, j, out)
        idle, active = t[..., 0], t[..., 1]
        num = np.einsum("xwj,xwj->xj", idle.conj(), active)
        den = np.einsum("xwj,xwj->xj", idle.conj(), idle).real
        sign = (-1.0) ** np.asarray(self.spec.f)[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            g = sign * num / den
        g = np.where(den > 1e-14, g, np.nan)
        return g.real

    def direct_gammas(self) -> np.ndarray:
        """``gamma_{x,j}`` from the per-branch matrices, without running the pipeline."""
        O = self._composite("x", "")
        layout = RegisterLayout([("x", self.spec.N), ("j", self.M1), ("amp_ws", self.workspace_dim), ("rot", 2)])
        Q = grover_operator_from(O, all_zero("amp_ws", "rot"), layout)
        out = np.empty((self.spec.N, self.M1))
        sign = (-1.0) ** np.asarray(self.spec.f)
        for x in range(self.spec.N):
            for j in range(self.M1):
                v = O.blocks[x, j][:, 0]
                for _ in range(self.rounds[j]):
                    v = Q.blocks[x, j] @ v
                out[x, j] = sign[x] * v[0].real
        return out

    def good_window(self) -> np.ndarray:
        """Boolean ``(N, M1)`` mask of branches whose estimate is within ``theta/(3(pi+1))`` of ``theta_x``."""
        theta_x = np.arcsin(2 * np.asarray(self.spec.biases))
        est = np.pi * self.levels / self.M1
        return np.abs(theta_x[:, None] - est[None, :]) <= self.theta / (3 * (np.pi + 1)) + 1e-12


def simulate_one_sixth(O: BiasedOracle, eps: float, clamp: bool = True, rotate: bool = True) -> SimulatedOracle:
    return SimulatedOracle(O, eps, clamp=clamp, rotate=rotate)


def success_probability(S: SimulatedOracle, x: int) -> float:
    if not 0 <= x < S.spec.N:
        raise ValueError(f"index {x} outside [0, {S.spec.N})")
    table = conditional_distribution(S.run(x), ["x"], ["out"])
    return float(table[x, S.spec.f[x]])
