"""Estimating the smallest bias when it is not known.

The zero test runs phase estimation of the signed oracle and flags the
outcome ``j = 0``.  Its flag probability ``sin^2(M theta)/(M^2 sin^2 theta)``
stays near 1 while ``M`` is much smaller than ``1/theta`` and falls once
``M`` passes ``2 pi/theta``.  A discriminator decides "some index still
flags" versus "no index flags" using majority replication, a uniform
superposition, and amplitude estimation.  A doubling loop over
``M = 2^ell`` stops at the first level where the discriminator votes 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .majority import majority_success, smallest_odd_count
from .oracles import BiasedOracle, SignedOracle, build_signed_oracle
from .qaa import PhaseDistribution, est_phase, estimation_core
from .qstate import (
    BasisPredicate,
    Operator,
    QueryCounter,
    StateVector,
    all_zero,
    apply_classical_map,
    apply_fourier,
    basis_state,
    conditional_distribution,
)
from .search import flag_instance

GOOD_ESTIMATE_BOUND = 8 / math.pi**2
HIGH_FLAG = 9 / 10
LOW_FLAG = 1 / 10


def zero_flag_probability(theta: float | np.ndarray, M: int) -> np.ndarray:
    """``sin^2(M theta) / (M^2 sin^2 theta)`` for ``0 < theta <= pi/2``."""
    theta = np.asarray(theta, dtype=float)
    return np.sin(M * theta) ** 2 / (M**2 * np.sin(theta) ** 2)


@dataclass
class ZeroTestState:
    state: StateVector
    flag_probs: np.ndarray
    M: int
    queries: int


def par_est_zero(
    O: SignedOracle,
    M: int,
    chi: BasisPredicate | None = None,
    initial: StateVector | None = None,
) -> ZeroTestState:
    """Estimation core with modulus ``M``, then set ``flag`` to 1 exactly when the index register reads 0.

    ``initial`` defaults to the uniform superposition over ``x`` with the
    workspace at zero.  Registers ``j`` and ``flag`` are appended.
    """
    if M < 1:
        raise ValueError("modulus must be at least 1")
    chi = all_zero("ws") if chi is None else chi
    if initial is None:
        initial = apply_fourier(basis_state(O.layout(), {}), "x", O.spec.N)
    state = initial.extend(("j", M), ("flag", 2))
    before = O.counter.count
    state = estimation_core(state, O.operator(), chi, M, "j")
    state = apply_classical_map(state, lambda j: int(j == 0), ["j"], "flag", mode="xor")
    queries = O.counter.count - before
    probs = conditional_distribution(state, ["x"], ["flag"])[:, 1]
    return ZeroTestState(state, probs, M, queries)


@dataclass
class FlagOracle:
    """Oracle writing a flag that reads 1 at index ``x`` with probability ``flag_probs[x]``.

    ``cost`` is the number of base-oracle calls per application.
    """

    flag_probs: np.ndarray
    cost: int = 1
    replication: int = 1
    counter: QueryCounter = field(default_factory=QueryCounter, repr=False)

    def __post_init__(self) -> None:
        self.flag_probs = np.asarray(self.flag_probs, dtype=float)
        if np.any(self.flag_probs < -1e-12) or np.any(self.flag_probs > 1 + 1e-12):
            raise ValueError("flag probabilities must lie in [0, 1]")
        self.flag_probs = np.clip(self.flag_probs, 0.0, 1.0)

    @property
    def N(self) -> int:
        return self.flag_probs.size

    def operator(self, x: str = "x", flag: str = "flag") -> Operator:
        c, s = np.sqrt(1 - self.flag_probs), np.sqrt(self.flag_probs)
        blocks = np.zeros((self.N, 2, 2))
        blocks[:, 0, 0], blocks[:, 1, 0], blocks[:, 0, 1], blocks[:, 1, 1] = c, s, -s, c
        return Operator((flag,), blocks, (x,), cost=self.cost, counter=self.counter)

    @classmethod
    def from_zero_test(cls, zt: ZeroTestState) -> FlagOracle:
        return cls(zt.flag_probs, cost=zt.queries)


def replication_count(N: int) -> int:
    """Smallest odd ``r`` with majority error at most ``1/(16N)`` when each vote errs with probability 1/10."""
    if N < 1:
        raise ValueError("domain size must be positive")
    return smallest_odd_count(LOW_FLAG, 1 / (16 * N))


def majority_replicate(O: FlagOracle, N: int | None = None) -> FlagOracle:
    N = O.N if N is None else N
    r = replication_count(N)
    probs = np.array([majority_success(r, p) for p in O.flag_probs])
    return FlagOracle(probs, cost=r * O.cost, replication=r)


def discriminator_modulus(N: int) -> int:
    return math.ceil(11 * math.sqrt(N))


def discriminator_threshold(N: int) -> float:
    return 0.68 / math.sqrt(N)


@dataclass
class ChkOutcome:
    """Exact output law of one discriminator run."""

    dist: PhaseDistribution
    threshold: float
    replication: int
    queries: int

    @property
    def p_one(self) -> float:
        return self.dist.prob_above(self.threshold)

    def sample(self, rng: np.random.Generator) -> tuple[int, float]:
        """Draw the estimate by inverse CDF and threshold it."""
        cdf = np.cumsum(self.dist.probs)
        level = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        level = min(level, cdf.size - 1)
        angle = float(self.dist.angles[level])
        return int(angle > self.threshold), angle


def chk_amp_dn(O: FlagOracle) -> ChkOutcome:
    """Decide whether some index flags with probability at least 9/10, or all with at most 1/10."""
    N = O.N
    if N < 2:
        raise ValueError("the discriminator needs N >= 2")
    boosted = majority_replicate(O, N)
    counter = QueryCounter()
    inst = flag_instance(boosted.flag_probs, cost=boosted.cost, counter=counter)
    dist = est_phase(inst, discriminator_modulus(N))
    return ChkOutcome(dist, discriminator_threshold(N), boosted.replication, counter.count)


def vote_count_at_level(ell: int) -> int:
    """Smallest odd ``v`` whose majority is right with probability at least ``1 - 1/(5 ell^2)``."""
    if ell < 1:
        raise ValueError("level must be at least 1")
    target = 1 - 1 / (5 * ell**2)
    v = 1
    while majority_success(v, GOOD_ESTIMATE_BOUND) < target:
        v += 2
    return v


def eps_tilde_at(ell: int) -> float:
    return 0.5 * math.sin(1 / (5 * 2**ell))


def continuation_level(theta_min: float) -> int:
    """Largest level at which some index is guaranteed to flag with probability above 9/10."""
    return math.floor(math.log2(1 / (5 * theta_min)))


def stopping_level(theta_min: float) -> int:
    """First level from which every index flags with probability at most 1/16."""
    return math.ceil(math.log2(2 * math.pi / theta_min))


def eps_bracket(eps_min: float) -> tuple[float, float]:
    return eps_min / (5 * math.pi**2), eps_min


@dataclass
class LevelRecord:
    ell: int
    votes: int
    ones: int
    p_one: float
    queries: int
    estimates: list[float] = field(default_factory=list)

    @property
    def continued(self) -> bool:
        return 2 * self.ones > self.votes


@dataclass
class EpsEstimate:
    ell: int
    eps_tilde: float
    total_queries: int
    trace: list[LevelRecord]
    truncated: bool = False


@dataclass
class LevelProfile:
    """Everything about one level that does not depend on sampling."""

    ell: int
    zero_test: ZeroTestState
    chk: ChkOutcome
    votes: int

    @property
    def queries_per_vote(self) -> int:
        return self.chk.queries

    @property
    def queries(self) -> int:
        return self.votes * self.chk.queries


class EpsEstimator:
    """Doubling-loop estimator with per-level exact distributions cached across trials."""

    def __init__(self, O: BiasedOracle) -> None:
        if O.spec.N < 2:
            raise ValueError("the estimator needs N >= 2")
        self.oracle = O
        self.signed = build_signed_oracle(O)
        self._levels: dict[int, LevelProfile] = {}

    def level(self, ell: int) -> LevelProfile:
        if ell not in self._levels:
            zt = par_est_zero(self.signed, 2**ell)
            self.signed.counter.read_and_reset()
            chk = chk_amp_dn(FlagOracle.from_zero_test(zt))
            self._levels[ell] = LevelProfile(ell, zt, chk, vote_count_at_level(ell))
        return self._levels[ell]

    def ledger(self, ell: int) -> int:
        """Base-oracle calls of a run that stops at ``ell``."""
        return sum(self.level(l).queries for l in range(1, ell + 1))

    def run(self, ell_max: int, rng: np.random.Generator) -> EpsEstimate:
        trace: list[LevelRecord] = []
        total = 0
        for ell in range(1, ell_max + 1):
            prof = self.level(ell)
            draws = [prof.chk.sample(rng) for _ in range(prof.votes)]
            ones = sum(b for b, _ in draws)
            rec = LevelRecord(ell, prof.votes, ones, prof.chk.p_one, prof.queries, [a for _, a in draws])
            trace.append(rec)
            total += prof.queries
            if not rec.continued:
                return EpsEstimate(ell, eps_tilde_at(ell), total, trace)
        return EpsEstimate(ell_max, eps_tilde_at(ell_max), total, trace, truncated=True)

    def stop_distribution(self, ell_max: int) -> np.ndarray:
        """Exact probability of stopping at each level ``1..ell_max``; the last entry includes truncation."""
        out = np.zeros(ell_max)
        alive = 1.0
        for ell in range(1, ell_max + 1):
            prof = self.level(ell)
            cont = majority_success(prof.votes, prof.chk.p_one)
            out[ell - 1] = alive * (1 - cont)
            alive *= cont
        out[-1] += alive
        return out


def est_eps_min(
    O: BiasedOracle,
    ell_max: int,
    rng: np.random.Generator | None = None,
    estimator: EpsEstimator | None = None,
) -> EpsEstimate:
    if ell_max < 1:
        raise ValueError("ell_max must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    estimator = EpsEstimator(O) if estimator is None else estimator
    return estimator.run(ell_max, rng)
