"""Robust OR: a simulated bias-1/6 oracle, boosted by majority vote, driven by Grover search.

The search runs rounds of 1, 2, 4, ... Grover iterations. The total is
capped at ``ceil(9/4 sqrt(N))``, and the last round is cut to whatever
budget is left.  Each round measures a candidate index and checks it with
one boosted evaluation.  The answer is 1 if any check says 1.

The preparation is ``A = (boosted oracle writing its majority into a flag)
F_N`` and the good states are those with flag 1.  The measured statistics
of ``x`` depend only on the per-index probability that the flag reads 1,
not on the garbage the copies leave behind.  So the search is evaluated
exactly on a reduced model: each index carries a single flag qubit rotated
to that probability.  Tests check this reduction against literal state
vectors at small sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .majority import majority_success, smallest_odd_count
from .oracles import BiasedOracle
from .qaa import SearchInstance, amplify, good_mass
from .qstate import Operator, RegisterLayout, equals, fourier_matrix, measurement_distribution
from .robustify import SimulatedOracle, simulate_one_sixth

INNER_ERROR = 1 / 3


@dataclass
class BoostedOracle:
    """Majority of ``k`` coherent copies of a bounded-error oracle."""

    f: tuple[int, ...]
    base_success: np.ndarray
    k: int
    base_cost: int

    @property
    def N(self) -> int:
        return len(self.f)

    @property
    def success(self) -> np.ndarray:
        return np.array([majority_success(self.k, q) for q in self.base_success])

    @property
    def says_one(self) -> np.ndarray:
        """Probability that the majority flag reads 1, per index."""
        s = self.success
        return np.where(np.asarray(self.f) == 1, s, 1 - s)

    @property
    def queries_per_evaluation(self) -> int:
        return self.k * self.base_cost


def _profile(O: SimulatedOracle | BiasedOracle) -> tuple[tuple[int, ...], np.ndarray, int]:
    if isinstance(O, SimulatedOracle):
        return O.spec.f, O.success_probabilities(), O.queries_per_application
    if isinstance(O, BiasedOracle):
        return O.spec.f, O.answer_probabilities(), 1
    raise TypeError(f"unsupported oracle type {type(O).__name__}")


def majority_boost(O: SimulatedOracle | BiasedOracle, k: int) -> BoostedOracle:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"replication count must be odd and positive, got {k}")
    f, success, cost = _profile(O)
    return BoostedOracle(tuple(f), np.asarray(success, dtype=float), k, cost)


def replication_for(N: int, inner_error: float = INNER_ERROR) -> int:
    """Smallest odd ``k`` with majority error at most ``1/(16N)``."""
    return smallest_odd_count(inner_error, 1 / (16 * N))


def grover_schedule(N: int) -> list[int]:
    """Iteration counts 1, 2, 4, ... summing to ``ceil(9/4 sqrt(N))``."""
    budget = math.ceil(9 / 4 * math.sqrt(N))
    rounds, j = [], 1
    while budget > 0:
        rounds.append(min(j, budget))
        budget -= rounds[-1]
        j *= 2
    return rounds


def flag_instance(says_one: np.ndarray, cost: int = 0, counter=None) -> SearchInstance:
    """Reduced preparation ``|x>(sqrt(1-r_x)|0> + sqrt(r_x)|1>)`` after a uniform index superposition."""
    r = np.clip(np.asarray(says_one, dtype=float), 0.0, 1.0)
    N = r.size
    c, s = np.sqrt(1 - r), np.sqrt(r)
    rot = np.zeros((N, 2, 2))
    rot[:, 0, 0], rot[:, 1, 0], rot[:, 0, 1], rot[:, 1, 1] = c, s, -s, c
    # entry ((x, a), (y, b)) = rot_x[a, b] * F[x, y]: Fourier on x, then the per-x flag rotation
    blocks = np.einsum("xy,xab->xayb", fourier_matrix(N), rot).reshape(2 * N, 2 * N)
    A = Operator(("x", "flag"), blocks, cost=cost, counter=counter)
    return SearchInstance(A, equals("flag", 1), RegisterLayout([("x", N), ("flag", 2)]))


def round_distribution(says_one: np.ndarray, j: int) -> np.ndarray:
    """Distribution of the measured index after ``j`` Grover iterations."""
    inst = flag_instance(says_one)
    return measurement_distribution(amplify(inst, j), ["x"])


def predicted_round_distribution(says_one: np.ndarray, j: int) -> np.ndarray:
    r = np.asarray(says_one, dtype=float)
    N = r.size
    p = r.mean()
    theta = math.asin(math.sqrt(min(max(p, 0.0), 1.0)))
    good = math.sin((2 * j + 1) * theta) ** 2
    out = np.zeros(N)
    if p > 0:
        out += good * r / (N * p)
    if p < 1:
        out += (1 - good) * (1 - r) / (N * (1 - p))
    return out


@dataclass
class OrResult:
    """Outcome of a robust OR run.

    ``base_queries`` counts base-oracle calls over every round.  It carries
    a ``log N`` factor from majority boosting on top of ``sqrt(N)/eps``.
    """

    answer: int
    base_queries: int
    success_probability: float
    p_answer_one: float
    k: int
    rounds: list[int]
    verify_probs: list[float] = field(default_factory=list)
    stage_queries: list[int] = field(default_factory=list)


def or_query_ledger(N: int, k: int, per_query: int) -> int:
    """``k * per_query * sum_r (2 j_r + 2)``: each round prepares once, runs ``j_r`` iterations and verifies once."""
    return sum(k * per_query * (2 * j + 2) for j in grover_schedule(N))


def robust_or(
    O: BiasedOracle,
    eps: float,
    N: int | None = None,
    k: int | None = None,
    simulate: bool = True,
    rng: np.random.Generator | None = None,
) -> OrResult:
    """Exact probability of the correct OR over one full run of the schedule.

    With ``simulate=False`` the biased oracle is boosted directly, which is
    only meaningful for an oracle that is already accurate.  The answer is
    sampled from ``rng`` when given, else it is the more likely outcome.
    """
    if N is not None and N != O.spec.N:
        raise ValueError(f"domain size {N} does not match the oracle's {O.spec.N}")
    N = O.spec.N
    inner = simulate_one_sixth(O, eps) if simulate else O
    k = replication_for(N) if k is None else k
    boosted = majority_boost(inner, k)
    r = boosted.says_one
    rounds = grover_schedule(N)
    verify, stages = [], []
    for j in rounds:
        dist = round_distribution(r, j)
        verify.append(float(dist @ r))
        stages.append(boosted.queries_per_evaluation * (2 * j + 2))
    p_one = 1.0 - float(np.prod([1 - v for v in verify]))
    truth = O.spec.or_value
    success = p_one if truth == 1 else 1 - p_one
    if rng is not None:
        answer = int(rng.random() < p_one)
    else:
        answer = int(p_one >= 0.5)
    return OrResult(answer, sum(stages), success, p_one, k, rounds, verify, stages)


def mean_good_mass(says_one: np.ndarray, j: int) -> float:
    inst = flag_instance(says_one)
    return good_mass(amplify(inst, j), inst.chi)
