"""Exact binomial tails and coherent majority voting over copies of a query."""

from __future__ import annotations

from math import comb

import numpy as np

from .oracles import BiasedOracle
from .qstate import (
    RegisterLayout,
    StateVector,
    apply_classical_map,
    apply_operator,
    apply_sign,
    equals,
)


def tail_at_least(k: int, p: float, t: int) -> float:
    """``P[Bin(k, p) >= t]``."""
    t = max(t, 0)
    return float(sum(comb(k, i) * p**i * (1 - p) ** (k - i) for i in range(t, k + 1)))


def majority_error(k: int, p_err: float) -> float:
    """Probability that a strict majority of ``k`` (odd) independent trials err."""
    return tail_at_least(k, p_err, (k + 1) // 2)


def majority_success(k: int, q: float) -> float:
    """Probability that a strict majority of ``k`` (odd) trials succeed, each with probability ``q``."""
    return tail_at_least(k, q, (k + 1) // 2)


def smallest_odd_count(p_err: float, target: float, limit: int = 100001) -> int:
    """Smallest odd ``k`` whose majority error is at most ``target``."""
    if not 0 <= p_err < 0.5:
        raise ValueError("per-trial error must lie in [0, 1/2)")
    for k in range(1, limit + 1, 2):
        if majority_error(k, p_err) <= target:
            return k
    raise ValueError(f"no odd count up to {limit} reaches {target}")


def _check_odd(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ValueError(f"replication count must be odd and positive, got {k}")


def copies_layout(O: BiasedOracle, k: int) -> RegisterLayout:
    """Index register, ``k`` oracle workspaces and a result qubit."""
    regs = [("x", O.spec.N)]
    for c in range(k):
        regs += [(f"work{c}", O.spec.work_dim), (f"ans{c}", 2)]
    return RegisterLayout(regs + [("flag", 2)])


def _query_copies(state: StateVector, O: BiasedOracle, k: int, inverse: bool = False) -> StateVector:
    for c in range(k):
        state = apply_operator(state, O.operator("x", (f"work{c}", f"ans{c}")), inverse=inverse)
    return state


def _majority(*bits: int) -> int:
    return int(2 * sum(bits) > len(bits))


def coherent_majority(state: StateVector, O: BiasedOracle, k: int) -> StateVector:
    """Query ``k`` copies and add their majority answer into ``flag``; copies are left in place."""
    _check_odd(k)
    state = _query_copies(state, O, k)
    return apply_classical_map(state, _majority, [f"ans{c}" for c in range(k)], "flag", mode="xor")


def majority_phase_kickback(state: StateVector, O: BiasedOracle, k: int) -> StateVector:
    """Compute the majority, flip the sign where it is 1, then uncompute everything."""
    _check_odd(k)
    srcs = [f"ans{c}" for c in range(k)]
    state = coherent_majority(state, O, k)
    state = apply_sign(state, equals("flag", 1))
    state = apply_classical_map(state, _majority, srcs, "flag", mode="xor")
    return _query_copies(state, O, k, inverse=True)


def zero_ancilla_amplitudes(state: StateVector) -> np.ndarray:
    """Amplitude on each ``|x>`` with every other register at zero."""
    t = state.tensor()
    return t.reshape(t.shape[0], -1)[:, 0]
