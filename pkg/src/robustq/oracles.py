"""Biased oracles, their unitary realisations, and the two-query signed oracle.

A biased oracle answers ``f(x)`` with probability ``1/2 + eps_x``.  Its
realisation acts on ``(work, ans)`` controlled by the index register ``x``.
The signed oracle sandwiches a phase flip on the answer qubit between the
oracle and its inverse.  Its amplitude on the all-zero workspace is then
``(-1)^f(x) * 2 eps_x``, which turns the bias into something amplitude
estimation can measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qstate import Operator, QueryCounter, RegisterLayout, unitary_with_first_column

WORK_MODELS = ("clean", "garbage")


@dataclass(frozen=True)
class OracleSpec:
    N: int
    m: int
    f: tuple[int, ...]
    biases: tuple[float, ...]
    work_model: str = "clean"
    work_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "f", tuple(int(v) for v in self.f))
        object.__setattr__(self, "biases", tuple(float(e) for e in self.biases))
        if self.N < 1 or self.m < 1:
            raise ValueError(f"need N >= 1 and m >= 1, got N={self.N}, m={self.m}")
        if len(self.f) != self.N or len(self.biases) != self.N:
            raise ValueError("truth table and bias list must both have length N")
        if any(v not in (0, 1) for v in self.f):
            raise ValueError("truth table entries must be 0 or 1")
        for x, e in enumerate(self.biases):
            if not 0.0 < e <= 0.5:
                raise ValueError(f"bias of index {x} is {e}, outside (0, 1/2]")
        if self.work_model not in WORK_MODELS:
            raise ValueError(f"work_model must be one of {WORK_MODELS}, got {self.work_model!r}")

    @property
    def eps_min(self) -> float:
        return min(self.biases)

    @property
    def work_dim(self) -> int:
        return 2 ** (self.m - 1)

    @property
    def or_value(self) -> int:
        return int(any(self.f))


def random_spec(
    rng: np.random.Generator,
    N: int,
    m: int,
    lo: float = 0.05,
    hi: float = 0.5,
    work_model: str = "clean",
) -> OracleSpec:
    """Truth table, biases in ``[lo, hi]`` and work seed all drawn from ``rng``."""
    f = rng.integers(0, 2, size=N)
    biases = rng.uniform(lo, hi, size=N)
    seed = int(rng.integers(0, 2**31))
    return OracleSpec(N, m, tuple(f), tuple(biases), work_model, seed)


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


@dataclass
class BiasedOracle:
    """Unitary realisation of an oracle spec, one ``2^m x 2^m`` block per index.

    Inside a block, the basis index is ``2 * work + ans``.
    """

    spec: OracleSpec
    blocks: np.ndarray
    counter: QueryCounter = field(default_factory=QueryCounter, repr=False)

    @property
    def dim(self) -> int:
        return self.blocks.shape[-1]

    def layout(self) -> RegisterLayout:
        return RegisterLayout([("x", self.spec.N), ("work", self.spec.work_dim), ("ans", 2)])

    def operator(self, x: str = "x", targets: tuple[str, ...] = ("work", "ans")) -> Operator:
        return Operator(targets, self.blocks, (x,), cost=1, counter=self.counter)

    def column(self, x: int) -> np.ndarray:
        return self.blocks[x][:, 0]

    def answer_probabilities(self) -> np.ndarray:
        """``P(ans = f(x))`` after one query at each ``x``."""
        cols = np.abs(self.blocks[:, :, 0]) ** 2
        p_one = cols[:, 1::2].sum(axis=1)
        f = np.asarray(self.spec.f)
        return np.where(f == 1, p_one, 1 - p_one)


def build_biased_oracle(spec: OracleSpec) -> BiasedOracle:
    d = spec.work_dim
    rng = np.random.default_rng(spec.work_seed)
    blocks = np.empty((spec.N, 2 * d, 2 * d), dtype=np.complex128)
    for x in range(spec.N):
        if spec.work_model == "garbage":
            w, w_bar = _random_unit(rng, d), _random_unit(rng, d)
        else:
            w = w_bar = np.eye(d)[0]
        alpha = np.sqrt(0.5 + spec.biases[x])
        beta = np.sqrt(0.5 - spec.biases[x])
        fx = spec.f[x]
        col = np.zeros((d, 2), dtype=np.complex128)
        col[:, fx] = alpha * w
        col[:, 1 - fx] = beta * w_bar
        col = col.reshape(-1)
        blocks[x] = unitary_with_first_column(col / np.linalg.norm(col))
    return BiasedOracle(spec, blocks)


@dataclass
class SignedOracle:
    """``O^dagger Z_ans O`` tensored with one idle pad qubit.

    Inside a block, the basis index is ``2 * (2 * work + ans) + pad``.
    """

    base: BiasedOracle
    blocks: np.ndarray

    @property
    def counter(self) -> QueryCounter:
        return self.base.counter

    @property
    def dim(self) -> int:
        return self.blocks.shape[-1]

    @property
    def spec(self) -> OracleSpec:
        return self.base.spec

    def layout(self) -> RegisterLayout:
        return RegisterLayout([("x", self.spec.N), ("ws", self.dim)])

    def operator(self, x: str = "x", targets: tuple[str, ...] = ("ws",)) -> Operator:
        return Operator(targets, self.blocks, (x,), cost=2, counter=self.base.counter)

    def diagonal(self) -> np.ndarray:
        """``<x, 0| O_signed |x, 0>`` for every ``x``."""
        return self.blocks[:, 0, 0].copy()

    def residual_norms(self) -> np.ndarray:
        return np.linalg.norm(self.blocks[:, 1:, 0], axis=1)


def build_signed_oracle(O: BiasedOracle) -> SignedOracle:
    z = np.tile([1.0, -1.0], O.dim // 2)
    core = np.conj(np.swapaxes(O.blocks, -1, -2)) @ (z[:, None] * O.blocks)
    blocks = np.einsum("xij,kl->xikjl", core, np.eye(2)).reshape(O.spec.N, 2 * O.dim, 2 * O.dim)
    return SignedOracle(O, blocks)


def reset_and_read_queries(O: BiasedOracle | SignedOracle) -> int:
    return O.counter.read_and_reset()
