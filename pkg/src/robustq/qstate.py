"""Dense mixed-radix state vectors and the unitary primitives the algorithms compose.

A state lives on an ordered list of named registers of arbitrary dimension.
Amplitudes are stored as one flat complex array in row-major order, so the
first register is the most significant digit of the basis index.

Operators controlled by other registers are stored block-wise: an
:class:`Operator` holds one ``D x D`` block per value of its control
registers and acts on the product space of its target registers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

MAX_AMPLITUDES = 1 << 24
UNITARITY_TOL = 1e-10


class QueryCounter:
    """Mutable tally of base-oracle applications, forward and inverse alike."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)

    def read_and_reset(self) -> int:
        n, self.count = self.count, 0
        return n

    def __repr__(self) -> str:
        return f"QueryCounter({self.count})"


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered ``(name, dimension)`` pairs describing a composite register."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        regs = tuple((str(name), int(dim)) for name, dim in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [name for name, _ in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"register names must be unique, got {names}")
        for name, dim in regs:
            if dim < 1:
                raise ValueError(f"register {name!r} has dimension {dim} < 1")
        if self.size > MAX_AMPLITUDES:
            raise ValueError(f"layout needs {self.size} amplitudes, cap is {MAX_AMPLITUDES}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.registers)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.registers)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.registers else 1

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown register {name!r}; layout has {self.names}") from None

    def dim(self, name: str) -> int:
        return self.shape[self.axis(name)]

    def extend(self, *registers: tuple[str, int]) -> RegisterLayout:
        return RegisterLayout(self.registers + tuple(registers))

    def to_index(self, coords: Sequence[int] | Mapping[str, int]) -> int:
        coords = self._coords(coords)
        return int(np.ravel_multi_index(coords, self.shape))

    def to_coords(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ValueError(f"basis index {index} out of range for size {self.size}")
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    def _coords(self, coords: Sequence[int] | Mapping[str, int]) -> tuple[int, ...]:
        if isinstance(coords, Mapping):
            unknown = set(coords) - set(self.names)
            if unknown:
                raise ValueError(f"unknown registers {sorted(unknown)}")
            coords = [coords.get(name, 0) for name in self.names]
        coords = tuple(int(c) for c in coords)
        if len(coords) != len(self.registers):
            raise ValueError(f"expected {len(self.registers)} coordinates, got {len(coords)}")
        for (name, dim), c in zip(self.registers, coords):
            if not 0 <= c < dim:
                raise ValueError(f"coordinate {c} out of range for register {name!r} of dimension {dim}")
        return coords


@dataclass
class StateVector:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.size != self.layout.size:
            raise ValueError(
                f"{self.amplitudes.size} amplitudes do not match layout size {self.layout.size}"
            )

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per register (a view)."""
        return self.amplitudes.reshape(self.layout.shape)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> StateVector:
        return StateVector(self.layout, self.amplitudes.copy())

    def extend(self, *registers: tuple[str, int]) -> StateVector:
        """Append fresh registers initialised to ``|0>``."""
        layout = self.layout.extend(*registers)
        fresh = np.zeros(int(np.prod([d for _, d in registers], dtype=np.int64)), dtype=np.complex128)
        fresh[0] = 1.0
        return StateVector(layout, np.kron(self.amplitudes, fresh))


@dataclass(frozen=True)
class BasisPredicate:
    """A 0/1 function of the basis coordinates of the registers in ``scope``.

    ``fn`` is called with one broadcastable integer array per scope register
    and must return something broadcastable to a boolean array.
    """

    scope: tuple[str, ...]
    fn: Callable[..., Any]

    def __post_init__(self) -> None:
        object.__setattr__(self, "scope", tuple(self.scope))

    def mask(self, layout: RegisterLayout) -> np.ndarray:
        grids = []
        for name in self.scope:
            ax = layout.axis(name)
            shape = [1] * len(layout.shape)
            shape[ax] = layout.shape[ax]
            grids.append(np.arange(layout.shape[ax]).reshape(shape))
        out = np.asarray(self.fn(*grids), dtype=bool)
        return np.broadcast_to(out, layout.shape)

    def local_mask(self, names: Sequence[str], dims: Sequence[int]) -> np.ndarray:
        """Flat mask over the product space of ``names`` (which must cover the scope)."""
        missing = set(self.scope) - set(names)
        if missing:
            raise ValueError(f"predicate reads {sorted(missing)} outside {tuple(names)}")
        return self.mask(RegisterLayout(tuple(zip(names, dims)))).reshape(-1)


def all_zero(*names: str) -> BasisPredicate:
    """Predicate that is 1 exactly on the all-zero coordinates of ``names``."""

    def fn(*coords):
        out = np.asarray(True)
        for c in coords:
            out = out & (c == 0)
        return out

    return BasisPredicate(tuple(names), fn)


def equals(name: str, value: int) -> BasisPredicate:
    return BasisPredicate((name,), lambda c: c == value)


@dataclass
class Operator:
    """Block operator on ``targets``, block-diagonal over ``controls``.

    ``blocks`` has shape ``(*control_dims, D, D)`` with ``D`` the product of
    target dimensions.  ``cost`` is the number of base-oracle applications one
    application of this operator (or of its inverse) consumes; it is charged
    to ``counter`` when present.
    """

    targets: tuple[str, ...]
    blocks: np.ndarray
    controls: tuple[str, ...] = ()
    cost: int = 0
    counter: QueryCounter | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.targets = tuple(self.targets)
        self.controls = tuple(self.controls)
        self.blocks = np.asarray(self.blocks, dtype=np.complex128)
        if self.blocks.ndim != len(self.controls) + 2 or self.blocks.shape[-1] != self.blocks.shape[-2]:
            raise ValueError(
                f"blocks of shape {self.blocks.shape} do not fit controls {self.controls}"
            )
        overlap = set(self.targets) & set(self.controls)
        if overlap:
            raise ValueError(f"registers {sorted(overlap)} are both target and control")

    @property
    def dim(self) -> int:
        return self.blocks.shape[-1]

    @property
    def control_shape(self) -> tuple[int, ...]:
        return self.blocks.shape[:-2]

    def inverse(self) -> Operator:
        return Operator(self.targets, _dagger(self.blocks), self.controls, self.cost, self.counter)

    def charge(self, times: int = 1) -> None:
        if self.counter is not None and self.cost:
            self.counter.add(self.cost * times)

    def then(self, other: Operator) -> Operator:
        """Operator applying ``self`` first and ``other`` second."""
        if other.targets != self.targets:
            raise ValueError(f"cannot compose targets {self.targets} and {other.targets}")
        controls, dims = _merge_controls(self, other)
        a = _expand_blocks(self, controls, dims)
        b = _expand_blocks(other, controls, dims)
        counter = self.counter if self.counter is not None else other.counter
        return Operator(self.targets, b @ a, controls, self.cost + other.cost, counter)

    def when(self, register: str, dim: int, value: int = 1) -> Operator:
        """This operator applied only where ``register`` holds ``value``."""
        if register in self.targets or register in self.controls:
            raise ValueError(f"register {register!r} already used by the operator")
        eye = np.broadcast_to(np.eye(self.dim, dtype=np.complex128), self.blocks.shape)
        blocks = np.stack([self.blocks if v == value else eye for v in range(dim)])
        return Operator(self.targets, blocks, (register,) + self.controls, self.cost, self.counter)

    def is_unitary(self, tol: float = UNITARITY_TOL) -> bool:
        eye = np.eye(self.dim)
        return bool(np.all(np.abs(_dagger(self.blocks) @ self.blocks - eye) <= tol))


def _dagger(blocks: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(blocks, -1, -2))


def _merge_controls(*ops: Operator) -> tuple[tuple[str, ...], dict[str, int]]:
    controls: list[str] = []
    dims: dict[str, int] = {}
    for op in ops:
        for name, d in zip(op.controls, op.control_shape):
            if name in dims and dims[name] != d:
                raise ValueError(f"control {name!r} has inconsistent dimensions")
            if name not in dims:
                controls.append(name)
                dims[name] = d
    return tuple(controls), dims


def _expand_blocks(op: Operator, controls: tuple[str, ...], dims: dict[str, int]) -> np.ndarray:
    order = [op.controls.index(c) for c in controls if c in op.controls]
    blocks = np.moveaxis(op.blocks, order, range(len(order))) if order else op.blocks
    shape = [dims[c] if c in op.controls else 1 for c in controls] + [op.dim, op.dim]
    return np.broadcast_to(blocks.reshape(shape), tuple(dims[c] for c in controls) + (op.dim, op.dim))


def basis_state(layout: RegisterLayout, coords: Sequence[int] | Mapping[str, int]) -> StateVector:
    amps = np.zeros(layout.size, dtype=np.complex128)
    amps[layout.to_index(coords)] = 1.0
    return StateVector(layout, amps)


def zero_state(layout: RegisterLayout) -> StateVector:
    return basis_state(layout, [0] * len(layout.registers))


def apply_fourier(state: StateVector, reg: str, M: int | None = None, inverse: bool = False) -> StateVector:
    """Apply ``F_M |x> = M^{-1/2} sum_y exp(2 pi i x y / M) |y>`` (or its inverse) to ``reg``."""
    dim = state.layout.dim(reg)
    if M is not None and M != dim:
        raise ValueError(f"register {reg!r} has dimension {dim}, not {M}")
    ax = state.layout.axis(reg)
    # numpy's ifft carries the +2 pi i sign convention used here
    transform = np.fft.fft if inverse else np.fft.ifft
    out = transform(state.tensor(), axis=ax, norm="ortho")
    return StateVector(state.layout, out.reshape(-1))


def fourier_matrix(M: int, inverse: bool = False) -> np.ndarray:
    sign = -1 if inverse else 1
    k = np.arange(M)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / M) / np.sqrt(M)


def apply_hadamard(state: StateVector, reg: str, inverse: bool = False) -> StateVector:
    return apply_fourier(state, reg, 2, inverse=inverse)


def apply_operator(state: StateVector, op: Operator, inverse: bool = False) -> StateVector:
    layout = state.layout
    axes_c = [layout.axis(c) for c in op.controls]
    axes_t = [layout.axis(t) for t in op.targets]
    dims_t = [layout.shape[a] for a in axes_t]
    if int(np.prod(dims_t)) != op.dim:
        raise ValueError(f"targets {op.targets} have dimension {int(np.prod(dims_t))}, operator acts on {op.dim}")
    ctrl_shape = tuple(layout.shape[a] for a in axes_c)
    if ctrl_shape != op.control_shape:
        raise ValueError(f"control dimensions {ctrl_shape} do not match blocks {op.control_shape}")
    rest = [a for a in range(len(layout.shape)) if a not in axes_c and a not in axes_t]
    perm = axes_c + axes_t + rest
    psi = state.tensor().transpose(perm).reshape(ctrl_shape + (op.dim, -1))
    blocks = _dagger(op.blocks) if inverse else op.blocks
    psi = blocks @ psi
    psi = psi.reshape([layout.shape[a] for a in perm])
    out = np.transpose(psi, np.argsort(perm))
    op.charge()
    return StateVector(layout, out.reshape(-1))


def controlled_power(
    control: str,
    control_dim: int,
    U: Operator,
    M: int,
    exponent: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Operator:
    """The operator ``Lambda_M(U)``: ``|j>|y> -> |j> U^min(e(j), M) |y>``.

    ``exponent`` maps control values to powers (identity by default), which
    lets a register holding an index stand in for a derived integer.  If
    ``control`` is already one of the control registers of ``U`` the power
    is taken block by block along that axis.  The result is charged as
    ``M`` uses of ``U``.
    """
    if control in U.targets:
        raise ValueError(f"control {control!r} overlaps the targets of U")
    values = np.arange(control_dim)
    exps = values if exponent is None else np.asarray(exponent(values), dtype=np.int64)
    exps = np.minimum(exps, M)
    if np.any(exps < 0):
        raise ValueError("negative exponent in controlled power")
    if control in U.controls:
        axis = U.controls.index(control)
        if U.control_shape[axis] != control_dim:
            raise ValueError(f"control {control!r} has dimension {U.control_shape[axis]}, not {control_dim}")
        base = np.moveaxis(U.blocks, axis, 0)
        controls = (control,) + tuple(c for c in U.controls if c != control)
    else:
        base = np.broadcast_to(U.blocks, (control_dim,) + U.blocks.shape)
        controls = (control,) + U.controls
    result = np.empty(base.shape, dtype=np.complex128)
    result[...] = np.eye(U.dim)
    for k in range(1, int(exps.max(initial=0)) + 1):
        sel = exps >= k
        result[sel] = base[sel] @ result[sel]
    return Operator(U.targets, result, controls, U.cost * M, U.counter)


def apply_controlled_power(
    state: StateVector,
    control: str,
    U: Operator,
    M: int,
    exponent: Callable[[np.ndarray], np.ndarray] | None = None,
    inverse: bool = False,
) -> StateVector:
    op = controlled_power(control, state.layout.dim(control), U, M, exponent)
    return apply_operator(state, op, inverse=inverse)


def apply_sign(state: StateVector, pred: BasisPredicate) -> StateVector:
    mask = pred.mask(state.layout)
    out = state.tensor().copy()
    out[mask] *= -1
    return StateVector(state.layout, out.reshape(-1))


def measurement_distribution(state: StateVector, regs: Sequence[str]) -> np.ndarray:
    """Marginal probabilities of ``regs``, indexed by their joint coordinates."""
    layout = state.layout
    axes = [layout.axis(r) for r in regs]
    probs = np.abs(state.tensor()) ** 2
    other = tuple(a for a in range(len(layout.shape)) if a not in axes)
    marg = probs.sum(axis=other)
    kept = sorted(axes)
    return np.transpose(marg, [kept.index(a) for a in axes])


def conditional_distribution(state: StateVector, given: Sequence[str], regs: Sequence[str]) -> np.ndarray:
    """``P(regs | given)`` with shape ``dims(given) + dims(regs)``; rows with zero mass stay zero."""
    joint = measurement_distribution(state, list(given) + list(regs))
    axes = tuple(range(len(given), joint.ndim))
    mass = joint.sum(axis=axes, keepdims=True)
    return np.divide(joint, mass, out=np.zeros_like(joint), where=mass > 0)


def apply_classical_map(
    state: StateVector,
    g: Callable[..., int],
    src: Sequence[str],
    dst: str,
    mode: str = "add",
    inverse: bool = False,
) -> StateVector:
    """Reversibly write ``g(src)`` into ``dst``: ``|s>|d> -> |s>|d (+) g(s)>``.

    ``mode="add"`` combines modulo the dimension of ``dst``; ``mode="xor"``
    uses bitwise XOR and needs a power-of-two ``dst``.
    """
    layout = state.layout
    src = tuple(src)
    if dst in src:
        raise ValueError(f"destination {dst!r} is also a source")
    d_dst = layout.dim(dst)
    if mode == "xor" and d_dst & (d_dst - 1):
        raise ValueError("xor mode needs a power-of-two destination register")
    if mode not in ("add", "xor"):
        raise ValueError(f"unknown mode {mode!r}")
    src_dims = tuple(layout.dim(s) for s in src)
    grids = np.meshgrid(*[np.arange(d) for d in src_dims], indexing="ij")
    values = np.vectorize(g, otypes=[np.int64])(*grids) if src else np.asarray(g(), dtype=np.int64)
    values = np.broadcast_to(values, src_dims)
    if np.any(values < 0) or np.any(values >= d_dst):
        raise ValueError(f"map values fall outside destination register {dst!r} of dimension {d_dst}")

    axes_s = [layout.axis(s) for s in src]
    ax_d = layout.axis(dst)
    rest = [a for a in range(len(layout.shape)) if a not in axes_s and a != ax_d]
    perm = axes_s + [ax_d] + rest
    psi = state.tensor().transpose(perm).reshape(src_dims + (d_dst, -1))
    e = np.arange(d_dst)
    v = values[..., None]
    if mode == "xor":
        idx = e ^ v
    elif inverse:
        idx = (e + v) % d_dst
    else:
        idx = (e - v) % d_dst
    out = np.take_along_axis(psi, idx[..., None], axis=-2)
    out = out.reshape([layout.shape[a] for a in perm])
    return StateVector(layout, np.transpose(out, np.argsort(perm)).reshape(-1))


def unitary_with_first_column(v: np.ndarray) -> np.ndarray:
    """A unitary whose first column is the unit vector ``v``.

    Built as a Householder reflection onto ``v`` after absorbing the phase of
    ``v[0]``, so the completion is deterministic in ``v``.
    """
    v = np.asarray(v, dtype=np.complex128)
    n = v.size
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("column must be a unit vector")
    phase = v[0] / abs(v[0]) if abs(v[0]) > 0 else 1.0
    w = v / phase
    u = w.copy()
    u[0] -= 1.0
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        H = np.eye(n, dtype=np.complex128)
    else:
        u /= nu
        H = np.eye(n, dtype=np.complex128) - 2.0 * np.outer(u, u.conj())
    H[:, 0] *= phase
    return H


def kron_blocks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Kronecker product over matching leading axes."""
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    return out.reshape(lead + (a.shape[-2] * b.shape[-2], a.shape[-1] * b.shape[-1]))


def diagonal_blocks(values: Iterable[complex]) -> np.ndarray:
    return np.diag(np.asarray(list(values), dtype=np.complex128))
