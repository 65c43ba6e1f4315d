"""Dense operator algebra for a probe qubit, a truncated oscillator and a system qubit.

Conventions: hbar = 1, qubit basis ordered (|g>, |e>), sigma_z |e> = +|e>,
sigma_plus = |e><g|.  The system-qubit labels |1>, |2> map onto (|g>, |e>).
Tensor products follow the slot order of the layout, so for the default
(probe, mediator, system) layout the flat index is ((i_p * N) + n) * 2 + i_s.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

PROBE, MEDIATOR, SYSTEM = "probe", "mediator", "system"

HERMITIAN_ATOL = 1e-12
PURE_NORM_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIG_FLOOR = -1e-8
THERMAL_TAIL_MAX = 1e-8


class LayoutError(ValueError):
    """Operands live on incompatible tensor-product layouts."""


class CutoffTooSmall(ValueError):
    """The Fock cutoff leaves too much probability in the truncated tail."""


@dataclass(frozen=True)
class SpaceLayout:
    dims: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"dimensions must be positive, got {dims}")
        if self.labels is not None:
            labels = tuple(self.labels)
            object.__setattr__(self, "labels", labels)
            if len(labels) != len(dims) or len(set(labels)) != len(labels):
                raise ValueError(f"labels {labels} do not match dims {dims}")
            if MEDIATOR in labels and dims[labels.index(MEDIATOR)] < 2:
                raise ValueError("mediator Fock cutoff must be at least 2")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, slot: Union[int, str]) -> int:
        if isinstance(slot, str):
            if self.labels is None or slot not in self.labels:
                raise LayoutError(f"layout {self} has no slot {slot!r}")
            return self.labels.index(slot)
        if not 0 <= slot < len(self.dims):
            raise LayoutError(f"slot index {slot} out of range for {self}")
        return int(slot)

    def sub(self, slots: Iterable[Union[int, str]]) -> "SpaceLayout":
        idx = sorted(self.index(s) for s in slots)
        labels = None if self.labels is None else tuple(self.labels[i] for i in idx)
        return SpaceLayout(tuple(self.dims[i] for i in idx), labels)


def tripartite_layout(cutoff: int) -> SpaceLayout:
    return SpaceLayout((2, cutoff, 2), (PROBE, MEDIATOR, SYSTEM))


def qubit_layout(label: str = "qubit") -> SpaceLayout:
    return SpaceLayout((2,), (label,))


def mode_layout(cutoff: int) -> SpaceLayout:
    return SpaceLayout((cutoff,), (MEDIATOR,))


@dataclass(frozen=True, eq=False)
class Operator:
    """A dense square matrix tied to a layout.  Arithmetic checks layouts."""

    layout: SpaceLayout
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        n = self.layout.dim
        if data.shape != (n, n):
            raise LayoutError(f"matrix shape {data.shape} does not match layout dim {n}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def _other(self, other: "Operator") -> np.ndarray:
        if not isinstance(other, Operator):
            return NotImplemented
        if other.layout != self.layout:
            raise LayoutError(f"layout mismatch: {self.layout} vs {other.layout}")
        return other.data

    def __add__(self, other):
        o = self._other(other)
        return o if o is NotImplemented else Operator(self.layout, self.data + o)

    def __sub__(self, other):
        o = self._other(other)
        return o if o is NotImplemented else Operator(self.layout, self.data - o)

    def __matmul__(self, other):
        o = self._other(other)
        return o if o is NotImplemented else Operator(self.layout, self.data @ o)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            raise TypeError("use @ for operator products")
        return Operator(self.layout, self.data * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.layout, self.data / scalar)

    def __neg__(self):
        return Operator(self.layout, -self.data)

    def dag(self) -> "Operator":
        return Operator(self.layout, self.data.conj().T)

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        return bool(np.allclose(self.data, self.data.conj().T, rtol=0, atol=atol))

    @classmethod
    def identity(cls, layout: SpaceLayout) -> "Operator":
        return cls(layout, np.eye(layout.dim))

    @classmethod
    def zero(cls, layout: SpaceLayout) -> "Operator":
        return cls(layout, np.zeros((layout.dim, layout.dim)))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


@dataclass(frozen=True, eq=False)
class QState:
    """Pure state vector (1-d data) or density matrix (2-d data)."""

    layout: SpaceLayout
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        n = self.layout.dim
        if data.ndim == 1:
            if data.shape != (n,):
                raise LayoutError(f"vector length {data.shape[0]} does not match dim {n}")
            norm = np.linalg.norm(data)
            if abs(norm - 1) > PURE_NORM_ATOL:
                raise ValueError(f"pure state norm {norm} is not 1")
        elif data.ndim == 2:
            if data.shape != (n, n):
                raise LayoutError(f"matrix shape {data.shape} does not match dim {n}")
            if not np.allclose(data, data.conj().T, rtol=0, atol=TRACE_ATOL):
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(data).real
            if abs(tr - 1) > TRACE_ATOL:
                raise ValueError(f"density matrix trace {tr} is not 1")
            lo = np.linalg.eigvalsh(data).min()
            if lo < EIG_FLOOR:
                raise ValueError(f"density matrix has negative eigenvalue {lo}")
        else:
            raise ValueError("state data must be a vector or a matrix")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    def density(self) -> np.ndarray:
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_mixed(self) -> "QState":
        return self if self.kind == "mixed" else QState(self.layout, self.density())


def annihilation(cutoff: int) -> Operator:
    """Lowering operator a on Fock states |0>..|cutoff-1>."""
    if cutoff < 2:
        raise ValueError(f"Fock cutoff must be >= 2, got {cutoff}")
    return Operator(mode_layout(cutoff), np.diag(np.sqrt(np.arange(1, cutoff)), 1))


def number_operator(cutoff: int) -> Operator:
    return Operator(mode_layout(cutoff), np.diag(np.arange(cutoff, dtype=float)))


def quadrature(cutoff: int, phi: float) -> Operator:
    """X_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2."""
    a = annihilation(cutoff)
    return (a.dag() * np.exp(1j * phi) + a * np.exp(-1j * phi)) * 0.5


def qubit_operators(label: str = "qubit") -> dict[str, Operator]:
    lay = qubit_layout(label)
    sp = np.array([[0, 0], [1, 0]], dtype=complex)
    return {
        "sp": Operator(lay, sp),
        "sm": Operator(lay, sp.T),
        "sz": Operator(lay, np.diag([-1.0, 1.0])),
        "e": Operator(lay, np.diag([0.0, 1.0])),
        "g": Operator(lay, np.diag([1.0, 0.0])),
    }


def embed(op: Union[Operator, np.ndarray], slot: Union[int, str], layout: SpaceLayout) -> Operator:
    """Tensor `op` into `slot` with identities on every other slot."""
    i = layout.index(slot)
    mat = op.data if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if mat.shape != (layout.dims[i], layout.dims[i]):
        raise LayoutError(f"operator of shape {mat.shape} cannot sit in slot {slot} of {layout}")
    factors = [np.eye(d) for d in layout.dims]
    factors[i] = mat
    return Operator(layout, reduce(np.kron, factors))


def tensor(*parts: Union[QState, Operator]):
    """Kronecker product of states or operators, concatenating layouts."""
    if not parts:
        raise ValueError("nothing to tensor")
    dims = sum((p.layout.dims for p in parts), ())
    if all(p.layout.labels is not None for p in parts):
        labels = sum((p.layout.labels for p in parts), ())
    else:
        labels = None
    layout = SpaceLayout(dims, labels)
    if all(isinstance(p, Operator) for p in parts):
        return Operator(layout, reduce(np.kron, [p.data for p in parts]))
    if all(p.kind == "pure" for p in parts):
        return QState(layout, reduce(np.kron, [p.data for p in parts]))
    return QState(layout, reduce(np.kron, [p.density() for p in parts]))


def basis_state(layout: SpaceLayout, *levels: int) -> QState:
    if len(levels) != len(layout.dims):
        raise LayoutError(f"need {len(layout.dims)} levels, got {len(levels)}")
    vec = np.zeros(layout.dim, dtype=complex)
    vec[np.ravel_multi_index(levels, layout.dims)] = 1.0
    return QState(layout, vec)


def fock_state(n: int, cutoff: int) -> QState:
    if not 0 <= n < cutoff:
        raise CutoffTooSmall(f"Fock level {n} does not fit under cutoff {cutoff}")
    return basis_state(mode_layout(cutoff), n)


def thermal_populations(nbar: float, cutoff: int) -> np.ndarray:
    if nbar < 0:
        raise ValueError(f"mean occupation must be nonnegative, got {nbar}")
    if nbar == 0:
        p = np.zeros(cutoff)
        p[0] = 1.0
        return p
    ratio = nbar / (1.0 + nbar)
    tail = ratio**cutoff  # exact mass of levels >= cutoff
    if tail >= THERMAL_TAIL_MAX:
        raise CutoffTooSmall(
            f"thermal nbar={nbar} leaves tail mass {tail:.2e} above cutoff {cutoff}"
        )
    p = ratio ** np.arange(cutoff) / (1.0 + nbar)
    return p / p.sum()


def thermal_state(nbar: float, cutoff: int) -> QState:
    return QState(mode_layout(cutoff), np.diag(thermal_populations(nbar, cutoff)))


def cutoff_for(nbar: float, tail: float = 1e-12, minimum: int = 30) -> int:
    """Smallest cutoff >= minimum whose thermal tail mass is below `tail`."""
    if nbar <= 0:
        return minimum
    ratio = nbar / (1.0 + nbar)
    return max(minimum, int(np.ceil(np.log(tail) / np.log(ratio))) + 1)


def coherent_state(alpha: complex, cutoff: int) -> QState:
    """Normalized truncation of exp(alpha a^dag)|0>."""
    amps = np.zeros(cutoff, dtype=complex)
    amps[0] = 1.0
    for n in range(1, cutoff):
        amps[n] = amps[n - 1] * alpha / np.sqrt(n)
    return QState(mode_layout(cutoff), amps / np.linalg.norm(amps))


def expectation(state: QState, op: Operator) -> complex:
    if state.layout != op.layout:
        raise LayoutError(f"layout mismatch: {state.layout} vs {op.layout}")
    if state.kind == "pure":
        return complex(np.vdot(state.data, op.data @ state.data))
    return complex(np.einsum("ij,ji->", state.data, op.data))


def partial_trace(state: QState, keep: Sequence[Union[int, str]]) -> QState:
    if not keep:
        raise ValueError("must keep at least one slot")
    layout = state.layout
    kept = sorted({layout.index(s) for s in keep})
    dims = layout.dims
    k = len(dims)
    rho = state.density().reshape(dims + dims)
    traced = [i for i in range(k) if i not in kept]
    # einsum over paired row/column indices of the traced slots
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:k])
    cols = list(letters[k : 2 * k])
    for i in traced:
        cols[i] = rows[i]
    out = "".join(rows[i] for i in kept) + "".join(cols[i] for i in kept)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, rho)
    d = int(np.prod([dims[i] for i in kept]))
    return QState(layout.sub(kept), reduced.reshape(d, d))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix from a Ginibre ensemble (test and sweep helper)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
