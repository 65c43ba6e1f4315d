"""Time evolution (Schroedinger, von Neumann, Lindblad) and recorded time series."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from .hilbert import Operator, QState, SpaceLayout, LayoutError
from .models import LindbladGenerator

TRACE_TOL = 1e-8
EIG_TOL = -1e-7
BOUND_EPS = 1e-9
RTOL_FLOOR = 100 * np.finfo(float).eps  # smallest rtol solve_ivp accepts


class IntegratorFailure(RuntimeError):
    pass


class PhysicalityError(RuntimeError):
    pass


class TimeUnit(str, enum.Enum):
    """Dimensionless time conventions: g_p t, g_p^2 t / delta, Gamma t (and raw lab time)."""

    TAU = "tau"
    TAU_EFF = "tau_eff"
    TAU_GAMMA = "tau_gamma"
    LAB = "t"


Hamiltonian = Union[Operator, Callable[[float], Union[Operator, np.ndarray]], None]


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    unit: TimeUnit
    shots: Optional[np.ndarray] = None
    bounded: bool = True  # values are probabilities

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit", TimeUnit(self.unit))
        if self.shots is not None:
            shots = np.broadcast_to(np.asarray(self.shots, dtype=int), times.shape).copy()
            if np.any(shots <= 0):
                raise ValueError("shot counts must be positive")
            object.__setattr__(self, "shots", shots)
            if np.any(values < 0) or np.any(values > 1):
                raise ValueError("shot-sampled values must lie in [0, 1]")
        elif self.bounded and (np.any(values < -BOUND_EPS) or np.any(values > 1 + BOUND_EPS)):
            raise ValueError("probability series leaves [0, 1]")

    def _check(self, other: "TimeSeries"):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        if other.unit != self.unit:
            raise ValueError(f"cannot combine series in {self.unit.value} and {other.unit.value}")
        if not np.array_equal(other.times, self.times):
            raise ValueError("series are sampled on different grids")
        return other

    def __sub__(self, other):
        other = self._check(other)
        return TimeSeries(self.times, self.values - other.values, self.unit, bounded=False)

    def __add__(self, other):
        other = self._check(other)
        return TimeSeries(self.times, self.values + other.values, self.unit, bounded=False)

    @property
    def exact(self) -> bool:
        return self.shots is None

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "value", "shots", "unit"])
            for i, (t, v) in enumerate(zip(self.times, self.values)):
                shots = "" if self.shots is None else str(int(self.shots[i]))
                w.writerow([f"{t:.17g}", f"{v:.17g}", shots, self.unit.value])

    @classmethod
    def from_csv(cls, path: Union[str, Path], bounded: bool = True) -> "TimeSeries":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty series")
        units = {r["unit"] for r in rows}
        if len(units) != 1:
            raise ValueError(f"{path}: mixed time units {sorted(units)}")
        shots = None
        if any(r["shots"] for r in rows):
            shots = np.array([int(r["shots"]) for r in rows])
        return cls(
            np.array([float(r["time"]) for r in rows]),
            np.array([float(r["value"]) for r in rows]),
            TimeUnit(units.pop()),
            shots,
            bounded,
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    layout: SpaceLayout
    times: np.ndarray  # lab time t
    time_scale: float  # dimensionless time = time_scale * t
    unit: TimeUnit
    kind: str  # "pure" or "mixed"
    states: Optional[np.ndarray]
    observables: tuple[Operator, ...] = ()
    expectations: tuple[np.ndarray, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def tau(self) -> np.ndarray:
        return self.times * self.time_scale

    def state(self, i: int) -> QState:
        if self.states is None:
            raise ValueError("trajectory was run without storing states")
        return QState(self.layout, self.states[i])

    def physicality(self) -> dict:
        """Worst trace/norm drift and lowest eigenvalue over the stored states."""
        if self.states is None:
            raise ValueError("trajectory was run without storing states")
        if self.kind == "pure":
            drift = np.abs(np.linalg.norm(self.states, axis=1) - 1).max()
            return {"norm_drift": float(drift), "trace_drift": float(drift), "min_eigenvalue": 0.0}
        traces = np.einsum("tii->t", self.states)
        herm = 0.5 * (self.states + np.conj(np.swapaxes(self.states, 1, 2)))
        lowest = np.linalg.eigvalsh(herm).min()
        return {
            "trace_drift": float(np.abs(traces - 1).max()),
            "min_eigenvalue": float(lowest),
            "hermiticity": float(np.abs(self.states - herm).max()),
        }

    def check(self) -> dict:
        report = self.physicality()
        if report["trace_drift"] >= TRACE_TOL or report["min_eigenvalue"] <= EIG_TOL:
            raise PhysicalityError(f"trajectory left the physical state space: {report}")
        return report


def _matrix_fn(H: Hamiltonian, layout: SpaceLayout):
    """Normalize the Hamiltonian argument to (static matrix or None, callable or None)."""
    if H is None:
        return np.zeros((layout.dim, layout.dim), dtype=complex), None
    if isinstance(H, Operator):
        if H.layout != layout:
            raise LayoutError(f"Hamiltonian layout {H.layout} differs from state layout {layout}")
        return H.data, None

    def fn(t):
        h = H(t)
        h = h.data if isinstance(h, Operator) else np.asarray(h)
        if not np.all(np.isfinite(h)):
            raise IntegratorFailure(f"Hamiltonian is not finite at t={t:.6g}")
        return h

    return None, fn


def _rhs(static, fn, generator, kind, dim):
    if kind == "pure":
        if fn is None:
            return lambda t, y: -1j * (static @ y)
        return lambda t, y: -1j * (fn(t) @ y)

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        h = static if fn is None else fn(t)
        d = -1j * (h @ rho - rho @ h)
        if generator is not None:
            d = d + generator.apply(rho)
        return d.ravel()

    return rhs


def _rk4(rhs, y0, grid, max_step):
    out = np.empty((len(grid),) + y0.shape, dtype=complex)
    out[0] = y0
    y = y0
    for k in range(1, len(grid)):
        t0, t1 = grid[k - 1], grid[k]
        n = max(1, math.ceil((t1 - t0) / max_step - 1e-12))
        h = (t1 - t0) / n
        t = t0
        for _ in range(n):
            k1 = rhs(t, y)
            k2 = rhs(t + h / 2, y + h / 2 * k1)
            k3 = rhs(t + h / 2, y + h / 2 * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        out[k] = y
    return out


def _expect_stack(states, kind, op):
    if kind == "pure":
        return np.einsum("ti,ij,tj->t", states.conj(), op, states)
    return np.einsum("tij,ji->t", states, op)


def _spectral(static, y0, grid, kind, observables, store_states, chunk=2048):
    w, v = np.linalg.eigh(static)
    vd = v.conj().T
    states = None
    expectations = [np.empty(len(grid), dtype=complex) for _ in observables]
    if kind == "pure":
        c0 = vd @ y0
        if store_states:
            states = (np.exp(-1j * np.outer(grid, w)) * c0) @ v.T
        for k, op in enumerate(observables):
            m = (vd @ op @ v) * np.outer(c0.conj(), c0)
            for s in range(0, len(grid), chunk):
                ph = np.exp(-1j * np.outer(grid[s : s + chunk], w))
                expectations[k][s : s + chunk] = ((ph.conj() @ m) * ph).sum(axis=1)
    else:
        r0 = vd @ y0 @ v
        if store_states:
            ph = np.exp(-1j * np.outer(grid, w))
            states = np.einsum("ai,ti,ij,tj,jb->tab", v, ph, r0, ph.conj(), vd, optimize=True)
        for k, op in enumerate(observables):
            # Tr[rho(t) O] = sum_ij r0_ij Ot_ji e^{-i(w_i - w_j)t}
            m = r0 * (vd @ op @ v).T
            for s in range(0, len(grid), chunk):
                ph = np.exp(-1j * np.outer(grid[s : s + chunk], w))
                expectations[k][s : s + chunk] = ((ph @ m) * ph.conj()).sum(axis=1)
    return states, expectations


def evolve(
    H: Hamiltonian,
    rho0: QState,
    grid: Sequence[float],
    generator: Optional[LindbladGenerator] = None,
    *,
    method: str = "adaptive",
    tol: float = 1e-10,
    max_step: Optional[float] = None,
    time_scale: float = 1.0,
    unit: TimeUnit = TimeUnit.TAU,
    observables: Sequence[Operator] = (),
    store_states: bool = True,
) -> Trajectory:
    """Propagate `rho0` over the lab-time `grid`.

    method: "adaptive" (embedded 8(5,3) Runge-Kutta, error per step <= tol),
    "rk4" (classical fixed step, step <= max_step) or "spectral" (exact
    eigen-propagator, static Hamiltonian without dissipation only).
    Pure states stay pure (Schroedinger equation) unless a generator is given.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and start at 0")
    layout = rho0.layout
    if generator is not None and generator.layout != layout:
        raise LayoutError("generator layout differs from state layout")
    for op in observables:
        if op.layout != layout:
            raise LayoutError("observable layout differs from state layout")
    static, fn = _matrix_fn(H, layout)
    state = rho0 if generator is None else rho0.as_mixed()
    kind = state.kind
    y0 = state.data.astype(complex)
    dim = layout.dim
    meta = {"method": method, "tol": tol, "max_step": max_step}

    if method == "spectral":
        if fn is not None or generator is not None:
            raise ValueError("spectral propagation needs a static Hamiltonian and no dissipation")
        states, exps = _spectral(static, y0, grid, kind, [o.data for o in observables], store_states)
    else:
        rhs = _rhs(static, fn, generator, kind, dim)
        flat0 = y0.ravel()
        if method == "adaptive":
            if grid.size == 1:
                ys = flat0[None, :]
            else:
                # solve_ivp bounds the RMS of the scaled error; dividing by sqrt(n)
                # bounds every component by tol instead
                step_tol = tol / np.sqrt(flat0.size)
                meta["step_tol"] = step_tol
                sol = solve_ivp(
                    rhs, (0.0, grid[-1]), flat0, method="DOP853", t_eval=grid,
                    rtol=max(step_tol, RTOL_FLOOR), atol=step_tol, max_step=max_step or np.inf,
                )
                if sol.status != 0:
                    raise IntegratorFailure(f"integration stopped at t={sol.t[-1]:.6g}: {sol.message}")
                ys = sol.y.T
                meta["nfev"] = int(sol.nfev)
        elif method == "rk4":
            if max_step is None:
                if static is None:
                    raise ValueError("rk4 with a time-dependent Hamiltonian needs max_step")
                top = max(np.abs(np.linalg.eigvalsh(static)).max(), 1.0)
                max_step = 2 * np.pi / (50 * top)
                meta["max_step"] = max_step
            ys = _rk4(rhs, flat0, grid, max_step)
        else:
            raise ValueError(f"unknown method {method!r}")
        if not np.all(np.isfinite(ys)):
            raise IntegratorFailure("non-finite values in the propagated state")
        states = ys.reshape((len(grid),) + y0.shape)
        exps = [_expect_stack(states, kind, o.data) for o in observables]
        if not store_states:
            states = None

    return Trajectory(
        layout, grid, float(time_scale), TimeUnit(unit), kind, states,
        tuple(observables), tuple(np.asarray(e) for e in exps), meta,
    )


def record(traj: Trajectory, op: Operator, unit: Optional[TimeUnit] = None) -> TimeSeries:
    """Expectation of a Hermitian observable along the trajectory."""
    if not op.is_hermitian():
        raise ValueError("recorded observable must be Hermitian")
    if op.layout != traj.layout:
        raise LayoutError("observable layout differs from trajectory layout")
    if traj.states is not None:
        vals = _expect_stack(traj.states, traj.kind, op.data)
    else:
        for o, e in zip(traj.observables, traj.expectations):
            if o is op or np.array_equal(o.data, op.data):
                vals = e
                break
        else:
            raise ValueError("observable was not tracked and states were not stored")
    residue = np.abs(np.imag(vals)).max()
    if residue >= 1e-10:
        raise RuntimeError(f"imaginary part {residue:.3g} in a Hermitian expectation")
    eig = np.linalg.eigvalsh(op.data)
    bounded = eig.min() > -1e-12 and eig.max() < 1 + 1e-12
    return TimeSeries(traj.tau, np.real(vals), unit or traj.unit, bounded=bounded)
