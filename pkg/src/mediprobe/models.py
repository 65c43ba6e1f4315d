"""Hamiltonians and Lindblad generators for the probe-mediator-system setup
and for the trapped-ion realization of its couplings."""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .hilbert import (
    MEDIATOR,
    PROBE,
    SYSTEM,
    LayoutError,
    Operator,
    SpaceLayout,
    annihilation,
    embed,
    number_operator,
    qubit_operators,
    tripartite_layout,
)

DISPERSIVE_FACTOR = 10.0


class DispersiveRegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters, frequencies in units of the probe coupling g_p.

    `delta` is derived as omega_p - omega_a; passing it explicitly only
    serves as a consistency check.
    """

    omega_p: float = 100.0
    omega_s: float = 100.0
    omega_a: float = 100.0
    g_p: float = 1.0
    g_s: float = 1.0
    gamma: float = 0.0
    collective_rate: float = 0.0
    nbar_a: float = 0.0
    nbar_b: float = 0.0
    phi: float = 0.0
    cutoff: int = 30
    delta: Optional[float] = None

    def __post_init__(self):
        if self.g_p <= 0:
            raise ValueError(f"g_p must be positive, got {self.g_p}")
        for name in ("gamma", "collective_rate", "nbar_a", "nbar_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.cutoff < 2:
            raise ValueError(f"cutoff must be >= 2, got {self.cutoff}")
        detuning = self.omega_p - self.omega_a
        if self.delta is not None and abs(self.delta - detuning) > 1e-12:
            raise ValueError(
                f"delta={self.delta} disagrees with omega_p - omega_a = {detuning}"
            )
        object.__setattr__(self, "delta", detuning)

    def replace(self, **changes) -> "ModelParams":
        changes.setdefault("delta", None)
        return dataclasses.replace(self, **changes)

    @classmethod
    def dispersive(cls, delta: float, g: float = 1.0, omega: float = 100.0, **kw) -> "ModelParams":
        """Equal qubit frequencies and couplings, mediator detuned by `delta`."""
        return cls(omega_p=omega, omega_s=omega, omega_a=omega - delta, g_p=g, g_s=g, **kw)

    @property
    def layout(self) -> SpaceLayout:
        return tripartite_layout(self.cutoff)


@dataclass(frozen=True)
class IonParams:
    rabi: float
    eta: float
    trap_freq: float = 1.0
    detuning: Optional[float] = None  # defaults to the red sideband, -trap_freq
    phase: float = 0.0
    cutoff: int = 10
    lamb_dicke_threshold: float = 0.3

    def __post_init__(self):
        if self.eta <= 0 or self.trap_freq <= 0:
            raise ValueError("eta and trap_freq must be positive")
        if self.cutoff < 2:
            raise ValueError(f"cutoff must be >= 2, got {self.cutoff}")
        if self.detuning is None:
            object.__setattr__(self, "detuning", -self.trap_freq)

    def lamb_dicke_ok(self, nbar: float) -> bool:
        return self.eta * np.sqrt(nbar + 1) < self.lamb_dicke_threshold

    @property
    def layout(self) -> SpaceLayout:
        return SpaceLayout((2, self.cutoff), ("ion", MEDIATOR))


@dataclass(frozen=True)
class LindbladGenerator:
    """Dissipator sum_k r_k (J rho J^dag - {J^dag J, rho}/2)."""

    layout: SpaceLayout
    jumps: tuple[tuple[Operator, float], ...] = ()

    def __post_init__(self):
        for op, rate in self.jumps:
            if op.layout != self.layout:
                raise LayoutError("jump operator layout differs from generator layout")
            if rate < 0:
                raise ValueError(f"negative rate {rate}")

    def _terms(self):
        for op, rate in self.jumps:
            if rate == 0:
                continue
            j = op.data
            jd = j.conj().T
            yield rate, j, jd, jd @ j

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Dissipator acting on a density matrix (Schroedinger picture)."""
        out = np.zeros_like(rho, dtype=complex)
        for rate, j, jd, jdj in self._terms():
            out += rate * (j @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj))
        return out

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        """Dual map acting on an observable (Heisenberg picture)."""
        out = np.zeros_like(x, dtype=complex)
        for rate, j, jd, jdj in self._terms():
            out += rate * (jd @ x @ j - 0.5 * (jdj @ x + x @ jdj))
        return out


def _tripartite_ops(cutoff: int):
    lay = tripartite_layout(cutoff)
    q = qubit_operators()
    a = embed(annihilation(cutoff), MEDIATOR, lay)
    return lay, a, {k: embed(v, PROBE, lay) for k, v in q.items()}, {
        k: embed(v, SYSTEM, lay) for k, v in q.items()
    }


def excitation_number(cutoff: int) -> Operator:
    lay, _, probe, system = _tripartite_ops(cutoff)
    return probe["e"] + system["e"] + embed(number_operator(cutoff), MEDIATOR, lay)


def probe_coupling(p: ModelParams) -> Operator:
    """The probe-mediator Jaynes-Cummings term g_p (s+ a + s- a^dag)."""
    _, a, probe, _ = _tripartite_ops(p.cutoff)
    return p.g_p * (probe["sp"] @ a + probe["sm"] @ a.dag())


def tripartite_hamiltonian(p: ModelParams) -> Operator:
    lay, a, probe, system = _tripartite_ops(p.cutoff)
    ad = a.dag()
    return (
        (p.omega_p / 2) * probe["sz"]
        + p.omega_a * (ad @ a)
        + (p.omega_s / 2) * system["sz"]
        + p.g_p * (probe["sp"] @ a + probe["sm"] @ ad)
        + p.g_s * (system["sp"] @ a + system["sm"] @ ad)
    )


def dispersive_hamiltonian(p: ModelParams) -> Operator:
    """Second-order effective Hamiltonian (g^2/delta)[(sz_p + sz_s) n + S+ S-],
    with S+- the collective qubit raising/lowering operators."""
    if p.g_p != p.g_s or p.omega_p != p.omega_s:
        raise ValueError("dispersive model needs g_p == g_s and omega_p == omega_s")
    if p.delta == 0:
        raise ValueError("dispersive model needs nonzero detuning")
    ratio = abs(p.delta) / (p.g_p * np.sqrt(p.nbar_a + 1))
    if ratio < DISPERSIVE_FACTOR:
        warnings.warn(
            f"|delta|/(g sqrt(nbar+1)) = {ratio:.3g} is below {DISPERSIVE_FACTOR:g}; "
            "dispersive approximation is doubtful",
            DispersiveRegimeWarning,
            stacklevel=2,
        )
    _, a, probe, system = _tripartite_ops(p.cutoff)
    collective_up = probe["sp"] + system["sp"]
    return (p.g_p**2 / p.delta) * (
        (probe["sz"] + system["sz"]) @ (a.dag() @ a) + collective_up @ collective_up.dag()
    )


def thermal_bath_generator(p: ModelParams) -> LindbladGenerator:
    """Mediator damping towards a bath with mean occupation nbar_b."""
    lay, a, _, _ = _tripartite_ops(p.cutoff)
    return LindbladGenerator(lay, ((a.dag(), p.gamma * p.nbar_b), (a, p.gamma * (p.nbar_b + 1))))


def mode_bath_generator(cutoff: int, gamma: float, nbar_b: float) -> LindbladGenerator:
    """Same bath acting on a bare oscillator, for mediator-only checks."""
    a = annihilation(cutoff)
    return LindbladGenerator(a.layout, ((a.dag(), gamma * nbar_b), (a, gamma * (nbar_b + 1))))


def two_qubit_layout() -> SpaceLayout:
    return SpaceLayout((2, 2), (PROBE, SYSTEM))


def collective_decay_generator(p: ModelParams) -> tuple[Operator, LindbladGenerator]:
    """Free qubit Hamiltonian and the common-reservoir decay through s-_p + s-_s.

    Returned separately so the same evolution API serves both baths.
    """
    lay = two_qubit_layout()
    q = qubit_operators()
    h0 = (p.omega_s / 2) * embed(q["sz"], SYSTEM, lay) + (p.omega_p / 2) * embed(q["sz"], PROBE, lay)
    jump = embed(q["sm"], PROBE, lay) + embed(q["sm"], SYSTEM, lay)
    return h0, LindbladGenerator(lay, ((jump, p.collective_rate),))


def _displacement_kernel(ip: IonParams, series_order: Optional[int]) -> np.ndarray:
    a = annihilation(ip.cutoff).data
    x = a + a.conj().T
    if series_order is None:
        w, v = np.linalg.eigh(x)
        return (v * np.exp(1j * ip.eta * w)) @ v.conj().T
    out = np.eye(ip.cutoff, dtype=complex)
    term = np.eye(ip.cutoff, dtype=complex)
    for k in range(1, series_order + 1):
        term = term @ (1j * ip.eta * x) / k
        out = out + term
    return out


def ion_laser_hamiltonian_fn(
    ip: IonParams, series_order: Optional[int] = None
) -> Callable[[float], np.ndarray]:
    """Return t -> matrix of the ion-laser coupling in the interaction picture.

    exp(i eta (a^dag e^{i nu t} + a e^{-i nu t})) = U(t) exp(i eta (a + a^dag)) U(t)^dag
    with U(t) = exp(i nu t n); the kernel is exponentiated once.  A finite
    `series_order` swaps in the truncated Lamb-Dicke expansion instead.
    """
    kernel = _displacement_kernel(ip, series_order)
    levels = np.arange(ip.cutoff)
    gap = levels[:, None] - levels[None, :]
    n = ip.cutoff

    def hamiltonian(t: float) -> np.ndarray:
        disp = kernel * np.exp(1j * ip.trap_freq * t * gap)
        up = 0.5 * ip.rabi * np.exp(1j * (ip.phase - ip.detuning * t)) * disp
        h = np.zeros((2 * n, 2 * n), dtype=complex)
        h[n:, :n] = up  # |D><S| block
        h[:n, n:] = up.conj().T
        return h

    return hamiltonian


def ion_laser_hamiltonian(ip: IonParams, t: float, series_order: Optional[int] = None) -> Operator:
    return Operator(ip.layout, ion_laser_hamiltonian_fn(ip, series_order)(t))


def red_sideband_hamiltonian(ip: IonParams) -> Operator:
    """(i eta Omega / 2)(a^dag |S><D| e^{-i phase} - a |D><S| e^{i phase})."""
    lay = ip.layout
    q = qubit_operators()
    a = embed(annihilation(ip.cutoff), MEDIATOR, lay)
    s_from_d = embed(q["sm"], "ion", lay)  # |S><D|
    d_from_s = embed(q["sp"], "ion", lay)  # |D><S|
    return (0.5j * ip.eta * ip.rabi) * (
        a.dag() @ s_from_d * np.exp(-1j * ip.phase) - a @ d_from_s * np.exp(1j * ip.phase)
    )


def sideband_basis_rotation(ip: IonParams) -> Operator:
    """Qubit phase rotation |D> -> i|D> mapping the phase-0 red sideband onto
    the Jaynes-Cummings form g (s+ a + s- a^dag) with g = eta Omega / 2."""
    return embed(np.diag([1.0, 1j]), "ion", ip.layout)
