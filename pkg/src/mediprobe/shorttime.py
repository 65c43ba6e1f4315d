"""Short-time derivatives of the probe excitation probability P_e(tau).

Three routes are provided: exact evaluation at tau = 0 through repeated
application of the adjoint (Heisenberg-picture) generator, closed-form
expressions in terms of the system density matrix, and least-squares
polynomial fits to sampled (optionally shot-noisy) time series.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import InitVar, dataclass, field
from typing import Optional

import numpy as np

from .dynamics import TimeSeries, TimeUnit
from .hilbert import (
    PROBE,
    LayoutError,
    Operator,
    QState,
    embed,
    expectation,
    qubit_layout,
    qubit_operators,
    quadrature,
)
from .models import LindbladGenerator, ModelParams

MAX_ORDER = 3


class FitFailure(RuntimeError):
    pass


class SamplingWarning(UserWarning):
    pass


class ProbeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProbeState:
    """alpha|g> + beta|e>."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"probe amplitudes not normalized (|a|^2+|b|^2 = {norm})")
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))

    @classmethod
    def plus(cls, phi: float = 0.0) -> "ProbeState":
        """(|g> + e^{i phi}|e>)/sqrt(2)."""
        amp = 1 / math.sqrt(2)
        return cls(amp, amp * np.exp(1j * phi))

    @classmethod
    def from_inversion(cls, delta_p: float, phi: float = 0.0) -> "ProbeState":
        if abs(delta_p) > 1:
            raise ValueError(f"population inversion {delta_p} outside [-1, 1]")
        return cls(math.sqrt((1 - delta_p) / 2), math.sqrt((1 + delta_p) / 2) * np.exp(1j * phi))

    @property
    def phi(self) -> float:
        return float(np.angle(self.beta) - np.angle(self.alpha))

    @property
    def delta_p(self) -> float:
        return abs(self.beta) ** 2 - abs(self.alpha) ** 2

    @property
    def balanced(self) -> bool:
        return abs(abs(self.alpha) - abs(self.beta)) < 1e-12

    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta])

    def qstate(self) -> QState:
        return QState(qubit_layout(PROBE), self.vector())


@dataclass(frozen=True)
class QubitDensity:
    """System qubit state; rho11 refers to |1> (ground), rho22 to |2> (excited)."""

    rho11: float
    rho22: float
    rho12: complex
    strict: InitVar[bool] = True

    def __post_init__(self, strict):
        object.__setattr__(self, "rho11", float(self.rho11))
        object.__setattr__(self, "rho22", float(self.rho22))
        object.__setattr__(self, "rho12", complex(self.rho12))
        if abs(self.rho11 + self.rho22 - 1) > 1e-12:
            raise ValueError(f"populations sum to {self.rho11 + self.rho22}, not 1")
        if strict and not self.is_physical:
            raise ValueError(f"not a valid density matrix: {self}")

    @property
    def rho21(self) -> complex:
        return self.rho12.conjugate()

    @property
    def is_physical(self) -> bool:
        return (
            self.rho11 >= -1e-12
            and self.rho22 >= -1e-12
            and abs(self.rho12) ** 2 <= self.rho11 * self.rho22 + 1e-12
        )

    def matrix(self) -> np.ndarray:
        return np.array([[self.rho11, self.rho12], [self.rho21, self.rho22]])

    def qstate(self) -> QState:
        return QState(qubit_layout("system"), self.matrix())

    @classmethod
    def from_pure(cls, c1: complex, c2: complex) -> "QubitDensity":
        v = np.array([c1, c2], dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(abs(v[0]) ** 2, 1 - abs(v[0]) ** 2, v[0] * v[1].conjugate())

    @classmethod
    def from_matrix(cls, m: np.ndarray, strict: bool = True) -> "QubitDensity":
        m = np.asarray(m)
        return cls(m[0, 0].real, 1 - m[0, 0].real, m[0, 1], strict=strict)


@dataclass(frozen=True)
class DerivativeReport:
    values: dict[int, float]
    method: str  # exact-adjoint | closed-form | polynomial-fit
    uncertainties: Optional[dict[int, float]] = None
    fit: dict = field(default_factory=dict)
    unit: str = TimeUnit.TAU.value

    def __post_init__(self):
        if self.method not in ("exact-adjoint", "closed-form", "polynomial-fit"):
            raise ValueError(f"unknown derivative method {self.method!r}")
        noisy = self.method == "polynomial-fit" and self.fit.get("shots") is not None
        if noisy != (self.uncertainties is not None):
            raise ValueError("uncertainties belong to shot-sampled polynomial fits only")

    def __getitem__(self, order: int) -> float:
        return self.values[order]

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "unit": self.unit,
            "fit": self.fit,
            "derivatives": [
                {
                    "order": k,
                    "value": self.values[k],
                    "uncertainty": None if self.uncertainties is None else self.uncertainties[k],
                }
                for k in sorted(self.values)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "DerivativeReport":
        values = {int(e["order"]): float(e["value"]) for e in d["derivatives"]}
        unc = None
        if any(e["uncertainty"] is not None for e in d["derivatives"]):
            unc = {int(e["order"]): float(e["uncertainty"]) for e in d["derivatives"]}
        return cls(values, d["method"], unc, dict(d.get("fit", {})), d.get("unit", "tau"))


def probe_excited_projector(layout) -> Operator:
    return embed(qubit_operators()["e"], PROBE, layout)


def adjoint_power(
    observable: Operator,
    H: Optional[Operator],
    generator: Optional[LindbladGenerator] = None,
    order: int = 1,
) -> list[np.ndarray]:
    """[X, A^dag X, ..., (A^dag)^order X] for the adjoint generator
    A^dag(X) = i[H, X] + sum_k r_k (J^dag X J - {J^dag J, X}/2)."""
    if order < 0 or order > MAX_ORDER:
        raise ValueError(f"derivative order {order} unsupported (max {MAX_ORDER})")
    layout = observable.layout
    if H is not None and H.layout != layout:
        raise LayoutError("Hamiltonian layout differs from observable layout")
    if generator is not None and generator.layout != layout:
        raise LayoutError("generator layout differs from observable layout")
    h = None if H is None else H.data
    x = observable.data.astype(complex)
    out = [x]
    for _ in range(order):
        nxt = np.zeros_like(x) if h is None else 1j * (h @ x - x @ h)
        if generator is not None:
            nxt = nxt + generator.adjoint(x)
        x = nxt
        out.append(x)
    return out


def heisenberg_derivatives(
    rho0: QState,
    H: Optional[Operator],
    generator: Optional[LindbladGenerator] = None,
    max_order: int = MAX_ORDER,
    coupling_scale: float = 1.0,
    observable: Optional[Operator] = None,
) -> list[float]:
    """[d^k <O>/d tau^k at 0 for k = 0..max_order] with tau = coupling_scale * t.

    O defaults to |e><e| on the probe slot.
    """
    obs = probe_excited_projector(rho0.layout) if observable is None else observable
    if obs.layout != rho0.layout:
        raise LayoutError("observable layout differs from state layout")
    rho = rho0.density()
    powers = adjoint_power(obs, H, generator, max_order)
    return [
        float(np.real(np.einsum("ij,ji->", rho, x))) / coupling_scale**k
        for k, x in enumerate(powers)
    ]


def derivative_at_zero_exact(
    rho0: QState,
    H: Optional[Operator],
    generator: Optional[LindbladGenerator] = None,
    order: int = 2,
    coupling_scale: float = 1.0,
    observable: Optional[Operator] = None,
) -> float:
    if order < 0 or order > MAX_ORDER:
        raise ValueError(f"derivative order {order} unsupported (max {MAX_ORDER})")
    return heisenberg_derivatives(rho0, H, generator, order, coupling_scale, observable)[order]


def first_derivative_quadrature(rho_a: QState, phi: float) -> float:
    """dP_e/dtau at 0 for a |+_phi> probe equals <X_{phi + pi/2}> of the mediator."""
    x = quadrature(rho_a.layout.dims[0], phi + np.pi / 2)
    return float(np.real(expectation(rho_a, Operator(rho_a.layout, x.data))))


def _coherence_term(rho_s: QubitDensity, phi: float) -> float:
    return float(np.real(rho_s.rho12 * np.exp(1j * phi) + rho_s.rho21 * np.exp(-1j * phi)))


def second_derivative_resonant(
    rho_s: QubitDensity, probe: ProbeState, p: ModelParams, x_phi: float = 0.0
) -> float:
    """-1 + (delta/g_p) <X_phi> - (g_s/2g_p)(rho12 e^{i phi} + rho21 e^{-i phi})."""
    if not probe.balanced:
        warnings.warn("closed form assumes |alpha| = |beta|", ProbeWarning, stacklevel=2)
    return -1 + (p.delta / p.g_p) * x_phi - (p.g_s / (2 * p.g_p)) * _coherence_term(rho_s, probe.phi)


def second_derivative_dispersive(
    rho_s: QubitDensity, p: ModelParams, unit: TimeUnit = TimeUnit.TAU_EFF
) -> float:
    diff = rho_s.rho22 - rho_s.rho11
    unit = TimeUnit(unit)
    if unit is TimeUnit.TAU_EFF:
        return diff
    if unit is TimeUnit.TAU:
        return (p.g_p / p.delta) ** 2 * diff
    raise ValueError(f"dispersive readout is defined in tau or tau_eff, not {unit.value}")


def second_derivative_collective(rho_s: QubitDensity, phi: float) -> float:
    """Second derivative in Gamma t for a |+_phi> probe sharing a decay channel with the system."""
    return 0.25 * ((rho_s.rho11 - rho_s.rho22) + 2 * (1 + _coherence_term(rho_s, phi)))


def third_derivative_bath_correction(probe: ProbeState, p: ModelParams) -> float:
    """Closed-form bath term (gamma/g)(|alpha|^2 - |beta|^2)(nbar_a - nbar_b)."""
    return (p.gamma / p.g_p) * (abs(probe.alpha) ** 2 - abs(probe.beta) ** 2) * (p.nbar_a - p.nbar_b)


def bath_third_derivative_shift(probe: ProbeState, p: ModelParams, d2_unitary: float) -> float:
    """Exact change of d^3 P_e/dtau^3 at 0 caused by the mediator bath.

    Valid for product initial states with a Fock-diagonal mediator:
    2 (gamma/g) dP (nbar_a - nbar_b) - (gamma / 2g) d2_unitary, where
    d2_unitary is the dissipation-free second derivative.  The second term
    comes from the damping of the probe-mediator coherence.
    """
    k = p.gamma / p.g_p
    return 2 * k * probe.delta_p * (p.nbar_a - p.nbar_b) - 0.5 * k * d2_unitary


def _fit(tau, values, degree, shots):
    scale = np.abs(tau).max()
    if scale == 0:
        raise FitFailure("fit window has zero width")
    design = np.vander(tau / scale, degree + 1, increasing=True)
    cond = np.linalg.cond(design)
    if cond > 1e10:
        raise FitFailure(f"design matrix condition number {cond:.3g} exceeds 1e10")
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    cov = None
    if shots is not None:
        pinv = np.linalg.pinv(design)
        p_hat = np.clip(design @ coef, 0.5 / shots, 1 - 0.5 / shots)
        var = p_hat * (1 - p_hat) / shots
        cov = (pinv * var) @ pinv.T
    powers = scale ** np.arange(degree + 1)
    coef = coef / powers
    if cov is not None:
        cov = cov / np.outer(powers, powers)
    return coef, cov, cond


def estimate_derivatives(
    series: TimeSeries,
    degree: int = 4,
    window: Optional[tuple[float, float]] = None,
    *,
    max_top_ratio: float = 0.01,
    shrink: float = 0.8,
    rwa_step: Optional[float] = None,
) -> DerivativeReport:
    """Least-squares polynomial fit around tau = 0; returns k! c_k for k <= min(degree, 3).

    Without an explicit window the fit starts on the whole series and the
    window shrinks until the highest-order term is below `max_top_ratio` of
    the quadratic term at the window edge.  `rwa_step` (g_p/omega_p) triggers
    a warning when a resonant-time series is sampled more finely than the
    rotating-wave model can describe.
    """
    if degree < 1:
        raise ValueError("degree must be at least 1")
    tau, vals = series.times, series.values
    if rwa_step is not None and series.unit is TimeUnit.TAU and len(tau) > 1:
        step = np.diff(tau).min()
        if step < rwa_step * (1 - 1e-9):
            warnings.warn(
                f"sampling step {step:.3g} is below g_p/omega_p = {rwa_step:.3g}; "
                "the rotating-wave model does not resolve such short intervals",
                SamplingWarning,
                stacklevel=2,
            )
    shots = None
    if series.shots is not None:
        if np.any(series.shots != series.shots[0]):
            raise ValueError("variable shot counts per point are not supported")
        shots = int(series.shots[0])

    auto = window is None
    lo, hi = (tau.min(), tau.max()) if auto else window
    converged = not auto
    while True:
        mask = (tau >= lo) & (tau <= hi)
        if mask.sum() < degree + 2:
            raise FitFailure(f"only {mask.sum()} samples in window [{lo}, {hi}] for degree {degree}")
        coef, cov, cond = _fit(tau[mask], vals[mask], degree, shots)
        if not auto or degree < 3:
            break
        edge = max(abs(lo), abs(hi))
        top = abs(coef[degree]) * edge**degree
        quad = abs(coef[2]) * edge**2
        if top < max_top_ratio * quad:
            converged = True
            break
        nxt = hi * shrink
        if ((tau >= lo) & (tau <= nxt)).sum() < degree + 2:
            break
        hi = nxt

    top_order = min(degree, MAX_ORDER)
    values = {k: float(math.factorial(k) * coef[k]) for k in range(top_order + 1)}
    unc = None
    if cov is not None:
        unc = {k: float(math.factorial(k) * math.sqrt(max(cov[k, k], 0.0))) for k in range(top_order + 1)}
    fit = {
        "degree": degree,
        "window": [float(lo), float(hi)],
        "samples": int(mask.sum()),
        "shots": shots,
        "condition": float(cond),
        "window_converged": bool(converged),
    }
    return DerivativeReport(values, "polynomial-fit", unc, fit, series.unit.value)


def sample_projection_noise(series: TimeSeries, shots: int, seed: int) -> TimeSeries:
    """Replace each probability by a binomial(shots, p) frequency."""
    if not series.exact:
        raise ValueError("series is already shot-sampled")
    if shots <= 0:
        raise ValueError("shots must be positive")
    v = series.values
    if np.any(v < -1e-9) or np.any(v > 1 + 1e-9):
        raise ValueError("series values must be probabilities")
    rng = np.random.default_rng(seed)
    counts = rng.binomial(shots, np.clip(v, 0.0, 1.0))
    return TimeSeries(series.times, counts / shots, series.unit, np.full(v.shape, shots))
