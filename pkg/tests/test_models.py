import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mediprobe.dynamics import evolve, record
from mediprobe.hilbert import (
    QState,
    annihilation,
    basis_state,
    embed,
    expectation,
    mode_layout,
    number_operator,
    qubit_operators,
    random_density,
    thermal_state,
)
from mediprobe.models import (
    DispersiveRegimeWarning,
    IonParams,
    ModelParams,
    collective_decay_generator,
    dispersive_hamiltonian,
    excitation_number,
    ion_laser_hamiltonian,
    mode_bath_generator,
    red_sideband_hamiltonian,
    sideband_basis_rotation,
    thermal_bath_generator,
    tripartite_hamiltonian,
    two_qubit_layout,
)
from mediprobe.shorttime import probe_excited_projector

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_params_validation_and_detuning():
    p = ModelParams(omega_a=70)
    assert p.delta == 30
    assert p.replace(omega_a=100).delta == 0
    with pytest.raises(ValueError):
        ModelParams(omega_a=70, delta=29)
    for bad in ({"g_p": 0}, {"gamma": -1}, {"nbar_b": -0.1}, {"cutoff": 1}):
        with pytest.raises(ValueError):
            ModelParams(**bad)
    assert ModelParams.dispersive(30).delta == 30


def test_ion_params():
    ip = IonParams(rabi=0.1, eta=0.05)
    assert ip.detuning == -1.0
    assert ip.lamb_dicke_ok(1.0)
    assert not IonParams(rabi=0.1, eta=0.3).lamb_dicke_ok(1.0)
    with pytest.raises(ValueError):
        IonParams(rabi=0.1, eta=0)


def test_tripartite_hamiltonian_structure():
    p = ModelParams(omega_a=90, g_s=0.7, cutoff=8)
    h = tripartite_hamiltonian(p)
    assert h.is_hermitian()
    c = (h @ excitation_number(p.cutoff) - excitation_number(p.cutoff) @ h).data
    assert np.abs(c).max() < 1e-12


def test_vacuum_rabi_oscillation():
    p = ModelParams(g_s=0.0, cutoff=5)
    psi0 = basis_state(p.layout, 1, 0, 0)
    tau = np.linspace(0, 4, 81)
    e = probe_excited_projector(p.layout)
    series = record(evolve(tripartite_hamiltonian(p), psi0, tau), e)
    assert np.abs(series.values - np.cos(tau) ** 2).max() < 1e-8


def test_dispersive_hamiltonian_structure():
    p = ModelParams.dispersive(30.0, cutoff=6)
    h = dispersive_hamiltonian(p)
    assert h.is_hermitian()
    n = embed(number_operator(6), "mediator", p.layout)
    assert np.abs((h @ n - n @ h).data).max() == 0
    # |e, n=1, 1>: (1/30)[(+1 - 1) * 1 + <S+ S->] with <S+ S-> = 1
    state = basis_state(p.layout, 1, 1, 0)
    assert expectation(state, h).real == pytest.approx(1 / 30, abs=1e-14)


def test_dispersive_hamiltonian_guards():
    with pytest.raises(ValueError):
        dispersive_hamiltonian(ModelParams(omega_a=70, g_s=0.5))
    with pytest.raises(ValueError):
        dispersive_hamiltonian(ModelParams(omega_a=70, omega_s=90))
    with pytest.warns(DispersiveRegimeWarning):
        dispersive_hamiltonian(ModelParams.dispersive(5.0, nbar_a=1.0, cutoff=4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dispersive_hamiltonian(ModelParams.dispersive(30.0, nbar_a=1.0, cutoff=4))


def _block_eigenvalues(h, layout, levels):
    idx = [np.ravel_multi_index(lv, layout.dims) for lv in levels]
    return np.linalg.eigvalsh(h.data[np.ix_(idx, idx)])


@pytest.mark.parametrize("delta", [30.0, 60.0, 120.0])
def test_effective_model_matches_spectrum_at_second_order(delta):
    p = ModelParams.dispersive(delta, cutoff=4)
    full = _block_eigenvalues(tripartite_hamiltonian(p), p.layout, [(1, 0, 0), (0, 0, 1), (0, 1, 0)])
    eff = _block_eigenvalues(dispersive_hamiltonian(p), p.layout, [(1, 0, 0), (0, 0, 1)])
    # qubit-like doublet of the single-excitation block: drop the level nearest the bare mediator
    mediator_level = p.omega_a - p.omega_p
    qubit_like = np.sort(full[np.argsort(np.abs(full - mediator_level))[1:]])
    gap_full = qubit_like[1] - qubit_like[0]
    gap_eff = eff[1] - eff[0]
    assert gap_eff == pytest.approx(2 / delta, rel=1e-12)
    # leading mismatch is fourth order in g: |gap difference| <= 5 g^4 / delta^3
    assert abs(gap_full - gap_eff) <= 5 / delta**3


def test_bath_generator_examples():
    rho = QState(mode_layout(6), random_density(6, np.random.default_rng(0)))
    assert np.abs(mode_bath_generator(6, 0.0, 1.0).apply(rho.data)).max() == 0
    n_op = number_operator(40)
    thermal = thermal_state(1.5, 40)
    gen = mode_bath_generator(40, 0.2, 1.5)
    rate = np.trace(n_op.data @ gen.apply(thermal.data)).real
    assert abs(rate) < 1e-9


def test_bath_damping_rate_from_integrator():
    gen = mode_bath_generator(60, 0.1, 0.0)
    n_op = number_operator(60)
    h = 5.0 * n_op
    h_step = 1e-3
    traj = evolve(h, thermal_state(2.0, 60), [0.0, h_step, 2 * h_step], gen, observables=[n_op])
    n = record(traj, n_op).values
    slope = (-3 * n[0] + 4 * n[1] - n[2]) / (2 * h_step)
    assert slope == pytest.approx(-0.2, abs=1e-6)


def test_collective_decay_examples():
    p = ModelParams(collective_rate=0.7)
    h0, gen = collective_decay_generator(p)
    assert h0.is_hermitian()
    lay = two_qubit_layout()
    gg = basis_state(lay, 0, 0).density()
    assert np.abs(gen.apply(gg)).max() == 0
    singlet = QState(lay, np.array([0, 1, -1, 0]) / np.sqrt(2)).density()
    assert np.abs(gen.apply(singlet)).max() < 1e-15
    ee = basis_state(lay, 1, 1).density()
    assert gen.apply(ee)[3, 3].real == pytest.approx(-2 * 0.7)


@settings(max_examples=100)
@given(seeds, st.floats(0, 0.3), st.floats(0, 3), st.floats(0, 2))
def test_generators_preserve_trace_and_hermiticity(seed, gamma, nbar_b, rate):
    rng = np.random.default_rng(seed)
    p = ModelParams(gamma=gamma, nbar_b=nbar_b, collective_rate=rate, cutoff=4)
    for gen in (thermal_bath_generator(p), collective_decay_generator(p)[1]):
        rho = random_density(gen.layout.dim, rng)
        out = gen.apply(rho)
        assert abs(np.trace(out)) < 1e-10
        assert np.abs(out - out.conj().T).max() < 1e-10


@given(seeds)
def test_adjoint_is_dual_of_apply(seed):
    rng = np.random.default_rng(seed)
    gen = thermal_bath_generator(ModelParams(gamma=0.15, nbar_b=0.8, cutoff=3))
    rho = random_density(gen.layout.dim, rng)
    x = rng.normal(size=rho.shape) + 1j * rng.normal(size=rho.shape)
    x = x + x.conj().T
    assert np.trace(gen.apply(rho) @ x) == pytest.approx(np.trace(rho @ gen.adjoint(x)), abs=1e-10)


def test_ion_hamiltonian_limits():
    ip = IonParams(rabi=0.1, eta=1e-9, phase=0.4)
    t = 2.3
    h = ion_laser_hamiltonian(ip, t).data
    n = ip.cutoff
    carrier = 0.5 * ip.rabi * np.exp(1j * (ip.phase - ip.detuning * t)) * np.eye(n)
    assert np.allclose(h[n:, :n], carrier, atol=1e-9)
    real_eta = IonParams(rabi=0.1, eta=0.1)
    assert ion_laser_hamiltonian(real_eta, 0.37).is_hermitian()


def test_ion_series_cross_check():
    ip = IonParams(rabi=0.1, eta=0.05)
    exact = ion_laser_hamiltonian(ip, 1.1).data
    series = ion_laser_hamiltonian(ip, 1.1, series_order=6).data
    assert np.abs(exact - series).max() < 1e-9


def test_red_sideband_structure():
    ip = IonParams(rabi=0.2, eta=0.1, phase=0.3)
    h = red_sideband_hamiltonian(ip)
    assert h.is_hermitian()
    conserved = embed(qubit_operators()["e"], "ion", ip.layout) + embed(number_operator(ip.cutoff), "mediator", ip.layout)
    assert np.abs((h @ conserved - conserved @ h).data).max() < 1e-14


def test_red_sideband_vacuum_rabi():
    ip = IonParams(rabi=0.2, eta=0.1)
    t = np.linspace(0, 2 * np.pi / (ip.eta * ip.rabi), 50)
    series = record(evolve(red_sideband_hamiltonian(ip), basis_state(ip.layout, 1, 0), t),
                    embed(qubit_operators()["e"], "ion", ip.layout))
    assert np.abs(series.values - np.cos(ip.eta * ip.rabi * t / 2) ** 2).max() < 1e-8


def test_red_sideband_maps_to_jaynes_cummings():
    ip = IonParams(rabi=0.2, eta=0.1)
    r = sideband_basis_rotation(ip)
    rotated = r @ red_sideband_hamiltonian(ip) @ r.dag()
    q = qubit_operators()
    a = embed(annihilation(ip.cutoff), "mediator", ip.layout)
    sp = embed(q["sp"], "ion", ip.layout)
    g = ip.eta * ip.rabi / 2
    jc = g * (sp @ a + sp.dag() @ a.dag())
    assert np.abs((rotated - jc).data).max() < 1e-15
    assert np.allclose(np.linalg.eigvalsh(red_sideband_hamiltonian(ip).data), np.linalg.eigvalsh(jc.data))

