import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mediprobe.dynamics import (
    IntegratorFailure,
    PhysicalityError,
    TimeSeries,
    TimeUnit,
    Trajectory,
    evolve,
    record,
)
from mediprobe.hilbert import (
    LayoutError,
    Operator,
    QState,
    basis_state,
    embed,
    mode_layout,
    number_operator,
    quadrature,
    random_density,
    tensor,
    thermal_state,
    tripartite_layout,
)
from mediprobe.models import ModelParams, mode_bath_generator, thermal_bath_generator, tripartite_hamiltonian
from mediprobe.shorttime import ProbeState, probe_excited_projector

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_zero_hamiltonian_is_constant(rng):
    lay = tripartite_layout(3)
    rho = QState(lay, random_density(lay.dim, rng))
    traj = evolve(Operator.zero(lay), rho, np.linspace(0, 2, 5))
    assert all(np.allclose(s, rho.data) for s in traj.states)


@pytest.mark.parametrize("method", ["adaptive", "rk4", "spectral"])
@pytest.mark.parametrize("mixed", [False, True])
def test_vacuum_rabi_all_methods(method, mixed):
    p = ModelParams(g_s=0.0, omega_p=3.0, omega_s=3.0, omega_a=3.0, cutoff=4)
    psi = basis_state(p.layout, 1, 0, 1)
    psi = psi.as_mixed() if mixed else psi
    tau = np.linspace(0, 3, 31)
    traj = evolve(tripartite_hamiltonian(p), psi, tau, method=method, max_step=0.002 if method == "rk4" else None)
    assert traj.kind == ("mixed" if mixed else "pure")
    values = record(traj, probe_excited_projector(p.layout)).values
    assert np.abs(values - np.cos(tau) ** 2).max() < 1e-8


def test_damped_oscillator_relaxation_law():
    nbar_a, nbar_b, gamma = 2.0, 0.5, 0.2
    n = 70
    n_op = number_operator(n)
    t = np.linspace(0, 10, 21)
    traj = evolve(1.3 * n_op, thermal_state(nbar_a, n), t, mode_bath_generator(n, gamma, nbar_b))
    values = record(traj, n_op).values
    expected = nbar_b + (nbar_a - nbar_b) * np.exp(-gamma * t)
    assert np.abs(values - expected).max() < 1e-7
    traj.check()


def test_record_examples():
    p = ModelParams(nbar_a=1.0, cutoff=40)
    rho0 = tensor(ProbeState.plus(0.7).qstate(), thermal_state(1.0, 40), basis_state(tripartite_layout(40).sub(["system"]), 0))
    traj = evolve(tripartite_hamiltonian(p), rho0, [0.0, 0.1], method="spectral")
    ones = record(traj, Operator.identity(p.layout))
    assert np.allclose(ones.values, 1.0)
    assert record(traj, probe_excited_projector(p.layout)).values[0] == pytest.approx(0.5)
    x0 = embed(quadrature(40, 0.0), "mediator", p.layout)
    xs = record(traj, x0)
    assert abs(xs.values[0]) < 1e-14
    assert not xs.bounded


def test_record_rejects_non_hermitian():
    lay = mode_layout(3)
    traj = evolve(number_operator(3), QState(lay, np.eye(3) / 3), [0.0, 1.0])
    with pytest.raises(ValueError):
        record(traj, Operator(lay, np.triu(np.ones((3, 3)))))


def test_record_needs_states_or_tracked_observable():
    lay = mode_layout(3)
    rho = QState(lay, np.eye(3) / 3)
    traj = evolve(number_operator(3), rho, [0.0, 1.0], store_states=False)
    with pytest.raises(ValueError):
        record(traj, number_operator(3))


def test_evolve_argument_checks():
    lay = mode_layout(3)
    rho = QState(lay, np.eye(3) / 3)
    h = number_operator(3)
    with pytest.raises(ValueError):
        evolve(h, rho, [0.1, 0.2])
    with pytest.raises(ValueError):
        evolve(h, rho, [0.0, 0.2, 0.1])
    with pytest.raises(LayoutError):
        evolve(number_operator(4), rho, [0.0, 1.0])
    with pytest.raises(LayoutError):
        evolve(h, rho, [0.0, 1.0], mode_bath_generator(4, 0.1, 0.0))
    with pytest.raises(ValueError):
        evolve(h, rho, [0.0, 1.0], mode_bath_generator(3, 0.1, 0.0), method="spectral")
    with pytest.raises(ValueError):
        evolve(h, rho, [0.0, 1.0], method="leapfrog")
    with pytest.raises(ValueError):
        evolve(lambda t: h, rho, [0.0, 1.0], method="rk4")


def test_time_dependent_hamiltonian_matches_static():
    p = ModelParams(g_s=0.4, omega_p=2.0, omega_s=2.0, omega_a=2.0, cutoff=4)
    h = tripartite_hamiltonian(p)
    psi = basis_state(p.layout, 1, 0, 0)
    grid = np.linspace(0, 2, 11)
    static = record(evolve(h, psi, grid), probe_excited_projector(p.layout))
    dynamic = record(evolve(lambda t: h.data, psi, grid), probe_excited_projector(p.layout))
    assert np.abs(static.values - dynamic.values).max() < 1e-9


def test_non_finite_dynamics_raise():
    lay = mode_layout(3)
    bad = np.full((3, 3), np.nan)
    with pytest.raises(IntegratorFailure):
        evolve(lambda t: bad, QState(lay, np.eye(3) / 3), [0.0, 1.0])


def test_physicality_check_flags_bad_states():
    lay = mode_layout(2)
    states = np.array([np.eye(2) / 2, np.diag([1.2, -0.2])])
    traj = Trajectory(lay, np.array([0.0, 1.0]), 1.0, TimeUnit.TAU, "mixed", states)
    with pytest.raises(PhysicalityError):
        traj.check()


@settings(max_examples=15)
@given(seeds, st.floats(0, 0.3), st.floats(0, 3), st.floats(0, 2))
def test_lindblad_trajectories_stay_physical(seed, gamma, nbar_b, delta):
    rng = np.random.default_rng(seed)
    p = ModelParams(omega_p=2.0, omega_s=2.0, omega_a=2.0 - delta, gamma=gamma, nbar_b=nbar_b, cutoff=6)
    rho = QState(p.layout, random_density(p.layout.dim, rng, rank=int(rng.integers(1, 4))))
    traj = evolve(tripartite_hamiltonian(p), rho, np.linspace(0, 1, 6), thermal_bath_generator(p))
    report = traj.check()
    assert report["hermiticity"] < 1e-10


def test_unitary_evolution_preserves_purity(rng):
    p = ModelParams(omega_a=95, cutoff=5)
    psi = rng.normal(size=p.layout.dim) + 1j * rng.normal(size=p.layout.dim)
    rho = QState(p.layout, np.outer(psi, psi.conj()) / np.vdot(psi, psi).real)
    traj = evolve(tripartite_hamiltonian(p), rho, np.linspace(0, 1, 6))
    purity = np.einsum("tij,tji->t", traj.states, traj.states).real
    assert np.abs(purity - 1).max() < 1e-8


def test_pure_trajectory_norm():
    p = ModelParams(omega_a=95, cutoff=5)
    traj = evolve(tripartite_hamiltonian(p), basis_state(p.layout, 1, 2, 0), np.linspace(0, 5, 11))
    assert traj.physicality()["norm_drift"] < 1e-8


def test_tolerance_halving_converges():
    p = ModelParams(omega_a=98, gamma=0.1, nbar_b=0.5, cutoff=20)
    rho = tensor(ProbeState.plus().qstate(), thermal_state(0.3, 20), basis_state(tripartite_layout(20).sub(["system"]), 1))
    e = probe_excited_projector(p.layout)
    grid = np.linspace(0, 1, 11)
    tol = 1e-8
    runs = [record(evolve(tripartite_hamiltonian(p), rho, grid, thermal_bath_generator(p), tol=t), e).values
            for t in (tol, tol / 2)]
    assert np.abs(runs[0] - runs[1]).max() < 10 * tol


def test_spectral_agrees_with_adaptive(rng):
    p = ModelParams(omega_a=96, g_s=0.8, cutoff=6)
    rho = QState(p.layout, random_density(p.layout.dim, rng))
    grid = np.linspace(0, 2, 9)
    h = tripartite_hamiltonian(p)
    e = probe_excited_projector(p.layout)
    a = record(evolve(h, rho, grid, method="spectral"), e).values
    b = record(evolve(h, rho, grid), e).values
    assert np.abs(a - b).max() < 1e-8


def test_timeseries_units_and_csv(tmp_path):
    t = np.linspace(0, 1, 5)
    a = TimeSeries(t, np.full(5, 0.5), TimeUnit.TAU)
    b = TimeSeries(t, np.full(5, 0.25), "tau_eff")
    with pytest.raises(ValueError):
        a - b
    diff = a - TimeSeries(t, np.full(5, 0.25), TimeUnit.TAU)
    assert np.allclose(diff.values, 0.25)
    path = tmp_path / "s.csv"
    noisy = TimeSeries(t, np.array([0.1, 0.2, 0.3, 0.4, 0.5]), TimeUnit.TAU_EFF, shots=100)
    noisy.to_csv(path)
    back = TimeSeries.from_csv(path)
    assert back.unit is TimeUnit.TAU_EFF and np.array_equal(back.values, noisy.values)
    assert np.array_equal(back.shots, noisy.shots)
    assert path.read_text().splitlines()[0] == "time,value,shots,unit"


def test_timeseries_validation():
    t = np.linspace(0, 1, 3)
    with pytest.raises(ValueError):
        TimeSeries(t, np.array([0.0, 1.1, 0.5]), TimeUnit.TAU)
    with pytest.raises(ValueError):
        TimeSeries(t, np.array([0.0, 0.5, 0.5]), TimeUnit.TAU, shots=0)
    with pytest.raises(ValueError):
        TimeSeries(t, np.array([0.0, 0.5]), TimeUnit.TAU)
    TimeSeries(t, np.array([-5e-10, 0.5, 1 + 5e-10]), TimeUnit.TAU)


def test_trajectory_records_both_time_axes():
    p = ModelParams(cutoff=3)
    traj = evolve(tripartite_hamiltonian(p), basis_state(p.layout, 1, 0, 0), np.linspace(0, 2, 3),
                  time_scale=0.5, unit=TimeUnit.TAU)
    assert np.allclose(traj.tau, traj.times * 0.5)
    assert traj.meta["method"] == "adaptive"
