import numpy as np
import pytest

from bflab.grids import Field, PotentialSpec, make_grid
from bflab.hartree import (
    BosonField,
    DensityMatrix,
    HHState,
    ScalingRegime,
    boson_density,
    fermion_density,
    hh_energy,
    hh_evolve,
    hh_step,
    load_checkpoint,
    save_checkpoint,
    theorem1_envelope,
    window_exponent,
)
from bflab.phasespace import to_dense

from oracles import dense_hh_reference


def plane_wave_orbitals(grid, ks):
    x = grid.axis_points
    return np.stack([np.exp(1j * k * x) / np.sqrt(grid.L) for k in ks])


# --- scaling regimes --------------------------------------------------------


def test_microscopic_constructor_exact():
    r = ScalingRegime.microscopic(6, d=2)
    assert (r.lam, r.hbar, r.N, r.M) == (1 / 6, 1.0, 6, 6)
    assert (r.m_F, r.m_B) == (2.0, 2.0)
    assert all(r.check_theorem_conditions().values())


def test_macroscopic_constructor_exact():
    r = ScalingRegime.macroscopic(16, d=2)  # M = 4^2
    assert r.hbar == pytest.approx(0.25, abs=0)
    assert r.N == 64
    assert r.lam == pytest.approx(1 / 64, abs=0)
    assert r.m_B == r.hbar and r.m_F == 1.0
    assert all(r.check_theorem_conditions().values())
    with pytest.raises(ValueError):
        ScalingRegime.macroscopic(15, d=2)


def test_window_exponent_named_regimes():
    micro = ScalingRegime.microscopic(8)
    assert window_exponent(micro, 3) == 3.0
    mac3 = ScalingRegime.macroscopic(8, d=3)
    assert window_exponent(mac3, 1) == pytest.approx(1.0)
    mac2 = ScalingRegime.macroscopic(16, d=2)
    assert window_exponent(mac2, 1) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        window_exponent(ScalingRegime.macroscopic(4, d=1), 1)


def test_window_exponent_custom_search():
    # custom copy of the microscopic regime: threshold k solves
    # (lam sqrt(N)/hbar) M^l = (hbar M)^k, i.e. M^(l - 1/2) = M^k
    r = ScalingRegime(lam=1 / 8, hbar=1.0, m_F=2.0, m_B=2.0, N=8, M=8, d=1)
    k = window_exponent(r, 2)
    assert k == pytest.approx(1.5)
    # and the condition indeed holds with that k
    lhs = r.lam * np.sqrt(r.N) / r.hbar * r.M**2
    assert lhs <= (r.hbar * r.M) ** k * (1 + 1e-12)
    # impossible window: hbar*M <= 1 while the left side is large
    bad = ScalingRegime(lam=10.0, hbar=0.1, m_F=1.0, m_B=1.0, N=4, M=4, d=1)
    assert window_exponent(bad, 3) is None


def test_theorem1_envelope_values():
    # microscopic: lam sqrt(NM/hbar) = 1, sqrt(hbar M/N) = 1
    r = ScalingRegime.microscopic(4)
    env_f, env_b = theorem1_envelope(r, 0.0, 1.0)
    assert env_f == pytest.approx(0.5 * np.exp(2.0), rel=1e-14)
    assert env_b == pytest.approx(0.5 * np.exp(2.0), rel=1e-14)
    # macroscopic d=2, M=16: inner factor 1, sqrt(hbar M/N) = 1/4
    r2 = ScalingRegime.macroscopic(16, d=2)
    env_f2, _ = theorem1_envelope(r2, 0.7, 2.0)
    inner = r2.lam * np.sqrt(r2.N * r2.M / r2.hbar)
    assert inner == pytest.approx(1.0, rel=1e-14)
    expected = 2.0 / 4.0 * np.exp(2.0 * (1 + 0.25) * np.exp(0.7))
    assert env_f2 == pytest.approx(expected, rel=1e-13)


# --- densities --------------------------------------------------------------


def test_fermion_density_single_orbital():
    g = make_grid(1, 16, 4.0)
    x = g.axis_points
    phi = Field(g, np.exp(-((x - 2) ** 2))).normalized()
    dm = DensityMatrix.zero_temperature(g, phi.values[None, :])
    rho = fermion_density(dm)
    assert np.max(np.abs(rho.values - np.abs(phi.values) ** 2)) < 1e-14
    assert np.sum(rho.values.real) * g.cell == pytest.approx(1.0, abs=1e-10)


def test_fermion_density_plane_waves_constant():
    g = make_grid(1, 16, 2 * np.pi)
    dm = DensityMatrix.zero_temperature(g, plane_wave_orbitals(g, [0, 1]))
    rho = fermion_density(dm)
    assert np.max(np.abs(rho.values - 1 / (2 * np.pi))) < 1e-14


def test_fermion_density_matches_dense_diagonal():
    g = make_grid(1, 12, 3.0)
    rng = np.random.default_rng(2)
    raw = rng.normal(size=(3, 12)) + 1j * rng.normal(size=(3, 12))
    q, _ = np.linalg.qr(raw.T * np.sqrt(g.cell))
    orbs = (q / np.sqrt(g.cell)).T
    dm = DensityMatrix.zero_temperature(g, orbs)
    rho = fermion_density(dm)
    dense = to_dense(dm)
    oracle = np.real(np.diag(dense.values)) / 3
    assert np.max(np.abs(rho.values.real - oracle)) < 1e-10


def test_boson_density_examples():
    g = make_grid(1, 32, 6.0)
    x = g.axis_points
    phi = BosonField(g, Field(g, np.exp(-((x - 3) ** 2) / 0.5)).normalized())
    rho = boson_density(phi)
    assert np.sum(rho.values.real) * g.cell == pytest.approx(1.0, abs=1e-10)
    pw = BosonField(g, Field(g, np.exp(2j * np.pi * x / g.L)).normalized())
    assert np.max(np.abs(boson_density(pw).values - 1 / g.L)) < 1e-14
    rng = np.random.default_rng(0)
    vals = rng.normal(size=32) + 1j * rng.normal(size=32)
    f = Field(g, vals).normalized()
    assert np.max(np.abs(
        boson_density(BosonField(g, f)).values - np.abs(f.values) ** 2)) == 0.0


# --- the coupled step -------------------------------------------------------


def small_state(n=32, M=1, L=2 * np.pi, regime=None, seed=0):
    g = make_grid(1, n, L)
    x = g.axis_points
    regime = regime or ScalingRegime(lam=0.4, hbar=1.0, m_F=1.0, m_B=1.0,
                                     N=1, M=M, d=1)
    orbs = []
    for i in range(M):
        c = L * (i + 1) / (M + 2)
        orbs.append(np.exp(-((x - c) ** 2) / 0.6 + 0.4j * x))
    raw = np.stack(orbs)
    q, _ = np.linalg.qr(raw.T * np.sqrt(g.cell))
    dm = DensityMatrix.zero_temperature(g, (q / np.sqrt(g.cell)).T)
    phi = BosonField(g, Field(g, np.exp(-((x - L / 2) ** 2) / 0.8)).normalized())
    return HHState(dm, phi, regime, 0.0)


def test_hh_step_free_case_matches_kinetic_phase():
    from bflab.grids import kinetic_phase

    s = small_state()
    V = PotentialSpec("zero")
    cur = s
    for _ in range(10):
        cur = hh_step(cur, 0.05, V)
    r = s.regime
    expected = kinetic_phase(Field(s.grid, s.omega.orbitals[0]), 0.5, r.m_F, r.hbar)
    assert np.max(np.abs(cur.omega.orbitals[0] - expected.values)) < 1e-12
    expected_phi = kinetic_phase(s.phi.phi, 0.5, r.m_B, r.hbar)
    assert np.max(np.abs(cur.phi.phi.values - expected_phi.values)) < 1e-12


def test_hh_step_dt_zero_identity():
    s = small_state()
    out = hh_step(s, 0.0, PotentialSpec("gaussian"))
    assert out is s


def test_hh_step_norm_preservation():
    s = small_state(M=2)
    V = PotentialSpec("gaussian", amplitude=1.5, width=0.5)
    cur = s
    for _ in range(20):
        cur = hh_step(cur, 0.01, V)
        assert abs(cur.phi.norm() - 1.0) < 1e-12
        assert abs(cur.omega.trace() - 2.0) < 1e-12


def test_hh_step_matches_dense_oracle():
    # d=1, n=32, M=1, N=1, gaussian V, T=0.5, dt=1e-3
    s = small_state(n=32)
    V = PotentialSpec("gaussian", amplitude=1.0, width=0.6)
    T, dt = 0.5, 1e-3
    cur = s
    for _ in range(round(T / dt)):
        cur = hh_step(cur, dt, V)
    omega_ref, phi_ref = dense_hh_reference(
        s.grid, V.sample(s.grid), s.regime,
        to_dense(s.omega).values, s.phi.phi.values, T, dt / 4, rule="rk4",
    )
    got = to_dense(cur.omega).values
    diff = (got - omega_ref) * s.grid.cell
    trace_err = np.sum(np.linalg.svd(diff, compute_uv=False))
    assert trace_err < 1e-6
    phi_err = np.sqrt(np.sum(np.abs(cur.phi.phi.values - phi_ref) ** 2) * s.grid.cell)
    assert phi_err < 1e-6


def test_hh_step_convergence_order():
    # halving dt shrinks the deviation from a refined reference by >= 3.5x
    s = small_state(n=16)
    V = PotentialSpec("gaussian", amplitude=1.0, width=0.7)
    T = 0.2
    omega_ref, phi_ref = dense_hh_reference(
        s.grid, V.sample(s.grid), s.regime,
        to_dense(s.omega).values, s.phi.phi.values, T, 2e-5, rule="rk4",
    )

    def run(dt):
        cur = s
        for _ in range(round(T / dt)):
            cur = hh_step(cur, dt, V)
        diff = (to_dense(cur.omega).values - omega_ref) * s.grid.cell
        return np.sum(np.linalg.svd(diff, compute_uv=False))

    e1, e2 = run(4e-3), run(2e-3)
    assert e1 / e2 >= 3.5


def test_projection_propagation():
    s = small_state(n=32, M=3)
    V = PotentialSpec("gaussian", amplitude=1.0, width=0.5)
    cur = s
    for _ in range(200):
        cur = hh_step(cur, 5e-3, V)
    assert cur.omega.gram_deviation() <= 1e-8
    assert cur.omega.projection_deviation() <= 1e-7


def test_hh_energy_eigenstate_value():
    g = make_grid(1, 16, 2 * np.pi)
    orb = plane_wave_orbitals(g, [2])
    dm = DensityMatrix.zero_temperature(g, orb)
    phi = BosonField(g, Field(g, plane_wave_orbitals(g, [1])[0]).normalized())
    regime = ScalingRegime(lam=0.3, hbar=1.0, m_F=2.0, m_B=1.0, N=3, M=1, d=1)
    e = hh_energy(HHState(dm, phi, regime, 0.0), PotentialSpec("zero"))
    expected = 1.0 / (2 * 2.0) * 4.0 + 3 * 1.0 / (2 * 1.0) * 1.0
    assert e == pytest.approx(expected, rel=1e-12)


def test_hh_energy_interaction_only_direct_quadrature():
    g = make_grid(1, 16, 2 * np.pi)
    dm = DensityMatrix.zero_temperature(g, plane_wave_orbitals(g, [0]))
    phi = BosonField(g, Field(g, np.ones(16, dtype=complex)).normalized())
    regime = ScalingRegime(lam=0.5, hbar=1.0, m_F=1.0, m_B=1.0, N=2, M=1, d=1)
    V = PotentialSpec("cosine", amplitude=1.3, mode=2)
    e = hh_energy(HHState(dm, phi, regime, 0.0), V)
    vs = V.sample(g)
    rho = np.full(16, 1 / g.L)
    direct = 0.0
    for a in range(16):
        for b in range(16):
            direct += rho[a] * vs[(a - b) % 16] * rho[b] * g.cell**2
    assert e == pytest.approx(regime.lam * regime.N * regime.M * direct, abs=1e-12)


def test_hh_energy_gauge_invariance():
    s = small_state(M=2)
    V = PotentialSpec("gaussian", amplitude=0.9, width=0.4)
    e1 = hh_energy(s, V)
    phased = HHState(
        s.omega,
        BosonField(s.grid, Field(s.grid, np.exp(0.77j) * s.phi.phi.values)),
        s.regime, s.t,
    )
    assert hh_energy(phased, V) == pytest.approx(e1, rel=1e-13)


def test_hh_evolve_conservation_and_sampling():
    s = small_state(n=32, M=2)
    V = PotentialSpec("gaussian", amplitude=1.0, width=0.6)
    traj = hh_evolve(s, T=0.0, dt=1e-2, V=V)
    assert len(traj.states) == 1 and traj.states[0] is s
    traj = hh_evolve(s, T=1.0, dt=1e-3, V=V)
    e = traj.series["energy"]
    assert np.max(np.abs(e - e[0])) / abs(e[0]) <= 1e-6
    assert np.max(np.abs(traj.series["fermion_trace"] - 2.0)) <= 1e-10
    assert np.max(np.abs(traj.series["boson_norm"] - 1.0)) <= 1e-10
    assert np.max(traj.series["gram_deviation"]) <= 1e-8


def test_hh_evolve_requires_integer_steps():
    s = small_state()
    with pytest.raises(ValueError):
        hh_evolve(s, T=0.35, dt=0.1, V=PotentialSpec("zero"))


def test_checkpoint_roundtrip(tmp_path):
    s = small_state(M=2)
    path = str(tmp_path / "state.bfck")
    save_checkpoint(s, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.omega.orbitals, s.omega.orbitals)
    assert np.array_equal(back.phi.phi.values, s.phi.phi.values)
    assert back.regime == s.regime
    assert back.t == s.t


def test_density_matrix_validation():
    g = make_grid(1, 8, 1.0)
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(2, 8)) + 1j * rng.normal(size=(2, 8))
    with pytest.raises(ValueError):
        DensityMatrix(g, raw, np.ones(2), 2)  # not orthonormal
    q, _ = np.linalg.qr(raw.T * np.sqrt(g.cell))
    orbs = (q / np.sqrt(g.cell)).T
    with pytest.raises(ValueError):
        DensityMatrix(g, orbs, np.array([1.0, 0.5]), 2)  # trace mismatch
    with pytest.raises(ValueError):
        DensityMatrix(g, orbs, np.array([1.5, 0.5]), 2)  # occupation > 1
