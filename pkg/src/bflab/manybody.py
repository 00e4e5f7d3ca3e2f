"""Exact few-body Schrodinger dynamics on tiny 1-d grids.

The full wave function psi(x_1..x_M; y_1..y_N) is stored as a dense tensor
over grid^(M+N) (fermion slots first) and propagated with Strang splitting
of H = sum_i (hbar^2/2 m_F)(-Lap_i) + sum_j (hbar^2/2 m_B)(-Lap_j)
      + lam sum_{ij} V(x_i - y_j):
kinetic phases act per slot in Fourier space, the interaction is a
position-diagonal phase.  Particle numbers are fixed, so the first-
quantized representation is exact; exchange symmetry is enforced at
construction and only monitored afterwards.  Reduced one-particle density
matrices normalized to Tr gamma_F = M and Tr gamma_B = N provide the
ground truth the mean-field approximation is tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, NumericsError
from .grids import Field, PotentialSpec, SpectralGrid
from .hartree import HHState, ScalingRegime, Trajectory, theorem1_envelope
from .phasespace import DenseKernel, to_dense

__all__ = [
    "ManyBodyState",
    "build_slater",
    "build_product",
    "combine",
    "evolve_exact",
    "reduced_densities",
    "theorem1_errors",
    "Theorem1ErrorSeries",
]

AMPLITUDE_BUDGET = 2**24


@dataclass
class ManyBodyState:
    """Normalized tensor psi over grid^(M+N); fermion slots first."""

    grid: SpectralGrid
    M: int
    N: int
    psi: np.ndarray

    SYM_TOL = 1e-10

    def __post_init__(self):
        if self.grid.d != 1:
            raise ValueError("the few-body oracle is 1-d only")
        if self.grid.n ** (self.M + self.N) > AMPLITUDE_BUDGET:
            raise BudgetError(
                f"n^(M+N) = {self.grid.n ** (self.M + self.N)} exceeds "
                f"{AMPLITUDE_BUDGET} amplitudes"
            )
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (self.grid.n,) * (self.M + self.N):
            raise ValueError("psi tensor shape does not match grid^(M+N)")

    def norm(self) -> float:
        w = self.grid.cell ** (self.M + self.N)
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * w))

    def antisymmetry_residual(self) -> float:
        """Max deviation of psi + P_ij psi over fermion transpositions."""
        worst = 0.0
        for i, j in itertools.combinations(range(self.M), 2):
            swapped = np.swapaxes(self.psi, i, j)
            worst = max(worst, float(np.max(np.abs(self.psi + swapped))))
        return worst

    def symmetry_residual(self) -> float:
        """Max deviation of psi - P_ij psi over boson transpositions."""
        worst = 0.0
        for i, j in itertools.combinations(range(self.N), 2):
            swapped = np.swapaxes(self.psi, self.M + i, self.M + j)
            worst = max(worst, float(np.max(np.abs(self.psi - swapped))))
        return worst

    def validate(self):
        n = self.norm()
        if abs(n - 1.0) > 1e-10:
            raise ValueError(f"|psi| = {n!r}, expected 1")
        scale = float(np.max(np.abs(self.psi)))
        if self.antisymmetry_residual() > self.SYM_TOL * max(scale, 1.0):
            raise ValueError("psi is not antisymmetric in the fermion slots")
        if self.symmetry_residual() > self.SYM_TOL * max(scale, 1.0):
            raise ValueError("psi is not symmetric in the boson slots")


def _orthonormality_deviation(orbitals: list[Field]) -> float:
    vecs = np.stack([o.values for o in orbitals])
    gram = (vecs @ vecs.conj().T) * orbitals[0].grid.cell
    return float(np.max(np.abs(gram - np.eye(len(orbitals)))))


def build_slater(orbitals: list[Field]) -> np.ndarray:
    """Slater tensor (1/sqrt(M!)) det[phi_i(x_j)] from orthonormal orbitals.

    Its one-particle reduced density equals sum_i |phi_i><phi_i|.
    """
    if _orthonormality_deviation(orbitals) > 1e-10:
        raise ValueError("Slater construction needs orthonormal orbitals")
    M = len(orbitals)
    grid = orbitals[0].grid
    psi = np.zeros((grid.n,) * M, dtype=complex)
    for perm in itertools.permutations(range(M)):
        sign = _perm_sign(perm)
        term = orbitals[perm[0]].values
        for slot in range(1, M):
            term = np.multiply.outer(term, orbitals[perm[slot]].values)
        psi = psi + sign * term
    return psi / math.sqrt(math.factorial(M))


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, cycle = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            cycle += 1
        if cycle % 2 == 0:
            sign = -sign
    return sign


def build_product(phi0: Field, N: int) -> np.ndarray:
    """Condensate tensor phi0(y_1) ... phi0(y_N)."""
    if abs(phi0.l2_norm() - 1.0) > 1e-10:
        raise ValueError("condensate orbital must be normalized")
    psi = phi0.values
    for _ in range(N - 1):
        psi = np.multiply.outer(psi, phi0.values)
    return psi


def combine(grid: SpectralGrid, fermion_tensor: np.ndarray,
            boson_tensor: np.ndarray, M: int, N: int) -> ManyBodyState:
    """psi = psi_F (x) psi_B as a single ManyBodyState."""
    psi = np.multiply.outer(fermion_tensor, boson_tensor)
    state = ManyBodyState(grid, M, N, psi)
    state.validate()
    return state


def _interaction_tensor(grid: SpectralGrid, V: PotentialSpec, M: int, N: int) -> np.ndarray:
    """U(x_1..x_M, y_1..y_N) = sum_{ij} V(x_i - y_j) via circulant lookups."""
    v = V.sample(grid)
    idx = np.arange(grid.n)
    pair = v[(idx[:, None] - idx[None, :]) % grid.n]  # V(x_a - x_b), even V
    total = np.zeros((grid.n,) * (M + N))
    for i in range(M):
        for j in range(N):
            shape = [1] * (M + N)
            shape[i] = grid.n
            shape[M + j] = grid.n
            total = total + pair.reshape(shape)
    return total


def evolve_exact(state: ManyBodyState, regime: ScalingRegime, V: PotentialSpec,
                 T: float, dt: float) -> ManyBodyState:
    """Strang-split propagation of exp(-i T H / hbar) psi.

    Kinetic half-steps apply per-slot spectral phases (fermion slots with
    m_F, boson slots with m_B); the interaction full step is the diagonal
    phase exp(-i dt lam sum_{ij} V(x_i-y_j)/hbar).  Norm and exchange
    symmetries are preserved to rounding.
    """
    n_steps = round(T / dt) if dt > 0 else 0
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    if n_steps == 0:
        return state
    grid = state.grid
    M, N = state.M, state.N
    k2 = grid.wavenumbers**2
    slot_phase_half = []
    for slot in range(M + N):
        mass = regime.m_F if slot < M else regime.m_B
        shape = [1] * (M + N)
        shape[slot] = grid.n
        slot_phase_half.append(
            np.exp(-1j * (dt / 2) * regime.hbar * k2 / (2 * mass)).reshape(shape)
        )
    kin_half = slot_phase_half[0]
    for ph in slot_phase_half[1:]:
        kin_half = kin_half * ph
    u = _interaction_tensor(grid, V, M, N)
    inter_phase = np.exp(-1j * dt * regime.lam * u / regime.hbar)

    psi = state.psi
    for _ in range(n_steps):
        psi = np.fft.ifftn(kin_half * np.fft.fftn(psi))
        psi = psi * inter_phase
        psi = np.fft.ifftn(kin_half * np.fft.fftn(psi))
    if not np.all(np.isfinite(psi)):
        raise NumericsError("non-finite amplitudes in evolve_exact")
    return ManyBodyState(grid, M, N, psi)


def many_body_energy(state: ManyBodyState, regime: ScalingRegime,
                     V: PotentialSpec) -> float:
    """<psi, H psi> for the conservation monitor."""
    grid = state.grid
    M, N = state.M, state.N
    w = grid.cell ** (M + N)
    psi_hat = np.fft.fftn(state.psi)
    k2 = grid.wavenumbers**2
    kin = 0.0
    for slot in range(M + N):
        mass = regime.m_F if slot < M else regime.m_B
        shape = [1] * (M + N)
        shape[slot] = grid.n
        kin += float(
            np.sum(k2.reshape(shape) * np.abs(psi_hat) ** 2)
            / grid.size**2 * grid.L ** (M + N)
        ) * regime.hbar**2 / (2 * mass)
    u = _interaction_tensor(grid, V, M, N)
    pot = float(np.sum(u * np.abs(state.psi) ** 2) * w) * regime.lam
    return kin + pot


def reduced_densities(state: ManyBodyState) -> tuple[DenseKernel, DenseKernel]:
    """(gamma_F, gamma_B) with Tr gamma_F = M, Tr gamma_B = N."""
    grid = state.grid
    M, N = state.M, state.N
    w = grid.cell ** (M + N - 1)
    a = state.psi.reshape(grid.n, -1)
    gamma_f = M * (a @ a.conj().T) * w
    moved = np.moveaxis(state.psi, M, 0).reshape(grid.n, -1)
    gamma_b = N * (moved @ moved.conj().T) * w
    return (DenseKernel(grid, gamma_f, hbar=1.0),
            DenseKernel(grid, gamma_b, hbar=1.0))


@dataclass
class Theorem1ErrorSeries:
    """Normalized trace-norm errors of the mean-field approximation."""

    times: np.ndarray
    err_fermion: np.ndarray     # (1/M) |gamma_F - omega|_Tr
    err_boson: np.ndarray       # (1/N) |gamma_B - N |phi><phi| |_Tr
    envelope_fermion: np.ndarray
    envelope_boson: np.ndarray
    fitted_C: float

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write("t,errF,errB,envelopeF,envelopeB\n")
            for row in zip(self.times, self.err_fermion, self.err_boson,
                           self.envelope_fermion, self.envelope_boson):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def theorem1_errors(psi_states: list[ManyBodyState], psi_times: np.ndarray,
                    hh_traj: Trajectory) -> Theorem1ErrorSeries:
    """Compare exact reduced densities against a mean-field trajectory.

    Time grids must match sample for sample; the envelope constant C is
    fitted as the smallest value whose fermion envelope dominates the
    measured fermion errors at every sample.
    """
    from .metrics import trace_norm

    hh_samples = list(hh_traj.states)
    errs_f, errs_b, times = [], [], []
    regime = hh_traj.states[0].regime
    for state, t in zip(psi_states, psi_times):
        hh: HHState = min(hh_samples, key=lambda s: abs(s.t - float(t)))
        if abs(hh.t - float(t)) > 1e-9 * max(1.0, abs(float(t))):
            raise ValueError(f"no mean-field sample at t={t}")
        if not state.grid.compatible(hh.grid):
            raise ValueError("oracle and mean-field grids differ")
        gamma_f, gamma_b = reduced_densities(state)
        omega = to_dense(hh.omega, hbar=regime.hbar)
        diff_f = DenseKernel(state.grid, gamma_f.values - omega.values, regime.hbar)
        phi_v = hh.phi.phi.values.reshape(-1)
        proj_b = regime.N * np.outer(phi_v, phi_v.conj())
        diff_b = DenseKernel(state.grid, gamma_b.values - proj_b, regime.hbar)
        errs_f.append(trace_norm(diff_f) / regime.M)
        errs_b.append(trace_norm(diff_b) / regime.N)
        times.append(float(t))
    times = np.asarray(times)
    errs_f = np.asarray(errs_f)
    errs_b = np.asarray(errs_b)
    c_fit = _fit_envelope_constant(regime, times, errs_f)
    env = np.asarray([theorem1_envelope(regime, t, c_fit) for t in times])
    return Theorem1ErrorSeries(times, errs_f, errs_b, env[:, 0], env[:, 1], c_fit)


def _fit_envelope_constant(regime: ScalingRegime, times: np.ndarray,
                           errors: np.ndarray) -> float:
    """Smallest C with envelope_F(C, t) >= errors(t) everywhere (bisection)."""

    def dominates(c: float) -> bool:
        return all(
            theorem1_envelope(regime, t, c)[0] >= e
            for t, e in zip(times, errors)
        )

    lo, hi = 1e-12, 1.0
    while not dominates(hi) and hi < 1e6:
        hi *= 2.0
    if not dominates(hi):
        return hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if dominates(mid):
            hi = mid
        else:
            lo = mid
    return hi
