"""Independent oracles the test suite checks the fast paths against.

Everything here is deliberately naive: direct O(n^2d) summation, dense
matrix exponentials, explicit ODE integration, exhaustive enumeration.
None of it shares code with the spectral implementations.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import expm

from bflab.grids import SpectralGrid


def direct_convolution(v: np.ndarray, rho: np.ndarray, spacing: float) -> np.ndarray:
    """(V * rho)(x_i) = sum_j V(x_{i-j}) rho(x_j) spacing^d by explicit loops."""
    d = v.ndim
    n = v.shape[0]
    out = np.zeros(v.shape, dtype=complex)
    for idx in itertools.product(range(n), repeat=d):
        acc = 0.0 + 0.0j
        for jdx in itertools.product(range(n), repeat=d):
            diff = tuple((i - j) % n for i, j in zip(idx, jdx))
            acc += v[diff] * rho[jdx]
        out[idx] = acc * spacing**d
    return out


def spectral_laplacian_matrix(grid: SpectralGrid) -> np.ndarray:
    """Dense matrix of -Laplace on the periodic grid (1-d), Fourier route."""
    n = grid.n
    F = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    k2 = grid.wavenumbers**2
    return np.conj(F.T) @ np.diag(k2) @ F / n


def dense_free_propagator(grid: SpectralGrid, tau: float, mass: float,
                          hbar: float) -> np.ndarray:
    """expm(-i tau hbar (-Lap) / (2 mass)) as a dense matrix (1-d)."""
    lap = spectral_laplacian_matrix(grid)
    return expm(-1j * tau * hbar * lap / (2.0 * mass))


def momentum_matrix(grid: SpectralGrid, hbar: float) -> np.ndarray:
    """Dense p_hat = -i hbar d/dx via the spectral representation (1-d)."""
    n = grid.n
    F = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    return np.conj(F.T) @ np.diag(hbar * grid.wavenumbers) @ F / n


def semiclassical_observable_matrix(grid: SpectralGrid, xi: float, eta: float,
                                    hbar: float) -> np.ndarray:
    """O_{xi,eta} = e^{i xi x/2} expm(i eta p_hat) e^{i xi x/2}, dense (1-d)."""
    phase = np.diag(np.exp(0.5j * xi * grid.axis_points))
    trans = expm(1j * eta * momentum_matrix(grid, hbar))
    return phase @ trans @ phase


def dense_hh_reference(grid: SpectralGrid, v_samples: np.ndarray, regime,
                       omega0: np.ndarray, phi0: np.ndarray, T: float,
                       dt: float, rule: str = "midpoint"):
    """Explicit ODE integration of the coupled mean-field system (1-d).

    omega is evolved as a dense matrix under
      d/dt omega = -(i/hbar) [h_F(omega, phi), omega],
      d/dt phi   = -(i/hbar) h_B(omega, phi) phi,
    with the midpoint rule (or RK4 for reference-grade accuracy).
    Kernel normalization: omega is the kernel, matrix = kernel * spacing.
    """
    n = grid.n
    h = grid.spacing
    lap = spectral_laplacian_matrix(grid)
    idx = np.arange(n)
    v_circ = v_samples[(idx[:, None] - idx[None, :]) % n]

    def rhs(omega, phi):
        rho_b = np.abs(phi) ** 2
        rho_f = np.real(np.diag(omega)) / regime.M
        pot_f = (v_circ @ rho_b) * h          # (V * rho_B)(x)
        pot_b = (v_circ @ rho_f) * h
        h_f = regime.hbar**2 / (2 * regime.m_F) * lap \
            + regime.lam * regime.N * np.diag(pot_f)
        h_b = regime.hbar**2 / (2 * regime.m_B) * lap \
            + regime.lam * regime.M * np.diag(pot_b)
        dom = (-1j / regime.hbar) * ((h_f @ (omega * h) - (omega * h) @ h_f) / h)
        dphi = (-1j / regime.hbar) * (h_b @ phi)
        return dom, dphi

    steps = round(T / dt)
    omega, phi = omega0.astype(complex).copy(), phi0.astype(complex).copy()
    for _ in range(steps):
        if rule == "midpoint":
            k1o, k1p = rhs(omega, phi)
            k2o, k2p = rhs(omega + 0.5 * dt * k1o, phi + 0.5 * dt * k1p)
            omega = omega + dt * k2o
            phi = phi + dt * k2p
        else:  # rk4
            k1o, k1p = rhs(omega, phi)
            k2o, k2p = rhs(omega + 0.5 * dt * k1o, phi + 0.5 * dt * k1p)
            k3o, k3p = rhs(omega + 0.5 * dt * k2o, phi + 0.5 * dt * k2p)
            k4o, k4p = rhs(omega + dt * k3o, phi + dt * k3p)
            omega = omega + dt / 6 * (k1o + 2 * k2o + 2 * k3o + k4o)
            phi = phi + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return omega, phi


def wigner_quadrature(kernel: np.ndarray, grid: SpectralGrid, hbar: float,
                      x_points: np.ndarray, p_points: np.ndarray,
                      ny: int = 512) -> np.ndarray:
    """Direct quadrature of the defining Wigner integral (1-d).

    Integrates the band-limited (periodized) kernel over one full offset
    period y in [-L, L) with a midpoint rule; reproduces the doubled-
    lattice values including the antipodal images.
    """
    n = grid.n
    L = grid.L
    coeffs = np.fft.ifft(np.fft.fft(kernel, axis=0), axis=1) / n
    ks = grid.wavenumbers

    def k_interp(a, b):
        ea = np.exp(1j * np.outer(a, ks))
        eb = np.exp(-1j * np.outer(b, ks))
        return np.einsum("yk,kl,yl->y", ea, coeffs, eb)

    ys = -L + 2 * L * (np.arange(ny) + 0.5) / ny
    out = np.zeros((len(x_points), len(p_points)))
    for i, x in enumerate(x_points):
        diag = k_interp(x + ys / 2, x - ys / 2)
        for j, p in enumerate(p_points):
            val = np.sum(diag * np.exp(-1j * ys * p / hbar)) * (2 * L / ny)
            out[i, j] = np.real(val) / (2 * np.pi)
    return out


def ot_bruteforce_uniform(points_a: np.ndarray, points_b: np.ndarray,
                          periods=None) -> float:
    """Exact W2 for equal-size uniform-weight point sets: min over
    permutation plans (the Birkhoff vertices)."""
    m = points_a.shape[0]
    diff_cost = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            delta = points_a[i] - points_b[j]
            if periods is not None:
                for c, L in enumerate(periods):
                    if L and L > 0:
                        delta[c] = (delta[c] + L / 2) % L - L / 2
            diff_cost[i, j] = np.sum(delta**2)
    best = np.inf
    for perm in itertools.permutations(range(m)):
        cost = sum(diff_cost[i, perm[i]] for i in range(m)) / m
        best = min(best, cost)
    return float(np.sqrt(best))


def partial_trace_fermion(psi: np.ndarray, M: int, N: int, spacing: float) -> np.ndarray:
    """gamma_F by explicit index contraction (independent of reshape tricks)."""
    n = psi.shape[0]
    gamma = np.zeros((n, n), dtype=complex)
    rest_axes = psi.reshape(n, -1)
    for a in range(n):
        for b in range(n):
            gamma[a, b] = np.sum(rest_axes[a] * np.conj(rest_axes[b]))
    return M * gamma * spacing ** (M + N - 1)


def partial_trace_boson(psi: np.ndarray, M: int, N: int, spacing: float) -> np.ndarray:
    moved = np.moveaxis(psi, M, 0)
    n = psi.shape[0]
    rest = moved.reshape(n, -1)
    gamma = np.zeros((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            gamma[a, b] = np.sum(rest[a] * np.conj(rest[b]))
    return N * gamma * spacing ** (M + N - 1)


def dense_many_body_hamiltonian(grid: SpectralGrid, regime, v_samples: np.ndarray,
                                M: int, N: int) -> np.ndarray:
    """Full H as a dense matrix over the n^(M+N) product basis (1-d).

    Discrete-space convention: the interaction is diagonal, the kinetic
    term is the spectral Laplacian per slot.
    """
    n = grid.n
    dim = n ** (M + N)
    lap = spectral_laplacian_matrix(grid)
    H = np.zeros((dim, dim), dtype=complex)
    eye = [np.eye(n)] * (M + N)
    for slot in range(M + N):
        mass = regime.m_F if slot < M else regime.m_B
        ops = list(eye)
        ops[slot] = regime.hbar**2 / (2 * mass) * lap
        term = ops[0]
        for op in ops[1:]:
            term = np.kron(term, op)
        H += term
    idx = np.arange(n)
    v_circ = v_samples[(idx[:, None] - idx[None, :]) % n]
    diag = np.zeros((n,) * (M + N))
    for i in range(M):
        for j in range(N):
            shape = [1] * (M + N)
            shape[i] = n
            shape[M + j] = n
            diag = diag + v_circ.reshape(shape)
    H += regime.lam * np.diag(diag.reshape(-1))
    return H
