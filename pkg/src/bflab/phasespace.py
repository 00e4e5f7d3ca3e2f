"""Transforms between density-matrix kernels and phase-space distributions.

The continuum pair implemented here is

    wigner:  f(x,p) = (1/(2 pi))^d  int K(x + y/2, x - y/2) e^{-i y.p/hbar} dy
    weyl:    K(x,x') = hbar^{-d}    int f((x+x')/2, p) e^{+i p.(x-x')/hbar} dp

with normalization  int f dx dp = hbar^d Tr K.

Discretely, the kernel on the n-point grid is first lifted to its unique
band-limited representative on the 2n-point half-step grid (a Hermiticity-
preserving spectral upsample).  Centers (x+x')/2 and offsets y = x-x' then
both live on exact grid points, the offset FFT is a plain 2n-point DFT, and
the momentum axis comes out as hbar * (dual of the offset axis): spacing
pi*hbar/L, extent [-pi*hbar*n/L, pi*hbar*n/L).  On this canonical pairing
the two maps above are exact mutual inverses, Hermitian kernels give real
distributions, and sum_p f dp = hbar^d diag(K) holds to rounding.

This is the standard doubled-lattice Wigner function of an even-dimension
periodic system: offsets span a full kernel period 2L, so every kernel
correlation appears twice and f obeys the exact antipodal ghost symmetry
f(x + L/2, p_l) = (-1)^l f(x, p_l) (momentum in FFT order).  Consequences
worth knowing: states localized away from x0 still imprint a signed image
at x0 + L/2 (it integrates to zero against any momentum-band-limited test
function); the L2 identity carries the cover multiplicity,
hbar^d |K|_HS^2 = pi^d * sum f^2 * cell in d dimensions; masses and
p-marginals are unaffected because the ghost alternates in p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError
from .grids import Field, SpectralGrid, make_grid, min_image
from .hartree import DensityMatrix
from .phasedist import MomentumAxis, PhaseSpaceDistribution

__all__ = [
    "DenseKernel",
    "CoherentState",
    "to_dense",
    "wigner",
    "weyl_quantize",
    "mollify",
    "antiwick_quantize",
    "coherent_state",
    "phase_space_grid_for",
    "kernel_fourier_coefficients",
]

DENSE_ROWS_MAX = 4096


@dataclass
class DenseKernel:
    """Operator kernel K(x, x') on grid x grid; matrix form is K * spacing^d."""

    grid: SpectralGrid
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        if self.grid.size > DENSE_ROWS_MAX:
            raise BudgetError(
                f"dense kernel would need {self.grid.size} rows "
                f"(budget {DENSE_ROWS_MAX})"
            )
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.size, self.grid.size):
            raise ValueError("kernel must be (n^d, n^d)")

    def operator_matrix(self) -> np.ndarray:
        """Matrix acting on coefficient vectors in the discrete L2 space."""
        return self.values * self.grid.cell

    def trace(self) -> float:
        return float(np.real(np.trace(self.values)) * self.grid.cell)

    def hermiticity_deviation(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        """Operator eigenvalues (Hermitian case), e.g. for PSD checks."""
        return np.linalg.eigvalsh(self.operator_matrix())


@dataclass
class CoherentState:
    """Gaussian wave packet of width sqrt(hbar) at a phase-space point."""

    center: tuple
    hbar: float
    grid: SpectralGrid
    profile: Field

    def projector(self) -> DenseKernel:
        v = self.profile.values.reshape(-1)
        return DenseKernel(self.grid, np.outer(v, v.conj()), self.hbar)


def coherent_state(grid: SpectralGrid, hbar: float, x0, p0) -> CoherentState:
    """Normalized (pi hbar)^(-d/4) exp(-|y-x0|^2/(2 hbar)) exp(i p0.(y-x0)/hbar).

    Displacements are minimum-image so the packet is caller-positionable
    anywhere on the torus; the phase is referenced to the packet center
    (a global phase relative to the whole-space convention).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    if x0.shape != (grid.d,) or p0.shape != (grid.d,):
        raise ValueError("x0, p0 must have one component per dimension")
    meshes = grid.coordinate_mesh()
    r2 = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for ax in range(grid.d):
        delta = min_image(meshes[ax] - x0[ax], grid.L)
        r2 += delta**2
        phase += p0[ax] * delta
    vals = np.exp(-r2 / (2.0 * hbar) + 1j * phase / hbar)
    f = Field(grid, vals).normalized()
    return CoherentState(tuple(x0), hbar, grid, f)


def to_dense(omega: DensityMatrix, hbar: float = 1.0) -> DenseKernel:
    """Materialize sum_i occ_i phi_i(x) conj(phi_i(x')) as a dense kernel."""
    a = omega.flat_orbitals()
    k = np.einsum("i,ix,iy->xy", omega.occupations, a, a.conj())
    return DenseKernel(omega.grid, k, hbar)


# --- band-limited half-step lift -------------------------------------------


def _pad_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Spectral upsample by 2 along one axis (frequencies -n/2 .. n/2-1)."""
    n = a.shape[axis]
    spec = np.fft.fft(a, axis=axis)
    shape = list(a.shape)
    shape[axis] = 2 * n
    out = np.zeros(shape, dtype=complex)
    idx_lo = [slice(None)] * a.ndim
    idx_lo[axis] = slice(0, n // 2)
    idx_hi_src = [slice(None)] * a.ndim
    idx_hi_src[axis] = slice(n // 2, n)
    idx_hi_dst = [slice(None)] * a.ndim
    idx_hi_dst[axis] = slice(2 * n - n // 2, 2 * n)
    out[tuple(idx_lo)] = spec[tuple(idx_lo)]
    out[tuple(idx_hi_dst)] = spec[tuple(idx_hi_src)]
    return np.fft.ifft(out, axis=axis) * 2.0


def _upsample_kernel(values: np.ndarray, d: int, n: int) -> np.ndarray:
    """Lift K to the 2n half-step grid; x'-axes use the conjugate window.

    Conjugating the primed axes keeps the lift Hermiticity-preserving:
    K2 = W K W^H with W the one-axis evaluation matrix.
    """
    k = values.reshape((n,) * (2 * d))
    for ax in range(d):
        k = _pad_axis(k, ax)
    k = k.conj()
    for ax in range(d, 2 * d):
        k = _pad_axis(k, ax)
    return k.conj()


def phase_space_grid_for(grid: SpectralGrid, hbar: float) -> tuple[SpectralGrid, MomentumAxis]:
    """Canonical (position, momentum) pair dual to a kernel grid at scale hbar."""
    xgrid2 = make_grid(grid.d, 2 * grid.n, grid.L)
    p_max = np.pi * hbar * grid.n / grid.L
    return xgrid2, MomentumAxis(2 * grid.n, p_max)


def _offset_diagonals(k2: np.ndarray, d: int, m2: int) -> np.ndarray:
    """F[c, m] = K2[(c+m) mod 2n, (c-m) mod 2n], axes (centers..., offsets...)."""
    idx = np.arange(m2)
    index_arrays = []
    for ax in range(d):
        c = idx.reshape((1,) * ax + (m2,) + (1,) * (2 * d - ax - 1))
        m = idx.reshape((1,) * (d + ax) + (m2,) + (1,) * (d - ax - 1))
        index_arrays.append((c + m) % m2)
    for ax in range(d):
        c = idx.reshape((1,) * ax + (m2,) + (1,) * (2 * d - ax - 1))
        m = idx.reshape((1,) * (d + ax) + (m2,) + (1,) * (d - ax - 1))
        index_arrays.append((c - m) % m2)
    return k2[tuple(index_arrays)]


def wigner(K: DenseKernel, herm_tol: float = 1e-8) -> PhaseSpaceDistribution:
    """Wigner transform of a Hermitian kernel onto the canonical (x, p) grid.

    Output positions live on the half-step (2n-point) grid; the momentum
    axis is hbar times the FFT dual of the offset axis.  For Hermitian K
    the result is real to rounding and satisfies
      sum_p f dp = hbar^d diag(K)   and   sum f dxdp = hbar^d Tr K.
    """
    grid, hbar = K.grid, K.hbar
    scale = max(1.0, float(np.max(np.abs(K.values))))
    if K.hermiticity_deviation() > herm_tol * scale:
        raise ValueError("wigner expects a Hermitian kernel")
    d, n = grid.d, grid.n
    k2 = _upsample_kernel(K.values, d, n)
    F = _offset_diagonals(k2, d, 2 * n)
    p_axes = tuple(range(d, 2 * d))
    f = np.fft.fftn(F, axes=p_axes) * (grid.spacing / (2.0 * np.pi)) ** d
    resid = np.max(np.abs(f.imag))
    if resid > 1e-12 * max(1.0, np.max(np.abs(f.real))):
        raise FloatingPointError(f"Wigner imaginary residue {resid:.3e}")
    f = np.fft.fftshift(f.real, axes=p_axes)
    xgrid2, paxis = phase_space_grid_for(grid, hbar)
    return PhaseSpaceDistribution(xgrid2, paxis, f)


def _check_canonical(f: PhaseSpaceDistribution, hbar: float) -> SpectralGrid:
    d = f.d
    n2 = f.xgrid.n
    if n2 % 2 != 0 or f.paxis.n != n2:
        raise ValueError("phase-space grid is not a canonical Weyl pairing")
    kernel_grid = make_grid(d, n2 // 2, f.xgrid.L)
    p_max = np.pi * hbar * kernel_grid.n / kernel_grid.L
    if abs(f.paxis.p_max - p_max) > 1e-9 * p_max:
        raise ValueError(
            f"momentum cutoff {f.paxis.p_max} incompatible with hbar={hbar}, "
            f"expected {p_max}"
        )
    return kernel_grid


def weyl_quantize(f: PhaseSpaceDistribution, hbar: float) -> DenseKernel:
    """Weyl quantization K(x,x') = hbar^-d sum_p f((x+x')/2, p) e^{ip(x-x')/hbar} dp.

    Requires f on the canonical pairing produced by phase_space_grid_for;
    exact inverse of `wigner` there.
    """
    kernel_grid = _check_canonical(f, hbar)
    d, n = kernel_grid.d, kernel_grid.n
    m2 = 2 * n
    p_axes = tuple(range(d, 2 * d))
    vals = np.fft.ifftshift(np.asarray(f.values, dtype=complex), axes=p_axes)
    G = np.fft.ifftn(vals, axes=p_axes) * (
        m2 * f.paxis.spacing / hbar
    ) ** d
    a = np.arange(n)
    index_arrays = []
    for ax in range(d):
        ai = a.reshape((1,) * ax + (n,) + (1,) * (2 * d - ax - 1))
        bi = a.reshape((1,) * (d + ax) + (n,) + (1,) * (d - ax - 1))
        index_arrays.append((ai + bi) % m2)
    for ax in range(d):
        ai = a.reshape((1,) * ax + (n,) + (1,) * (2 * d - ax - 1))
        bi = a.reshape((1,) * (d + ax) + (n,) + (1,) * (d - ax - 1))
        index_arrays.append((ai - bi) % m2)
    k = G[tuple(index_arrays)].reshape(n**d, n**d)
    return DenseKernel(kernel_grid, k, hbar)


def mollify(
    f: PhaseSpaceDistribution, hbar: float, variance: float | None = None
) -> PhaseSpaceDistribution:
    """Convolve f with the unit-mass Gaussian of per-axis variance `variance`.

    Default variance is hbar, i.e. the mollifier
    (2 pi hbar)^(-d) exp(-|z|^2 / (2 hbar)) on the 2d phase space; mass is
    preserved exactly (zero mode untouched).  Computed spectrally on the
    phase-space torus, so momentum support should stay clear of the cutoff.
    """
    sigma2 = hbar if variance is None else variance
    freqs = [f.xgrid.wavenumbers] * f.d + [f.paxis.dual_frequencies] * f.d
    zeta2 = np.zeros(f.values.shape)
    for ax, fr in enumerate(freqs):
        shape = [1] * (2 * f.d)
        shape[ax] = len(fr)
        zeta2 = zeta2 + fr.reshape(shape) ** 2
    mult = np.exp(-0.5 * sigma2 * zeta2)
    out = np.fft.ifftn(np.fft.fftn(f.values) * mult)
    return PhaseSpaceDistribution(f.xgrid, f.paxis, np.real(out))


def antiwick_quantize(f: PhaseSpaceDistribution, hbar: float) -> DenseKernel:
    """Positivity-preserving (Toeplitz) quantization of a nonnegative f.

    Equal to the coherent-state integral hbar^-d int f(z) |z><z| dz, which
    is the Weyl quantization of f smeared by the coherent-packet Gaussian:
    per-axis variance hbar/2.  PSD whenever f >= 0 (up to discretization).
    """
    floor = float(np.min(f.values))
    if floor < -1e-12 * max(1.0, float(np.max(np.abs(f.values)))):
        raise ValueError(f"anti-Wick quantization needs f >= 0, min f = {floor:.3e}")
    return weyl_quantize(mollify(f, hbar, variance=0.5 * hbar), hbar)


def antiwick_coherent(f: PhaseSpaceDistribution, hbar: float) -> DenseKernel:
    """Direct coherent-state route hbar^-d sum_z f(z) |z><z| cell.

    Independent of the spectral route in antiwick_quantize; quadratic in
    the grid size, intended for cross-validation at oracle scale.
    """
    kernel_grid = _check_canonical(f, hbar)
    d = f.d
    size = kernel_grid.size
    out = np.zeros((size, size), dtype=complex)
    xs = f.xgrid.axis_points
    ps = f.paxis.points
    cell = f.cell
    x_mesh = np.meshgrid(*([xs] * d), indexing="ij") if d > 1 else [xs]
    p_mesh = np.meshgrid(*([ps] * d), indexing="ij") if d > 1 else [ps]
    flat_vals = f.values.reshape(len(xs) ** d, len(ps) ** d)
    xf = np.stack([m.reshape(-1) for m in x_mesh], axis=-1)
    pf = np.stack([m.reshape(-1) for m in p_mesh], axis=-1)
    threshold = 1e-16 * max(1.0, float(np.max(np.abs(flat_vals))))
    for i in range(xf.shape[0]):
        for j in range(pf.shape[0]):
            w = flat_vals[i, j]
            if abs(w) <= threshold:
                continue
            v = coherent_state(kernel_grid, hbar, xf[i], pf[j]).profile.values.reshape(-1)
            out += (w * cell / hbar**d) * np.outer(v, v.conj())
    return DenseKernel(kernel_grid, out, hbar)


def kernel_fourier_coefficients(K: DenseKernel) -> np.ndarray:
    """Coefficients C with K(x,x') = sum_{k,k'} C[k,k'] e^{ikx} e^{-ik'x'}.

    Both frequency windows are the grid's standard FFT window; axes are
    returned in FFT order ((k-axes..., k'-axes...))."""
    d, n = K.grid.d, K.grid.n
    c = K.values.reshape((n,) * (2 * d)).astype(complex)
    for ax in range(d):
        c = np.fft.fft(c, axis=ax) / n
    for ax in range(d, 2 * d):
        c = np.fft.ifft(c, axis=ax)
    return c
