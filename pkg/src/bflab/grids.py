"""Periodic spectral grids, Fourier-space operators and convolution potentials.

Everything downstream (mean-field solvers, phase-space transforms, the
few-body oracle) stores fields on a uniform periodic grid over [0, L)^d and
differentiates/convolves in Fourier space.  Conventions used throughout:

* grid points  x_j = j * spacing,  spacing = L / n
* wavenumbers  k = 2*pi*fftfreq(n, spacing), FFT-standard ordering
  (0, 1, ..., n/2-1, -n/2, ..., -1) * (2*pi/L)
* discrete L2 inner product  <u, v> = sum(conj(u) * v) * spacing**d
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 3

__all__ = [
    "SpectralGrid",
    "Field",
    "PotentialSpec",
    "make_grid",
    "min_image",
    "convolve",
    "kinetic_phase",
]


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on [0, L)^d with its Fourier dual."""

    d: int
    n: int
    L: float

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell(self) -> float:
        """Volume element spacing**d."""
        return self.spacing**self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def axis_points(self) -> np.ndarray:
        """Grid coordinates along one axis."""
        return np.arange(self.n) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        """FFT-ordered wavenumbers 2*pi*k/L along one axis."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    def coordinate_mesh(self) -> list[np.ndarray]:
        """Position meshes, one (n,)*d array per dimension."""
        axes = [self.axis_points] * self.d
        return list(np.meshgrid(*axes, indexing="ij"))

    def wavenumber_mesh(self) -> list[np.ndarray]:
        axes = [self.wavenumbers] * self.d
        return list(np.meshgrid(*axes, indexing="ij"))

    def k_squared(self) -> np.ndarray:
        """|k|^2 on the full Fourier grid."""
        k2 = np.zeros(self.shape)
        for km in self.wavenumber_mesh():
            k2 += km**2
        return k2

    def compatible(self, other: "SpectralGrid") -> bool:
        return (
            self.d == other.d
            and self.n == other.n
            and math.isclose(self.L, other.L, rel_tol=1e-14, abs_tol=0.0)
        )


def make_grid(d: int, n: int, L: float) -> SpectralGrid:
    """Build a d-dimensional periodic grid with n points per axis on [0, L)^d.

    n must be even (>= 4) so the wavenumber set is the standard symmetric
    one plus the single Nyquist mode -n/2; d is capped at 3 to keep
    phase-space tensors (2d axes) in memory.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if n % 2 != 0:
        raise ValueError(f"points per dimension must be even, got {n}")
    if n < 4:
        raise ValueError(f"need at least 4 points per dimension, got {n}")
    if not (L > 0):
        raise ValueError(f"box length must be positive, got {L}")
    return SpectralGrid(d=d, n=n, L=float(L))


@dataclass
class Field:
    """A complex scalar field sampled on a SpectralGrid."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell))

    def inner(self, other: "Field") -> complex:
        _check_same_grid(self.grid, other.grid)
        return complex(np.sum(np.conj(self.values) * other.values) * self.grid.cell)

    def normalized(self) -> "Field":
        nrm = self.l2_norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero field")
        return Field(self.grid, self.values / nrm)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def _check_same_grid(a: SpectralGrid, b: SpectralGrid):
    if not a.compatible(b):
        raise ValueError("fields live on different grids")


def min_image(x: np.ndarray, L: float) -> np.ndarray:
    """Signed displacement folded into [-L/2, L/2)."""
    return (x + 0.5 * L) % L - 0.5 * L


@dataclass
class PotentialSpec:
    """Real even interaction potential V, sampled periodically.

    Supported kinds:
      zero                   V = 0
      gaussian               V(x) = amplitude * exp(-|x|^2 / (2 width^2)),
                             |x| the minimum-image distance
      cosine                 V(x) = amplitude * prod_i cos(2 pi mode x_i / L)
      tabulated              caller-supplied samples on the grid
    """

    kind: str
    amplitude: float = 1.0
    width: float = 1.0
    mode: int = 1
    values: np.ndarray | None = field(default=None, repr=False)

    KINDS = ("zero", "gaussian", "cosine", "tabulated")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "gaussian" and not (self.width > 0):
            raise ValueError("gaussian width must be positive")
        if self.kind == "tabulated" and self.values is None:
            raise ValueError("tabulated potential needs values")

    def sample(self, grid: SpectralGrid) -> np.ndarray:
        """Sample V on the grid and verify it is real and even to 1e-12."""
        if self.kind == "zero":
            v = np.zeros(grid.shape)
        elif self.kind == "gaussian":
            r2 = np.zeros(grid.shape)
            for xm in grid.coordinate_mesh():
                r2 += min_image(xm, grid.L) ** 2
            v = self.amplitude * np.exp(-r2 / (2.0 * self.width**2))
        elif self.kind == "cosine":
            v = np.full(grid.shape, self.amplitude)
            for xm in grid.coordinate_mesh():
                v = v * np.cos(2.0 * np.pi * self.mode * xm / grid.L)
        else:
            v = np.asarray(self.values, dtype=float)
            if v.shape != grid.shape:
                raise ValueError(
                    f"tabulated potential shape {v.shape} does not match grid {grid.shape}"
                )
        _check_even(v, grid)
        return v

    def regularity_diagnostic(self, grid: SpectralGrid) -> float:
        """sum_k <k>^2 |V_hat(k)| over grid modes (continuum-normalized).

        Always finite on a grid; reported so configs can compare how far a
        potential is from the regularity the error estimates assume.
        """
        v = self.sample(grid)
        vhat = np.fft.fftn(v) * grid.cell
        bracket2 = 1.0 + grid.k_squared()
        # integral over the dual lattice, cell (2 pi / L)^d
        dual_cell = (2.0 * np.pi / grid.L) ** grid.d
        return float(np.sum(bracket2 * np.abs(vhat)) * dual_cell)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gaussian":
            out.update(amplitude=self.amplitude, width=self.width)
        elif self.kind == "cosine":
            out.update(amplitude=self.amplitude, mode=self.mode)
        elif self.kind == "tabulated":
            out["values"] = np.asarray(self.values).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        kind = data.get("kind")
        if kind == "tabulated":
            return cls(kind="tabulated", values=np.asarray(data["values"], dtype=float))
        kwargs = {k: data[k] for k in ("amplitude", "width", "mode") if k in data}
        return cls(kind=kind, **kwargs)


def _check_even(v: np.ndarray, grid: SpectralGrid, tol: float = 1e-12):
    if np.max(np.abs(np.imag(v))) > tol * max(1.0, np.max(np.abs(v))):
        raise ValueError("potential must be real-valued")
    # evenness on the torus: V(x) == V(L - x), i.e. index j <-> (-j) mod n
    mirrored = v
    for ax in range(grid.d):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    dev = np.max(np.abs(v - mirrored))
    if dev > tol * max(1.0, np.max(np.abs(v))):
        raise ValueError(f"potential must be even, V(-x)=V(x); deviation {dev:.3e}")


def convolve(V: PotentialSpec, rho: Field) -> Field:
    """Periodic convolution (V * rho)(x) = sum_y V(x-y) rho(y) spacing^d.

    Computed spectrally; the imaginary residue is checked against 1e-12
    and discarded.  rho must be real-valued.
    """
    grid = rho.grid
    rho_v = rho.values
    if np.max(np.abs(np.imag(rho_v))) > 1e-12 * max(1.0, np.max(np.abs(rho_v))):
        raise ValueError("convolve expects a real density")
    v = V.sample(grid)
    out = np.fft.ifftn(np.fft.fftn(v) * np.fft.fftn(rho_v)) * grid.cell
    scale = max(1.0, float(np.max(np.abs(out))))
    resid = np.max(np.abs(np.imag(out)))
    if resid > 1e-12 * scale:
        raise FloatingPointError(f"convolution imaginary residue {resid:.3e}")
    return Field(grid, np.real(out).astype(complex))


def kinetic_phase(psi: Field, tau: float, mass: float, hbar: float) -> Field:
    """Free propagator exp(-i tau hbar |k|^2 / (2 mass)) applied in Fourier space.

    Generator is (hbar^2/2m)(-Laplace) under i*hbar d/dt, hence the phase
    hbar |k|^2 tau / (2m) per mode; exactly unitary up to FFT rounding.
    """
    if not (mass > 0):
        raise ValueError("mass must be positive")
    if not (hbar > 0):
        raise ValueError("hbar must be positive")
    grid = psi.grid
    phase = np.exp(-1j * tau * hbar * grid.k_squared() / (2.0 * mass))
    return Field(grid, np.fft.ifftn(phase * np.fft.fftn(psi.values)))


def fourier_coefficients(psi: Field) -> np.ndarray:
    """Coefficients a_k of psi(x) = sum_k a_k exp(i k.x), FFT ordering."""
    return np.fft.fftn(psi.values) / psi.grid.size


def gradient_norm_sq(psi: Field) -> float:
    """|grad psi|_{L2}^2 = sum_k |k|^2 |a_k|^2 L^d."""
    grid = psi.grid
    a = fourier_coefficients(psi)
    return float(np.sum(grid.k_squared() * np.abs(a) ** 2) * grid.L**grid.d)
