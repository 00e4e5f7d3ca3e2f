"""Phase-space distributions f(x, p) on a tensor (position x momentum) grid.

Positions reuse SpectralGrid (periodic); the momentum axis is a uniform
symmetric FFT-style layout p_j = -p_max + j * dp with dp = 2 p_max / n,
so +p_max itself is absent, mirroring the single Nyquist convention of the
position wavenumbers.  Integrals over p use the plain cell-weighted sum,
which coincides with the trapezoid rule for distributions that decay
before the momentum cutoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grids import SpectralGrid

__all__ = ["MomentumAxis", "PhaseSpaceDistribution"]


@dataclass(frozen=True)
class MomentumAxis:
    """Uniform symmetric momentum axis [-p_max, p_max) with n points."""

    n: int
    p_max: float

    def __post_init__(self):
        if self.n < 2 or self.n % 2 != 0:
            raise ValueError("momentum axis needs an even number >= 2 of points")
        if not (self.p_max > 0):
            raise ValueError("p_max must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.p_max / self.n

    @property
    def points(self) -> np.ndarray:
        return -self.p_max + self.spacing * np.arange(self.n)

    @property
    def dual_frequencies(self) -> np.ndarray:
        """FFT-ordered frequencies conjugate to p (for spectral convolution)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    def compatible(self, other: "MomentumAxis") -> bool:
        return self.n == other.n and abs(self.p_max - other.p_max) <= 1e-12 * self.p_max


@dataclass
class PhaseSpaceDistribution:
    """Real f(x, p) sampled on xgrid x (momentum axis)^d.

    values has shape xgrid.shape + (paxis.n,)*d; the first d axes are
    positions, the last d are momenta.
    """

    xgrid: SpectralGrid
    paxis: MomentumAxis
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.xgrid.shape + (self.paxis.n,) * self.xgrid.d
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} does not match {expected}"
            )

    @property
    def d(self) -> int:
        return self.xgrid.d

    @property
    def cell(self) -> float:
        """Phase-space volume element dx^d dp^d."""
        return self.xgrid.cell * self.paxis.spacing**self.d

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d))

    @property
    def p_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d, 2 * self.d))

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell)

    def position_density(self) -> np.ndarray:
        """rho(x) = integral of f over p."""
        return np.sum(self.values, axis=self.p_axes) * self.paxis.spacing**self.d

    def momentum_marginal(self) -> np.ndarray:
        return np.sum(self.values, axis=self.x_axes) * self.xgrid.cell

    def second_moment(self) -> float:
        """int (|x - L/2|^2 + |p|^2) f dz, positions measured from box center."""
        m = 0.0
        xc = self.xgrid.axis_points - 0.5 * self.xgrid.L
        rho_x = self.position_density()
        rho_p = self.momentum_marginal()
        for ax in range(self.d):
            shape = [1] * self.d
            shape[ax] = self.xgrid.n
            m += float(np.sum(xc.reshape(shape) ** 2 * rho_x) * self.xgrid.cell)
            shape_p = [1] * self.d
            shape_p[ax] = self.paxis.n
            m += float(
                np.sum(self.paxis.points.reshape(shape_p) ** 2 * rho_p)
                * self.paxis.spacing**self.d
            )
        return m

    def range_violation(self) -> float:
        """How far f leaves [0, 1]: max(-min f, max f - 1, 0)."""
        return float(max(-np.min(self.values), np.max(self.values) - 1.0, 0.0))

    def validate_probability(self, interp_tol: float = 1e-3, mass_tol: float = 1e-8):
        """Check 0 <= f <= 1 (up to interp_tol) and unit mass."""
        viol = self.range_violation()
        if viol > interp_tol:
            raise ValueError(f"f leaves [0,1] by {viol:.3e} > {interp_tol:.1e}")
        m = self.mass()
        if abs(m - 1.0) > mass_tol:
            raise ValueError(f"mass {m!r} differs from 1 beyond {mass_tol:.1e}")

    def copy(self) -> "PhaseSpaceDistribution":
        return PhaseSpaceDistribution(self.xgrid, self.paxis, self.values.copy())

    # --- snapshot export ---------------------------------------------------

    def save(self, path: str, t: float | None = None):
        """Flat binary (little-endian float64, row-major) + JSON header."""
        header = {
            "xgrid": {"d": self.xgrid.d, "n": self.xgrid.n, "L": self.xgrid.L},
            "paxis": {"n": self.paxis.n, "p_max": self.paxis.p_max},
            "shape": list(self.values.shape),
            "dtype": "<f8",
            "order": "row-major",
            "t": t,
        }
        with open(path + ".json", "w") as fh:
            json.dump(header, fh, indent=1)
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path + ".bin")

    def save_csv(self, path: str):
        """x, p, f columns; d = 1 only."""
        if self.d != 1:
            raise ValueError("CSV export is for d=1 distributions")
        xs = self.xgrid.axis_points
        ps = self.paxis.points
        with open(path, "w") as fh:
            fh.write("x,p,f\n")
            for i, x in enumerate(xs):
                for j, p in enumerate(ps):
                    fh.write(f"{x:.17g},{p:.17g},{self.values[i, j]:.17g}\n")

    @classmethod
    def load(cls, path: str) -> "PhaseSpaceDistribution":
        with open(path + ".json") as fh:
            header = json.load(fh)
        g = header["xgrid"]
        from .grids import make_grid

        xgrid = make_grid(g["d"], g["n"], g["L"])
        paxis = MomentumAxis(header["paxis"]["n"], header["paxis"]["p_max"])
        values = np.fromfile(path + ".bin", dtype="<f8").reshape(header["shape"])
        return cls(xgrid, paxis, values)
