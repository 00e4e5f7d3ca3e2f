"""Initial-data builders: orbital sets, condensate profiles, kinetic profiles.

Everything is deterministic given the recipe parameters (and the seed for
the randomized recipes), so experiment reports are reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .grids import Field, SpectralGrid, min_image
from .hartree import BosonField, DensityMatrix
from .phasedist import MomentumAxis, PhaseSpaceDistribution
from .vlasov import sample_distribution

__all__ = [
    "make_orbitals",
    "make_boson_field",
    "make_phase_space_density",
]


def _sorted_modes(grid: SpectralGrid, count: int) -> list[tuple]:
    """Lowest-|k| wavenumber tuples, deterministic tie-break by value."""
    axes = [grid.wavenumbers] * grid.d
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([m.reshape(-1) for m in mesh], -1)
    order = np.lexsort(tuple(flat[:, i] for i in range(grid.d - 1, -1, -1)))
    flat = flat[order]
    key = np.sum(flat**2, axis=1)
    idx = np.argsort(key, kind="stable")
    return [tuple(flat[i]) for i in idx[:count]]


def make_orbitals(grid: SpectralGrid, spec: dict, count: int,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Stacked orthonormal orbitals per recipe; shape (count,) + grid.shape.

    Recipes:
      plane_waves            lowest |k| modes, exactly orthonormal
      gaussians              displaced Gaussians, Gram-Schmidt orthonormalized
      random_band            seeded random fields band-limited to k_max,
                             orthonormalized by QR
    """
    recipe = spec.get("recipe", "plane_waves")
    if recipe == "plane_waves":
        modes = _sorted_modes(grid, count)
        mesh = grid.coordinate_mesh()
        orbs = []
        norm = grid.L ** (grid.d / 2)
        for kvec in modes:
            phase = np.zeros(grid.shape)
            for ax in range(grid.d):
                phase = phase + kvec[ax] * mesh[ax]
            orbs.append(np.exp(1j * phase) / norm)
        return np.stack(orbs)
    if recipe == "gaussians":
        width = float(spec.get("width", 0.35 * grid.L / max(count, 1)))
        centers = spec.get("centers")
        if centers is None:
            centers = [
                [grid.L * (i + 0.5) / count] * grid.d for i in range(count)
            ]
        mesh = grid.coordinate_mesh()
        raw = []
        for c in centers[:count]:
            r2 = np.zeros(grid.shape)
            for ax in range(grid.d):
                r2 = r2 + min_image(mesh[ax] - c[ax], grid.L) ** 2
            raw.append(np.exp(-r2 / (2 * width**2)).astype(complex))
        return _orthonormalize(np.stack(raw), grid)
    if recipe == "random_band":
        if rng is None:
            raise ConfigError("random_band orbitals need a seeded rng")
        k_max = int(spec.get("k_max", grid.n // 4))
        coeff = rng.normal(size=(count,) + grid.shape) \
            + 1j * rng.normal(size=(count,) + grid.shape)
        mask = grid.k_squared() <= (2 * np.pi * k_max / grid.L) ** 2
        coeff *= mask[None]
        fields = np.fft.ifftn(coeff, axes=tuple(range(1, grid.d + 1)))
        return _orthonormalize(fields, grid)
    raise ConfigError(f"unknown orbital recipe {recipe!r}")


def _orthonormalize(stack: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    flat = stack.reshape(stack.shape[0], -1).T  # columns = orbitals
    q, r = np.linalg.qr(flat * np.sqrt(grid.cell))
    # fix the phase so the result is deterministic across BLAS builds
    signs = np.exp(-1j * np.angle(np.diagonal(r)))
    q = q * signs[None, :]
    return (q / np.sqrt(grid.cell)).T.reshape(stack.shape)


def make_density_matrix(grid: SpectralGrid, spec: dict, M: int,
                        rng: np.random.Generator | None = None) -> DensityMatrix:
    orbs = make_orbitals(grid, spec, M, rng)
    return DensityMatrix.zero_temperature(grid, orbs)


def make_boson_field(grid: SpectralGrid, spec: dict) -> BosonField:
    """Condensate recipes: gaussian(center, width, momentum), plane_wave(mode),
    uniform."""
    recipe = spec.get("recipe", "gaussian")
    mesh = grid.coordinate_mesh()
    if recipe == "gaussian":
        width = float(spec.get("width", grid.L / 8))
        center = spec.get("center", [grid.L / 2] * grid.d)
        momentum = spec.get("momentum", [0.0] * grid.d)
        r2 = np.zeros(grid.shape)
        phase = np.zeros(grid.shape)
        for ax in range(grid.d):
            delta = min_image(mesh[ax] - center[ax], grid.L)
            r2 += delta**2
            phase += momentum[ax] * delta
        vals = np.exp(-r2 / (2 * width**2) + 1j * phase)
    elif recipe == "plane_wave":
        mode = spec.get("mode", [1] * grid.d)
        if np.isscalar(mode):
            mode = [mode] * grid.d
        phase = np.zeros(grid.shape)
        for ax in range(grid.d):
            phase = phase + 2 * np.pi * mode[ax] * mesh[ax] / grid.L
        vals = np.exp(1j * phase)
    elif recipe == "uniform":
        vals = np.ones(grid.shape, dtype=complex)
    else:
        raise ConfigError(f"unknown condensate recipe {recipe!r}")
    return BosonField(grid, Field(grid, vals).normalized())


def make_phase_space_density(xgrid: SpectralGrid, paxis: MomentumAxis,
                             spec: dict) -> PhaseSpaceDistribution:
    """Kinetic profiles, normalized to unit mass.

    thomas_fermi: smoothed indicator of p^2 <= c * rho(x)^(2/d) with a
    logistic edge of width `edge`; rho is 1 + depth*cos(2 pi x/L) (or
    uniform).  gaussian: exp(-(x-x0)^2/2sx^2 - (p-p0)^2/2sp^2).
    """
    recipe = spec.get("recipe", "thomas_fermi")
    d = xgrid.d
    if recipe == "thomas_fermi":
        c = float(spec.get("c", 1.0))
        edge = float(spec.get("edge", 0.15))
        depth = float(spec.get("depth", 0.3))

        def fn(*mesh):
            xs, ps = mesh[:d], mesh[d:]
            rho = np.ones_like(xs[0])
            for ax in range(d):
                rho = rho * (1.0 + depth * np.cos(2 * np.pi * xs[ax] / xgrid.L))
            p2 = np.zeros_like(ps[0])
            for ax in range(d):
                p2 = p2 + ps[ax] ** 2
            gap = c * rho ** (2.0 / d) - p2
            return 1.0 / (1.0 + np.exp(-gap / edge))

        return sample_distribution(xgrid, paxis, fn, normalize=True)
    if recipe == "gaussian":
        x0 = spec.get("x0", [xgrid.L / 2] * d)
        p0 = spec.get("p0", [0.0] * d)
        sx = float(spec.get("sx", xgrid.L / 10))
        sp = float(spec.get("sp", paxis.p_max / 4))

        def fn(*mesh):
            xs, ps = mesh[:d], mesh[d:]
            arg = np.zeros_like(xs[0])
            for ax in range(d):
                arg = arg + min_image(xs[ax] - x0[ax], xgrid.L) ** 2 / (2 * sx**2)
                arg = arg + (ps[ax] - p0[ax]) ** 2 / (2 * sp**2)
            return np.exp(-arg)

        return sample_distribution(xgrid, paxis, fn, normalize=True)
    raise ConfigError(f"unknown phase-space recipe {recipe!r}")
