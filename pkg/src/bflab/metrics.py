"""Distances and norms used to state the convergence results.

Covers trace/HS norms of kernels, the weighted-Fourier sup norms |g|_s and
their operator counterpart |||K|||_s via semiclassical observables
O_{xi,eta} = exp(i xi.x + i eta.p), a discrete homogeneous H^-1 seminorm,
a dictionary lower bound on the variational test norm, exact discrete
W2 optimal transport, and the computable Toeplitz-coupling upper bound on
the quantum Wasserstein distance.

Frequency weights: both |g|_s and |||K|||_s use (1 + |xi| + |eta|)^(-s)
with |.| the Euclidean length of each d-component half, so the identity
|f|_s = (1/M)|||K|||_s is exact on the shared lattice (for d=1 this is
the plain 1 + |xi| + |eta|).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .grids import min_image
from .phasedist import PhaseSpaceDistribution
from .phasespace import DenseKernel, kernel_fourier_coefficients

logger = logging.getLogger(__name__)

__all__ = [
    "trace_norm",
    "hs_norm",
    "fourier_norm",
    "op_fourier_norm",
    "tr_semiclassical",
    "h_minus_1",
    "TestFunctionDictionary",
    "variational_norm",
    "wasserstein2",
    "CouplingCostReport",
    "toeplitz_coupling_cost",
    "metric_record",
]

OT_SUPPORT_MAX = 2048


def trace_norm(K: DenseKernel) -> float:
    """|K|_Tr = sum of singular values of the operator matrix."""
    return float(np.sum(np.linalg.svd(K.operator_matrix(), compute_uv=False)))


def hs_norm(K: DenseKernel) -> float:
    """Hilbert-Schmidt norm, Frobenius of the operator matrix."""
    return float(np.linalg.norm(K.operator_matrix()))


def _phase_space_frequencies(f: PhaseSpaceDistribution) -> list[np.ndarray]:
    return [f.xgrid.wavenumbers] * f.d + [f.paxis.dual_frequencies] * f.d


def _split_weight(xi_sq: np.ndarray, eta_sq: np.ndarray, s: float) -> np.ndarray:
    return (1.0 + np.sqrt(xi_sq) + np.sqrt(eta_sq)) ** (-s)


def fourier_norm(g: PhaseSpaceDistribution | np.ndarray, s: float,
                 f_template: PhaseSpaceDistribution | None = None) -> float:
    """|g|_s = sup over grid frequencies of (1+|xi|+|eta|)^(-s) |g_hat(zeta)|.

    g_hat is the continuum-normalized transform (FFT times the phase-space
    cell).  A raw array may be passed together with `f_template` supplying
    the grids (handy for differences of distributions).
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    if isinstance(g, PhaseSpaceDistribution):
        f, vals = g, g.values
    else:
        if f_template is None:
            raise ValueError("raw arrays need f_template for the grids")
        f, vals = f_template, np.asarray(g)
    ghat = np.abs(np.fft.fftn(vals)) * f.cell
    freqs = _phase_space_frequencies(f)
    xi_sq = np.zeros(vals.shape)
    eta_sq = np.zeros(vals.shape)
    for ax in range(f.d):
        shape = [1] * (2 * f.d)
        shape[ax] = len(freqs[ax])
        xi_sq = xi_sq + freqs[ax].reshape(shape) ** 2
        shape_p = [1] * (2 * f.d)
        shape_p[f.d + ax] = len(freqs[f.d + ax])
        eta_sq = eta_sq + freqs[f.d + ax].reshape(shape_p) ** 2
    return float(np.max(_split_weight(xi_sq, eta_sq, s) * ghat))


def tr_semiclassical(K: DenseKernel, a: np.ndarray, eta: np.ndarray,
                     coeffs: np.ndarray | None = None) -> complex:
    """Tr(O_{xi,eta} K) for xi = a * 2 pi / L (integer offsets) and real eta.

    Evaluated through the kernel's Fourier coefficients as the band-limited
    trace L^d sum_k C[k, k+xi] exp(i hbar eta . (k + xi/2)); this is the
    quadrature-exact value, free of position-grid aliasing, and matches the
    Wigner-side transform node for node.
    """
    grid, hbar = K.grid, K.hbar
    d, n = grid.d, grid.n
    a = np.atleast_1d(np.asarray(a, dtype=int))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if a.shape != (d,) or eta.shape != (d,):
        raise ValueError("a and eta need one component per dimension")
    if np.any(np.abs(a) >= n):
        return 0.0 + 0.0j
    c = kernel_fourier_coefficients(K) if coeffs is None else coeffs
    cs = np.fft.fftshift(c, axes=tuple(range(2 * d)))
    kappa = np.fft.fftshift(grid.wavenumbers)  # ascending
    total = cs
    phases = []
    for ax in range(d):
        # diagonal pairs (k, k + xi_ax) along (axis ax, axis d) of the
        # remaining tensor; np.diagonal moves the diag axis to the end.
        total = np.diagonal(total, offset=int(a[ax]), axis1=0, axis2=d - ax)
        m = total.shape[-1]
        start = max(0, -int(a[ax]))
        k_here = kappa[start:start + m]
        xi_ax = a[ax] * 2.0 * np.pi / grid.L
        phases.append(np.exp(1j * hbar * eta[ax] * (k_here + 0.5 * xi_ax)))
    phase = phases[0]
    for extra in phases[1:]:
        phase = np.multiply.outer(phase, extra)
    return complex(grid.L**d * np.sum(total * phase))


def default_semiclassical_lattice(K: DenseKernel) -> tuple[np.ndarray, np.ndarray]:
    """(a, b) integer offsets spanning the Wigner-side frequency lattice.

    xi = a * 2 pi/L with a in [-n, n-1]; hbar*eta = b * spacing with
    b in [-n, n-1]."""
    n = K.grid.n
    rng = np.arange(-n, n)
    return rng, rng


def op_fourier_norm(K: DenseKernel, s: float,
                    lattice: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """|||K|||_s = sup over the (xi, eta) lattice of the weighted |Tr(O K)|.

    `lattice` is a pair (a_values, b_values) of integer offset arrays per
    axis: xi = a * 2 pi / L and hbar * eta = b * spacing.  The default
    spans the full Wigner dual lattice of the kernel grid.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    grid, hbar = K.grid, K.hbar
    d = grid.d
    a_vals, b_vals = lattice if lattice is not None else default_semiclassical_lattice(K)
    coeffs = kernel_fourier_coefficients(K)
    dxi = 2.0 * np.pi / grid.L
    eta_unit = grid.spacing / hbar
    best = 0.0
    a_tuples = np.stack(np.meshgrid(*([a_vals] * d), indexing="ij"), axis=-1).reshape(-1, d)
    b_tuples = np.stack(np.meshgrid(*([b_vals] * d), indexing="ij"), axis=-1).reshape(-1, d)
    for a in a_tuples:
        xi_len = np.linalg.norm(a * dxi)
        for b in b_tuples:
            eta = b * eta_unit
            w = (1.0 + xi_len + np.linalg.norm(eta)) ** (-s)
            val = abs(tr_semiclassical(K, a, eta, coeffs=coeffs))
            if w * val > best:
                best = w * val
    return float(best)


def h_minus_1(g: PhaseSpaceDistribution | np.ndarray,
              f_template: PhaseSpaceDistribution | None = None,
              zero_mode_tol: float = 1e-10) -> float:
    """Discrete homogeneous H^-1 seminorm (sum_{zeta!=0} |c_zeta|^2/|zeta|^2)^(1/2).

    c_zeta are the Fourier-series coefficients of g on the phase-space
    torus (g = sum c_zeta e^{i zeta.z}); a single mode of amplitude a at
    zeta0 gives a/|zeta0|.  The zero mode must vanish (mean-zero g); if it
    does not, it is excluded and a warning is logged.
    """
    if isinstance(g, PhaseSpaceDistribution):
        f, vals = g, g.values
    else:
        if f_template is None:
            raise ValueError("raw arrays need f_template for the grids")
        f, vals = f_template, np.asarray(g)
    coeff = np.fft.fftn(vals) / vals.size
    freqs = _phase_space_frequencies(f)
    zeta2 = np.zeros(vals.shape)
    for ax, fr in enumerate(freqs):
        shape = [1] * (2 * f.d)
        shape[ax] = len(fr)
        zeta2 = zeta2 + fr.reshape(shape) ** 2
    flat = coeff.reshape(-1)
    z2 = zeta2.reshape(-1)
    zero = z2 == 0.0
    if np.any(np.abs(flat[zero]) > zero_mode_tol * max(1.0, np.max(np.abs(flat)))):
        logger.warning(
            "h_minus_1: zero mode %.3e excluded (input not mean-zero)",
            float(np.abs(flat[zero]).max()),
        )
    return float(np.sqrt(np.sum(np.abs(flat[~zero]) ** 2 / z2[~zero])))


@dataclass
class TestFunctionDictionary:
    """Admissible test functions h with |<zeta> h_hat|_L1 <= 1, ||zeta| h_hat|_L2 <= 1.

    Entries are sampled on a fixed phase-space grid; candidate profiles are
    rescaled so the binding constraint is tight.  The variational norm
    evaluated on this dictionary is a certified lower bound only.
    """

    __test__ = False  # not a pytest class

    template: PhaseSpaceDistribution
    entries: list[np.ndarray]
    names: list[str]

    @classmethod
    def gaussians(cls, template: PhaseSpaceDistribution, centers, widths) -> "TestFunctionDictionary":
        entries, names = [], []
        xs = template.xgrid.coordinate_mesh()
        ps_pts = template.paxis.points
        for i, (z0, w) in enumerate(zip(centers, widths)):
            z0 = np.asarray(z0, dtype=float)
            r2 = np.zeros(template.values.shape)
            for ax in range(template.d):
                r2 = r2 + min_image(xs[ax] - z0[ax], template.xgrid.L).reshape(
                    template.xgrid.shape + (1,) * template.d
                ) ** 2
                shape_p = [1] * (2 * template.d)
                shape_p[template.d + ax] = template.paxis.n
                r2 = r2 + (ps_pts.reshape(shape_p) - z0[template.d + ax]) ** 2
            h = np.exp(-r2 / (2.0 * w**2))
            entries.append(cls._normalize(h, template))
            names.append(f"gauss[{i}]")
        return cls(template, entries, names)

    @staticmethod
    def _normalize(h: np.ndarray, template: PhaseSpaceDistribution) -> np.ndarray:
        hhat = np.fft.fftn(h) * template.cell
        freqs = _phase_space_frequencies(template)
        zeta2 = np.zeros(h.shape)
        for ax, fr in enumerate(freqs):
            shape = [1] * h.ndim
            shape[ax] = len(fr)
            zeta2 = zeta2 + fr.reshape(shape) ** 2
        dual_cell = 1.0
        for fr in freqs:
            dual_cell *= abs(fr[1] - fr[0])
        bracket = np.sqrt(1.0 + zeta2)
        c1 = float(np.sum(bracket * np.abs(hhat)) * dual_cell)
        c2 = float(np.sqrt(np.sum(zeta2 * np.abs(hhat) ** 2) * dual_cell))
        scale = max(c1, c2)
        if scale == 0.0:
            raise ValueError("degenerate test function")
        return h / scale

    def pair(self, g: np.ndarray) -> np.ndarray:
        return np.array(
            [float(np.real(np.sum(h * g)) * self.template.cell) for h in self.entries]
        )


def variational_norm(g: PhaseSpaceDistribution | np.ndarray,
                     dictionary: TestFunctionDictionary) -> float:
    """max_h |<h, g>| over the dictionary: a lower bound on the test norm."""
    vals = g.values if isinstance(g, PhaseSpaceDistribution) else np.asarray(g)
    if not dictionary.entries:
        raise ValueError("empty test dictionary")
    return float(np.max(np.abs(dictionary.pair(vals))))


def _pairwise_sq_dist(a: np.ndarray, b: np.ndarray, periods) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    if periods is not None:
        periods = np.asarray(periods, dtype=float)
        for c, L in enumerate(periods):
            if L > 0:
                diff[:, :, c] = (diff[:, :, c] + 0.5 * L) % L - 0.5 * L
    return np.sum(diff**2, axis=-1)


def wasserstein2(points_a: np.ndarray, weights_a: np.ndarray,
                 points_b: np.ndarray, weights_b: np.ndarray,
                 periods=None) -> float:
    """Exact discrete W2 between weighted point sets via an LP.

    Squared-Euclidean ground cost; coordinates with a positive entry in
    `periods` are measured with the minimum-image distance.  Both weight
    vectors must sum to 1 (1e-10) and supports are capped at 2048 points.
    """
    a = np.atleast_2d(np.asarray(points_a, dtype=float))
    b = np.atleast_2d(np.asarray(points_b, dtype=float))
    wa = np.asarray(weights_a, dtype=float)
    wb = np.asarray(weights_b, dtype=float)
    if a.shape[0] != wa.size or b.shape[0] != wb.size:
        raise ValueError("one weight per support point required")
    if a.shape[0] > OT_SUPPORT_MAX or b.shape[0] > OT_SUPPORT_MAX:
        raise ValueError(f"supports are capped at {OT_SUPPORT_MAX} points")
    if np.any(wa < -1e-14) or np.any(wb < -1e-14):
        raise ValueError("weights must be nonnegative")
    if abs(wa.sum() - 1.0) > 1e-10 or abs(wb.sum() - 1.0) > 1e-10:
        raise ValueError("weights must each sum to 1 within 1e-10")
    cost = _pairwise_sq_dist(a, b, periods)
    m, n = cost.shape
    # transportation LP: row sums = wa, column sums = wb (last one redundant)
    rows = np.concatenate([
        np.repeat(np.arange(m), n),
        m + np.repeat(np.arange(n - 1), m),
    ])
    cols = np.concatenate([
        np.arange(m * n),
        (np.arange(m)[None, :] * n + np.arange(n - 1)[:, None]).ravel(),
    ])
    data = np.ones(rows.size)
    A = sparse.csr_matrix((data, (rows, cols)), shape=(m + n - 1, m * n))
    rhs = np.concatenate([wa, wb[:-1]])
    method = "highs-ipm" if m * n > 250_000 else "highs"
    res = linprog(cost.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method=method)
    if not res.success:
        raise RuntimeError(f"optimal transport LP failed: {res.message}")
    return float(np.sqrt(max(res.fun, 0.0)))


@dataclass
class CouplingCostReport:
    """Cost of the explicit coherent-state coupling between f and its Toeplitz state."""

    hbar: float
    dim: int
    e_analytic: float       # sqrt(d hbar / 2), closed-form second moments
    e_numeric: float        # grid quadrature of Tr[Q c] (sees truncation)
    bound_sqrt_dh: float    # the proved upper bound sqrt(d hbar)
    mass: float
    nodes_used: int

    @property
    def e_upper(self) -> float:
        return self.e_analytic


def toeplitz_coupling_cost(f: PhaseSpaceDistribution, hbar: float,
                           node_threshold: float = 1e-12) -> CouplingCostReport:
    """Cost of the coupling Q(z) = hbar^-d f(z) |z><z| against c_hbar.

    c_hbar(x,p) = (x - xhat)^2/2 + (p - phat)^2/2.  Coherent second moments
    give Tr[Q c] = hbar^-d f(z) * d*hbar/2 exactly, hence the analytic cost
    sqrt(d*hbar/2) <= sqrt(d*hbar).  The numeric path re-derives the
    per-node moments on the grid (periodized packets, spectral momentum),
    so it additionally sees truncation and resolution effects.
    """
    vals = f.values
    if np.min(vals) < -1e-12 * max(1.0, float(np.max(np.abs(vals)))):
        raise ValueError("coupling cost needs f >= 0")
    mass = f.mass()
    d = f.d
    e_analytic = float(np.sqrt(d * hbar / 2.0) * np.sqrt(max(mass, 0.0)))
    xs = f.xgrid.axis_points
    ps = f.paxis.points
    x_nodes = np.stack([m.reshape(-1) for m in np.meshgrid(*([xs] * d), indexing="ij")], -1)
    p_nodes = np.stack([m.reshape(-1) for m in np.meshgrid(*([ps] * d), indexing="ij")], -1)
    flat = vals.reshape(x_nodes.shape[0], p_nodes.shape[0])
    cutoff = node_threshold * max(float(np.max(vals)), 1e-300)
    grid = f.xgrid
    k_flat = np.stack([m.reshape(-1) for m in grid.wavenumber_mesh()], -1)
    meshes = grid.coordinate_mesh()

    total = 0.0
    nodes = 0
    for i in range(x_nodes.shape[0]):
        live = np.nonzero(flat[i] > cutoff)[0]
        if live.size == 0:
            continue
        # packets at one x-node share the envelope; batch the phases over p
        delta = np.stack(
            [min_image(meshes[ax] - x_nodes[i][ax], grid.L).reshape(-1) for ax in range(d)], -1
        )
        env = np.exp(-np.sum(delta**2, -1) / (2.0 * hbar))
        env = env / np.sqrt(np.sum(env**2) * grid.cell)
        exp_x = float(np.sum(np.sum(delta**2, -1) * env**2) * grid.cell)
        p_live = p_nodes[live]
        psi = env[None, :] * np.exp(1j * (p_live @ delta.T) / hbar)
        psi_hat = np.fft.fftn(
            psi.reshape((live.size,) + grid.shape), axes=tuple(range(1, d + 1))
        ).reshape(live.size, grid.size)
        mom2 = np.zeros((live.size, grid.size))
        for ax in range(d):
            mom2 += (hbar * k_flat[:, ax][None, :] - p_live[:, ax][:, None]) ** 2
        exp_p = np.sum(mom2 * np.abs(psi_hat) ** 2, axis=1) / grid.size**2 * grid.L**d
        cost = 0.5 * exp_x + 0.5 * exp_p
        total += float(np.sum(flat[i, live] * cost) * f.cell)
        nodes += live.size
    e_numeric = float(np.sqrt(max(total, 0.0)))
    return CouplingCostReport(
        hbar=hbar, dim=d, e_analytic=e_analytic, e_numeric=e_numeric,
        bound_sqrt_dh=float(np.sqrt(d * hbar)), mass=mass, nodes_used=nodes,
    )


def metric_record(metric: str, value: float, params: dict, grid_meta: dict) -> dict:
    """JSON-ready record shared by the experiment reports."""
    return {"metric": metric, "value": value, "params": params, "grid_meta": grid_meta}
