"""Semi-Lagrangian integration of the coupled kinetic-condensate system.

    (d/dt + p . grad_x + F(t,x) . grad_p) f = 0,
    i d/dt phi = -(1/2) Lap phi + (V * rho_F) phi,

with F(t,x) = -(grad V * |phi|^2)(x) the condensate force on the classical
gas and rho_F(x) = int f dp.  Transport is realized by tracing the
characteristics (xdot = p, pdot = F) backward one leapfrog step under the
force frozen at the step start and interpolating f there with a limited
(locally clamped) cubic Lagrange stencil: the clamp keeps the global range
of f from expanding, so the 0 <= f <= 1 structure degrades only through
reported violations, never silent clipping.  Positions wrap periodically;
momenta beyond the axis cutoff read zero and the escaping mass is tracked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError
from .grids import Field, PotentialSpec, SpectralGrid, convolve, kinetic_phase
from .hartree import BosonField
from .phasedist import MomentumAxis, PhaseSpaceDistribution

logger = logging.getLogger(__name__)

__all__ = [
    "VHState",
    "boson_force",
    "classical_fermion_potential",
    "characteristics_step",
    "vh_step",
    "vh_evolve",
    "moment_growth_check",
    "sample_distribution",
    "resample",
    "VHTrajectory",
    "MomentGrowthReport",
]


@dataclass
class VHState:
    """Kinetic distribution + condensate pair at time t (shared x grid)."""

    f: PhaseSpaceDistribution
    phi: BosonField
    t: float = 0.0
    escaped_mass: float = 0.0
    range_violation_max: float = 0.0

    def __post_init__(self):
        if not self.f.xgrid.compatible(self.phi.grid):
            raise ValueError("f and phi position grids differ")

    def validate_initial(self, interp_tol: float = 1e-3):
        self.f.validate_probability(interp_tol=interp_tol)


def boson_force(phi: BosonField, V: PotentialSpec) -> np.ndarray:
    """F(x) = -(grad V * |phi|^2)(x), spectral gradient, shape (d,)+grid.shape.

    The Nyquist mode is dropped from the odd derivative factor, as usual
    for real spectral differentiation.
    """
    grid = phi.grid
    rho_hat = np.fft.fftn(np.abs(phi.phi.values) ** 2)
    v_hat = np.fft.fftn(V.sample(grid))
    out = np.empty((grid.d,) + grid.shape)
    kn = grid.wavenumbers
    nyq = np.min(kn)
    for ax in range(grid.d):
        k = kn.copy()
        k[kn == nyq] = 0.0
        shape = [1] * grid.d
        shape[ax] = grid.n
        mult = 1j * k.reshape(shape)
        g = np.fft.ifftn(mult * v_hat * rho_hat) * grid.cell
        out[ax] = -np.real(g)
    return out


def classical_fermion_potential(f: PhaseSpaceDistribution, V: PotentialSpec) -> Field:
    """V_f(x) = (V * rho_F)(x) with rho_F(x) = int f dp (cell-weighted sum)."""
    rho = Field(f.xgrid, f.position_density())
    return convolve(V, rho)


# --- cubic Lagrange interpolation machinery ---------------------------------


def _lagrange_weights(s: np.ndarray) -> np.ndarray:
    """Weights on the stencil {-1, 0, 1, 2} for fractional offsets s in [0,1)."""
    w = np.empty((4,) + s.shape)
    w[0] = -s * (s - 1.0) * (s - 2.0) / 6.0
    w[1] = (s**2 - 1.0) * (s - 2.0) / 2.0
    w[2] = -s * (s + 1.0) * (s - 2.0) / 2.0
    w[3] = s * (s**2 - 1.0) / 6.0
    return w


def periodic_cubic_interp(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Cubic Lagrange interpolation of a periodic array at index coordinates.

    values has D axes of lengths n_a; coords is (m, D) in index units.
    """
    D = values.ndim
    m = coords.shape[0]
    base = np.floor(coords).astype(int)
    frac = coords - base
    out = np.zeros(m)
    weights = [_lagrange_weights(frac[:, ax]) for ax in range(D)]
    for flat in range(4**D):
        offs = np.unravel_index(flat, (4,) * D)
        w = np.ones(m)
        idx = []
        for ax in range(D):
            w = w * weights[ax][offs[ax]]
            idx.append((base[:, ax] + offs[ax] - 1) % values.shape[ax])
        out += w * values[tuple(idx)]
    return out


def _interp_phase_space(values: np.ndarray, coords: np.ndarray, d: int,
                        limited: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate f at index coords: periodic in the first d axes, zero
    beyond the momentum axes.  Returns (values, outside_mask)."""
    D = values.ndim
    m = coords.shape[0]
    base = np.floor(coords).astype(int)
    frac = coords - base
    weights = [_lagrange_weights(frac[:, ax]) for ax in range(D)]
    out = np.zeros(m)
    outside = np.zeros(m, dtype=bool)
    for ax in range(d, D):
        outside |= (coords[:, ax] < 0.0) | (coords[:, ax] > values.shape[ax] - 1)
    for flat in range(4**D):
        offs = np.unravel_index(flat, (4,) * D)
        w = np.ones(m)
        idx = []
        for ax in range(D):
            raw = base[:, ax] + offs[ax] - 1
            if ax < d:
                idx.append(raw % values.shape[ax])
            else:
                inside = (raw >= 0) & (raw < values.shape[ax])
                w = w * inside
                idx.append(np.clip(raw, 0, values.shape[ax] - 1))
            w = w * weights[ax][offs[ax]]
        out += w * values[tuple(idx)]
    if limited:
        # clamp to the bounding cell's corner values: keeps min/max from growing
        lo = np.full(m, np.inf)
        hi = np.full(m, -np.inf)
        for flat in range(2**D):
            offs = np.unravel_index(flat, (2,) * D)
            idx = []
            w_in = np.ones(m, dtype=bool)
            for ax in range(D):
                raw = base[:, ax] + offs[ax]
                if ax < d:
                    idx.append(raw % values.shape[ax])
                else:
                    w_in &= (raw >= 0) & (raw < values.shape[ax])
                    idx.append(np.clip(raw, 0, values.shape[ax] - 1))
            corner = np.where(w_in, values[tuple(idx)], 0.0)
            lo = np.minimum(lo, corner)
            hi = np.maximum(hi, corner)
        out = np.clip(out, lo, hi)
    out[outside] = 0.0
    return out, outside


class SampledForce:
    """Force field sampled on a grid, evaluated off-grid by cubic interpolation."""

    def __init__(self, grid: SpectralGrid, values: np.ndarray):
        self.grid = grid
        self.values = values  # (d,) + grid.shape

    def __call__(self, x: np.ndarray) -> np.ndarray:
        coords = x / self.grid.spacing
        return np.stack(
            [periodic_cubic_interp(self.values[ax], coords) for ax in range(self.grid.d)],
            axis=-1,
        )


def characteristics_step(x: np.ndarray, p: np.ndarray, force, dt: float,
                         L: float) -> tuple[np.ndarray, np.ndarray]:
    """One volume-preserving leapfrog step of xdot = p, pdot = F(x).

    x, p are (m, d); `force` maps (m, d) positions to (m, d) forces (use
    SampledForce for grid fields or any callable, e.g. the harmonic test
    hook F = -x).  Positions wrap periodically into [0, L).  Exact for
    constant forces.
    """
    x = x + 0.5 * dt * p
    x %= L
    p = p + dt * force(x)
    x = x + 0.5 * dt * p
    x %= L
    return x, p


def _phase_space_nodes(f: PhaseSpaceDistribution) -> tuple[np.ndarray, np.ndarray]:
    xs = f.xgrid.axis_points
    ps = f.paxis.points
    d = f.d
    mesh = np.meshgrid(*([xs] * d + [ps] * d), indexing="ij")
    x = np.stack([m.reshape(-1) for m in mesh[:d]], -1)
    p = np.stack([m.reshape(-1) for m in mesh[d:]], -1)
    return x, p


def vh_step(state: VHState, V: PotentialSpec, dt: float,
            mass_warn: float = 1e-6, limited: bool = True) -> VHState:
    """One semi-Lagrangian + Strang step of the coupled system.

    Every phase-space node is traced backward one leapfrog step under the
    force frozen at the step start, and f is interpolated there.  phi then
    takes a Strang step whose potential uses the midpoint density
    (average of the old and new rho_F).
    """
    if dt == 0.0:
        return state
    f, phi = state.f, state.phi
    grid = f.xgrid
    force = SampledForce(grid, boson_force(phi, V))

    x, p = _phase_space_nodes(f)
    # backward trace: invert drift-kick-drift
    x_half = (x - 0.5 * dt * p) % grid.L
    p_back = p - dt * force(x_half)
    x_back = (x_half - 0.5 * dt * p_back) % grid.L

    coords = np.concatenate(
        [x_back / grid.spacing,
         (p_back + f.paxis.p_max) / f.paxis.spacing], axis=-1,
    )
    new_vals, outside = _interp_phase_space(f.values, coords, f.d, limited=limited)
    new_vals = new_vals.reshape(f.values.shape)
    if not np.all(np.isfinite(new_vals)):
        raise NumericsError(f"non-finite f after vh_step at t={state.t!r}")
    f_new = PhaseSpaceDistribution(grid, f.paxis, new_vals)

    mass_lost = f.mass() - f_new.mass()
    if abs(mass_lost) > mass_warn * dt:
        logger.warning(
            "vh_step mass drift %.3e over dt=%.3e", mass_lost, dt
        )

    rho_mid = 0.5 * (f.position_density() + f_new.position_density())
    v_mid = convolve(V, Field(grid, rho_mid))
    phi_v = kinetic_phase(phi.phi, 0.5 * dt, mass=1.0, hbar=1.0)
    phi_v = Field(grid, phi_v.values * np.exp(-1j * dt * np.real(v_mid.values)))
    phi_v = kinetic_phase(phi_v, 0.5 * dt, mass=1.0, hbar=1.0)
    if not np.all(np.isfinite(phi_v.values)):
        raise NumericsError(f"non-finite phi after vh_step at t={state.t!r}")

    escaped = state.escaped_mass + float(
        np.sum(f.values.reshape(-1)[outside]) * f.cell
    )
    return VHState(
        f_new, BosonField(grid, phi_v), state.t + dt,
        escaped_mass=escaped,
        range_violation_max=max(state.range_violation_max, f_new.range_violation()),
    )


@dataclass
class VHTrajectory:
    states: list[VHState]
    series: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.asarray([s.t for s in self.states])


def vh_evolve(state: VHState, V: PotentialSpec, T: float, dt: float,
              sample_every: int = 1, limited: bool = True) -> VHTrajectory:
    """Drive vh_step for T/dt steps, recording mass/norm/moment series."""
    n_steps = round(T / dt) if dt > 0 else 0
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    series = {"t": [], "mass": [], "boson_norm": [], "second_moment": [],
              "range_violation": []}
    states = [state]

    def record(s: VHState):
        series["t"].append(s.t)
        series["mass"].append(s.f.mass())
        series["boson_norm"].append(s.phi.norm())
        series["second_moment"].append(s.f.second_moment())
        series["range_violation"].append(s.f.range_violation())

    record(state)
    current = state
    for step in range(n_steps):
        current = vh_step(current, V, dt, limited=limited)
        record(current)
        if (step + 1) % sample_every == 0 or step == n_steps - 1:
            states.append(current)
    return VHTrajectory(states, {k: np.asarray(v) for k, v in series.items()})


@dataclass
class MomentGrowthReport:
    times: np.ndarray
    kappa: np.ndarray          # sqrt(m2(t) / m2(0))
    rate: float                # fitted exponential rate of kappa
    prefactor: float           # envelope kappa <= prefactor * exp(rate t)
    within_envelope: bool

    def as_dict(self) -> dict:
        return {
            "rate": self.rate, "prefactor": self.prefactor,
            "within_envelope": self.within_envelope,
            "kappa_final": float(self.kappa[-1]),
        }


def moment_growth_check(traj: VHTrajectory) -> MomentGrowthReport:
    """Fit kappa(t) = sqrt(m2(t)/m2(0)) to an exponential envelope.

    The characteristics bound |Phi(t,z)| <= kappa(t)|z| forces at most
    exponential growth of the second moments; the report exposes the
    smallest envelope prefactor at the fitted rate.
    """
    if "second_moment" in traj.series:
        t = traj.series["t"]
        m2 = traj.series["second_moment"]
    else:
        t = traj.times
        m2 = np.asarray([s.f.second_moment() for s in traj.states])
    if len(t) < 2:
        raise ValueError("moment growth needs at least two samples")
    kappa = np.sqrt(np.maximum(m2 / m2[0], 1e-300))
    logk = np.log(kappa)
    dt = np.diff(t)
    slopes = np.diff(logk) / np.where(dt == 0, 1.0, dt)
    rate = float(max(np.max(slopes), 0.0))
    prefactor = float(np.max(np.exp(logk - rate * np.asarray(t))))
    ok = bool(np.all(kappa <= prefactor * np.exp(rate * np.asarray(t)) + 1e-12))
    return MomentGrowthReport(np.asarray(t), kappa, rate, prefactor, ok)


def sample_distribution(xgrid: SpectralGrid, paxis: MomentumAxis, fn,
                        normalize: bool = True) -> PhaseSpaceDistribution:
    """Sample fn(x_mesh..., p_mesh...) -> f on the tensor grid; optionally
    rescale to unit mass."""
    d = xgrid.d
    mesh = np.meshgrid(*([xgrid.axis_points] * d + [paxis.points] * d), indexing="ij")
    vals = np.asarray(fn(*mesh), dtype=float)
    f = PhaseSpaceDistribution(xgrid, paxis, vals)
    if normalize:
        m = f.mass()
        if m <= 0:
            raise ValueError("cannot normalize: nonpositive mass")
        f = PhaseSpaceDistribution(xgrid, paxis, vals / m)
    return f


def resample(f: PhaseSpaceDistribution, xgrid: SpectralGrid,
             paxis: MomentumAxis) -> PhaseSpaceDistribution:
    """Explicit cubic interpolation of f onto new (x, p) grids."""
    if xgrid.d != f.d:
        raise ValueError("dimension mismatch")
    d = f.d
    mesh = np.meshgrid(*([xgrid.axis_points] * d + [paxis.points] * d), indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], -1)
    coords = np.concatenate(
        [pts[:, :d] / f.xgrid.spacing,
         (pts[:, d:] + f.paxis.p_max) / f.paxis.spacing], axis=-1,
    )
    vals, _ = _interp_phase_space(f.values, coords, d, limited=True)
    shape = xgrid.shape + (paxis.n,) * d
    return PhaseSpaceDistribution(xgrid, paxis, vals.reshape(shape))
