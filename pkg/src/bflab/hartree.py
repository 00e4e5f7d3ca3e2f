"""Coupled mean-field dynamics of a condensate against an orbital ensemble.

The state is a pair (omega, phi): omega = sum_i occ_i |phi_i><phi_i| is the
fermion one-particle density matrix stored as orthonormal orbitals with
occupations, phi is the condensate wave function.  They evolve under

    i hbar d/dt omega = [ -(hbar^2/2 m_F) Lap + lam*N (V * rho_B), omega ]
    i hbar d/dt phi   =   -(hbar^2/2 m_B) Lap phi + lam*M (V * rho_F) phi

with rho_F(x) = (1/M) sum_i occ_i |phi_i(x)|^2 and rho_B = |phi|^2.  Both
one-particle Hamiltonians are integrated with Strang splitting; since every
orbital sees the same Hamiltonian the Gram matrix is preserved exactly and
no re-orthonormalization is performed (drift is monitored, not corrected).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .grids import (
    Field,
    PotentialSpec,
    SpectralGrid,
    convolve,
    gradient_norm_sq,
    kinetic_phase,
    make_grid,
)

__all__ = [
    "ScalingRegime",
    "DensityMatrix",
    "BosonField",
    "HHState",
    "fermion_density",
    "boson_density",
    "hh_step",
    "hh_energy",
    "hh_evolve",
    "window_exponent",
    "theorem1_envelope",
    "save_checkpoint",
    "load_checkpoint",
]

WINDOW_K_MAX = 64.0


@dataclass(frozen=True)
class ScalingRegime:
    """Physical parameter tuple (lam, hbar, m_F, m_B, N, M, d).

    `kind` records which named constructor produced it; the window-exponent
    formulas below are closed-form only for the named regimes.
    """

    lam: float
    hbar: float
    m_F: float
    m_B: float
    N: int
    M: int
    d: int
    kind: str = "custom"

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ValueError("particle numbers must be >= 1")
        for name in ("lam", "hbar", "m_F", "m_B"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")

    @classmethod
    def microscopic(cls, M: int, d: int = 1) -> "ScalingRegime":
        """hbar = 1, N = M, lam = 1/N, m_F = m_B = 2."""
        return cls(lam=1.0 / M, hbar=1.0, m_F=2.0, m_B=2.0, N=M, M=M, d=d,
                   kind="microscopic")

    @classmethod
    def macroscopic(cls, M: int, d: int = 1) -> "ScalingRegime":
        """hbar = M^(-1/d), N = M^(1+1/d), m_B = hbar, m_F = 1, lam = 1/N.

        M must be a perfect d-th power so that N is an integer.
        """
        root = round(M ** (1.0 / d))
        if root**d != M:
            raise ValueError(f"macroscopic regime needs M = r^d; got M={M}, d={d}")
        N = M * root
        hbar = 1.0 / root
        return cls(lam=1.0 / N, hbar=hbar, m_F=1.0, m_B=hbar, N=N, M=M, d=d,
                   kind="macroscopic")

    def check_theorem_conditions(self) -> dict:
        """Condition (ii): m_F >= 1, lam*N <= m_F, M^(-1/d) <= hbar."""
        return {
            "m_F >= 1": self.m_F >= 1.0,
            "lam*N <= m_F": self.lam * self.N <= self.m_F * (1 + 1e-12),
            "M^(-1/d) <= hbar": self.M ** (-1.0 / self.d) <= self.hbar * (1 + 1e-12),
        }

    def to_dict(self) -> dict:
        return {
            "lam": self.lam, "hbar": self.hbar, "m_F": self.m_F, "m_B": self.m_B,
            "N": self.N, "M": self.M, "d": self.d, "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingRegime":
        return cls(**data)


def window_exponent(regime: ScalingRegime, ell: int) -> float | None:
    """Smallest k with (lam sqrt(N)/hbar) M^ell <= (hbar M)^k.

    Named regimes use the closed forms: k = ell (microscopic) and
    k = (1 + d(2 ell - 1)) / (2 (d-1)) (macroscopic, d >= 2).  For custom
    regimes the threshold is found numerically on k in [1, 64]; returns
    None when no such k exists.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if regime.kind == "microscopic":
        return float(ell)
    if regime.kind == "macroscopic":
        if regime.d == 1:
            raise ValueError("macroscopic window exponent is undefined for d=1")
        return (1.0 + regime.d * (2 * ell - 1)) / (2.0 * (regime.d - 1))
    lhs = math.log(regime.lam * math.sqrt(regime.N) / regime.hbar) \
        + ell * math.log(regime.M)
    base = math.log(regime.hbar * regime.M)
    # need k*base >= lhs with k in [1, WINDOW_K_MAX]
    if base > 0:
        k = max(1.0, lhs / base)
        return k if k <= WINDOW_K_MAX else None
    if lhs <= base:  # k = 1 already works; larger k only hurts when base <= 0
        return 1.0
    return None


def theorem1_envelope(regime: ScalingRegime, t: float, C: float) -> tuple[float, float]:
    """Mean-field error envelopes (fermion, boson) at time t for constant C.

    fermion: (C/sqrt M) exp[ C lam sqrt(NM/hbar) (1 + sqrt(hbar M / N)) e^|t| ]
    boson:   same with 1/sqrt N in front.
    """
    if not (C > 0):
        raise ValueError("C must be positive")
    inner = regime.lam * math.sqrt(regime.N * regime.M / regime.hbar)
    inner *= 1.0 + math.sqrt(regime.hbar * regime.M / regime.N)
    arg = C * inner * math.exp(abs(t))
    return (C / math.sqrt(regime.M) * math.exp(arg),
            C / math.sqrt(regime.N) * math.exp(arg))


@dataclass
class DensityMatrix:
    """omega = sum_i occ_i |phi_i><phi_i| as stacked orbitals + occupations."""

    grid: SpectralGrid
    orbitals: np.ndarray          # shape (r,) + grid.shape, complex
    occupations: np.ndarray       # shape (r,), in [0, 1]
    trace_target: int             # M

    GRAM_TOL = 1e-8
    TRACE_TOL = 1e-10

    def __post_init__(self):
        self.orbitals = np.asarray(self.orbitals, dtype=complex)
        self.occupations = np.asarray(self.occupations, dtype=float)
        if self.orbitals.shape[1:] != self.grid.shape:
            raise ValueError("orbital shape does not match grid")
        if self.orbitals.shape[0] != self.occupations.shape[0]:
            raise ValueError("need one occupation per orbital")
        if np.any(self.occupations < -1e-12) or np.any(self.occupations > 1 + 1e-12):
            raise ValueError("occupations must lie in [0, 1]")
        dev = self.gram_deviation()
        if dev > self.GRAM_TOL:
            raise ValueError(f"orbitals not orthonormal: Gram deviation {dev:.3e}")
        tr = float(np.sum(self.occupations))
        if abs(tr - self.trace_target) > self.TRACE_TOL:
            raise ValueError(
                f"occupations sum to {tr!r}, expected {self.trace_target}"
            )

    @property
    def rank(self) -> int:
        return self.orbitals.shape[0]

    def flat_orbitals(self) -> np.ndarray:
        return self.orbitals.reshape(self.rank, self.grid.size)

    def gram_deviation(self) -> float:
        a = self.flat_orbitals()
        gram = (a @ a.conj().T) * self.grid.cell
        return float(np.max(np.abs(gram - np.eye(self.rank))))

    def trace(self) -> float:
        """Tr omega from the current orbital norms (drift diagnostic)."""
        norms = np.sum(np.abs(self.flat_orbitals()) ** 2, axis=1) * self.grid.cell
        return float(np.sum(self.occupations * norms))

    def projection_deviation(self) -> float:
        """|omega^2 - omega|_HS; ~0 for a zero-temperature projection."""
        a = self.flat_orbitals()
        gram = (a @ a.conj().T) * self.grid.cell
        occ = self.occupations
        # omega^2 - omega = sum_ij B_ij |phi_i><phi_j|,
        # B = diag(occ) G diag(occ) - diag(occ); |.|_HS^2 = Tr(G B G B^H)
        B = (occ[:, None] * gram) * occ[None, :] - np.diag(occ)
        hs2 = np.trace(gram @ B @ gram @ B.conj().T)
        return float(np.sqrt(max(np.real(hs2), 0.0)))

    @classmethod
    def zero_temperature(cls, grid: SpectralGrid, orbitals: np.ndarray) -> "DensityMatrix":
        """Rank-M projection: every occupation exactly 1."""
        orbitals = np.asarray(orbitals, dtype=complex)
        M = orbitals.shape[0]
        return cls(grid, orbitals, np.ones(M), trace_target=M)


@dataclass
class BosonField:
    """Condensate wave function, L2-normalized to 1."""

    grid: SpectralGrid
    phi: Field

    NORM_TOL = 1e-10

    def __post_init__(self):
        if not self.grid.compatible(self.phi.grid):
            raise ValueError("phi lives on a different grid")
        nrm = self.phi.l2_norm()
        if abs(nrm - 1.0) > self.NORM_TOL:
            raise ValueError(f"|phi| = {nrm!r}, expected 1")

    def norm(self) -> float:
        return self.phi.l2_norm()


@dataclass
class HHState:
    """Coupled state (omega, phi) plus its scaling regime and time."""

    omega: DensityMatrix
    phi: BosonField
    regime: ScalingRegime
    t: float = 0.0

    def __post_init__(self):
        if not self.omega.grid.compatible(self.phi.grid):
            raise ValueError("omega and phi grids differ")
        if self.regime.d != self.omega.grid.d:
            raise ValueError("regime dimension does not match grid")

    @property
    def grid(self) -> SpectralGrid:
        return self.omega.grid


def fermion_density(omega: DensityMatrix) -> Field:
    """rho_F(x) = (1/M) sum_i occ_i |phi_i(x)|^2; integrates to 1."""
    dens = np.tensordot(omega.occupations, np.abs(omega.orbitals) ** 2, axes=(0, 0))
    return Field(omega.grid, dens / omega.trace_target)


def boson_density(phi: BosonField) -> Field:
    """rho_B(x) = |phi(x)|^2."""
    return Field(phi.grid, np.abs(phi.phi.values) ** 2)


def _potential_phase(v_field: Field, coupling: float, dt: float, hbar: float) -> np.ndarray:
    return np.exp(-1j * dt * coupling * np.real(v_field.values) / hbar)


def hh_step(state: HHState, dt: float, V: PotentialSpec) -> HHState:
    """One Strang step: half kinetic, full potential at midpoint densities, half kinetic.

    The potential phases use the densities recomputed once after the
    half-kinetic drift; each orbital sees lam*N (V*rho_B), phi sees
    lam*M (V*rho_F).  Norms are preserved to rounding.
    """
    if dt == 0.0:
        return state
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    r = state.regime
    grid = state.grid

    def half_kinetic(orbs: np.ndarray, phi_v: np.ndarray):
        phase_f = np.exp(-1j * (dt / 2) * r.hbar * grid.k_squared() / (2 * r.m_F))
        phase_b = np.exp(-1j * (dt / 2) * r.hbar * grid.k_squared() / (2 * r.m_B))
        axes = tuple(range(1, 1 + grid.d))
        orbs = np.fft.ifftn(phase_f[None] * np.fft.fftn(orbs, axes=axes), axes=axes)
        phi_v = np.fft.ifftn(phase_b * np.fft.fftn(phi_v))
        return orbs, phi_v

    orbs, phi_v = half_kinetic(state.omega.orbitals, state.phi.phi.values)

    # midpoint densities, frozen for the full potential phase
    rho_f = np.tensordot(state.omega.occupations, np.abs(orbs) ** 2, axes=(0, 0)) / r.M
    rho_b = np.abs(phi_v) ** 2
    v_rho_b = convolve(V, Field(grid, rho_b))
    v_rho_f = convolve(V, Field(grid, rho_f))
    orbs = orbs * _potential_phase(v_rho_b, r.lam * r.N, dt, r.hbar)[None]
    phi_v = phi_v * _potential_phase(v_rho_f, r.lam * r.M, dt, r.hbar)

    orbs, phi_v = half_kinetic(orbs, phi_v)

    if not (np.all(np.isfinite(orbs)) and np.all(np.isfinite(phi_v))):
        raise NumericsError(
            f"non-finite values after hh_step at t={state.t!r}, dt={dt!r}"
        )
    omega = DensityMatrix(grid, orbs, state.omega.occupations.copy(),
                          state.omega.trace_target)
    phi = BosonField(grid, Field(grid, phi_v))
    return HHState(omega, phi, r, state.t + dt)


def hh_energy(state: HHState, V: PotentialSpec) -> float:
    """Conserved energy of the coupled flow.

    E = Tr((hbar^2/2 m_F)(-Lap) omega) + N (hbar^2/2 m_B) |grad phi|^2
        + lam N M  intint rho_F(x) V(x-y) rho_B(y) dx dy
    """
    r = state.regime
    grid = state.grid
    kin_f = 0.0
    for occ, orb in zip(state.omega.occupations, state.omega.orbitals):
        kin_f += occ * gradient_norm_sq(Field(grid, orb))
    kin_f *= r.hbar**2 / (2 * r.m_F)
    kin_b = r.N * r.hbar**2 / (2 * r.m_B) * gradient_norm_sq(state.phi.phi)
    rho_f = fermion_density(state.omega)
    rho_b = boson_density(state.phi)
    inter = np.real(np.sum(rho_f.values * convolve(V, rho_b).values)) * grid.cell
    return float(kin_f + kin_b + r.lam * r.N * r.M * inter)


@dataclass
class Trajectory:
    """Sampled states plus monitor time series from hh_evolve."""

    states: list[HHState]
    series: dict[str, np.ndarray]

    @property
    def times(self) -> np.ndarray:
        return self.series["t"]


def hh_evolve(
    state: HHState,
    T: float,
    dt: float,
    V: PotentialSpec,
    monitors: dict | None = None,
    sample_every: int = 1,
) -> Trajectory:
    """Drive hh_step for T/dt steps, recording conservation monitors.

    Built-in series: t, energy, fermion_trace, boson_norm, gram_deviation.
    `monitors` maps extra series names to callables HHState -> float.
    T must be an integer multiple of dt.
    """
    n_steps = round(T / dt) if dt > 0 else 0
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, abs(T)):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    monitors = monitors or {}
    series: dict[str, list[float]] = {
        "t": [], "energy": [], "fermion_trace": [], "boson_norm": [],
        "gram_deviation": [], **{name: [] for name in monitors},
    }
    states = [state]

    def record(s: HHState):
        series["t"].append(s.t)
        series["energy"].append(hh_energy(s, V))
        series["fermion_trace"].append(s.omega.trace())
        series["boson_norm"].append(s.phi.norm())
        series["gram_deviation"].append(s.omega.gram_deviation())
        for name, fn in monitors.items():
            series[name].append(fn(s))

    record(state)
    current = state
    for step in range(n_steps):
        current = hh_step(current, dt, V)
        record(current)
        if (step + 1) % sample_every == 0 or step == n_steps - 1:
            states.append(current)
    return Trajectory(states, {k: np.asarray(v) for k, v in series.items()})


# --- checkpoint container -------------------------------------------------
#
# Layout: 8-byte magic b"BFLABHH1", u64 little-endian header length, JSON
# header (grid, regime, occupations, t, array byte offsets), then raw
# float64 little-endian arrays, each row-major with re/im interleaved.

_MAGIC = b"BFLABHH1"


def _interleave(a: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(a).reshape(-1)
    out = np.empty(2 * flat.size, dtype="<f8")
    out[0::2] = np.real(flat)
    out[1::2] = np.imag(flat)
    return out.tobytes()


def _deinterleave(buf: bytes, shape: tuple[int, ...]) -> np.ndarray:
    raw = np.frombuffer(buf, dtype="<f8")
    return (raw[0::2] + 1j * raw[1::2]).reshape(shape)


def save_checkpoint(state: HHState, path: str):
    """Serialize an HHState to the documented binary container."""
    grid = state.grid
    orb_bytes = _interleave(state.omega.orbitals)
    phi_bytes = _interleave(state.phi.phi.values)
    header = {
        "grid": {"d": grid.d, "n": grid.n, "L": grid.L},
        "regime": state.regime.to_dict(),
        "t": state.t,
        "occupations": state.omega.occupations.tolist(),
        "trace_target": state.omega.trace_target,
        "orbital_shape": list(state.omega.orbitals.shape),
        "layout": "row-major, little-endian float64, re/im interleaved",
        "orbital_nbytes": len(orb_bytes),
        "phi_nbytes": len(phi_bytes),
    }
    hdr = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(hdr)))
        fh.write(hdr)
        fh.write(orb_bytes)
        fh.write(phi_bytes)


def load_checkpoint(path: str) -> HHState:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a bflab checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        orb = _deinterleave(fh.read(header["orbital_nbytes"]),
                            tuple(header["orbital_shape"]))
        g = header["grid"]
        grid = make_grid(g["d"], g["n"], g["L"])
        phi = _deinterleave(fh.read(header["phi_nbytes"]), grid.shape)
    omega = DensityMatrix(grid, orb, np.asarray(header["occupations"]),
                          header["trace_target"])
    state = HHState(
        omega, BosonField(grid, Field(grid, phi)),
        ScalingRegime.from_dict(header["regime"]), header["t"],
    )
    return state
