"""bflab: a numerical laboratory for coupled boson-fermion mean-field dynamics.

Subpackages by concern:

  grids       periodic spectral grids, convolution potentials, free flight
  hartree     coupled condensate / orbital-ensemble mean-field integrator
  vlasov      semi-Lagrangian kinetic transport coupled to the condensate
  phasespace  Wigner / Weyl / anti-Wick transforms, coherent states
  metrics     trace & Fourier norms, W2 transport, quantum coupling costs
  manybody    exact few-body Schrodinger oracle and reduced densities
  experiments config-driven runs behind the `bflab` command line
"""

from . import grids, hartree, manybody, metrics, phasedist, phasespace, vlasov

__all__ = [
    "grids",
    "hartree",
    "manybody",
    "metrics",
    "phasedist",
    "phasespace",
    "vlasov",
]

__version__ = "0.1.0"
