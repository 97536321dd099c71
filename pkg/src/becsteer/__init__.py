"""Two-component BEC Ramsey interferometry with truncated-Wigner fields.

Subpackages cover the exact two-mode reference calculations (`twomode`),
spatial grids and physical parameters (`grids`), finite-temperature
initial states (`thermal`), the stochastic field engine (`twa`),
ensemble observables and steering certificates (`observables`), and the
command-line pipeline (`config`, `runner`, `cli`).
"""

__version__ = "0.1.0"

from . import twomode  # noqa: F401
