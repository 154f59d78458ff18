"""Zeros of high-order derivatives of random polynomials with i.i.d. roots.

Modules: ``measures`` (root laws), ``sympoly`` (e_k of 1/(z - xi)),
``rootfind`` (zero sets of P^(k)), ``metrics`` (W1, log-potentials, Jensen
audits), ``experiments`` (Monte Carlo drivers) and ``cli``.
"""

import warnings

# numba probes an old system TBB at import and warns; the OpenMP layer is used instead
warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

__version__ = "0.1.0"
