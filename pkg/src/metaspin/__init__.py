"""Metastability of Metropolis dynamics for the Ising model on Erdős–Rényi random graphs.

Modules
-------
graph       Erdős–Rényi and complete graphs with bitset adjacency.
spin        Model parameters, spin configurations and the Hamiltonian.
landscape   Free-energy landscape: drift, roots, regimes and barrier.
cw_chain    Exact first-passage theory of the Curie-Weiss magnetization chain.
dynamics    Continuous-time Metropolis simulator and statistical monitors.
capacity    Potential theory on the full state space for small ``n``.
coupling    Two-replica coupling of the dynamics.
cli         Configuration-driven experiment runner.
"""

__version__ = "0.1.0"

from .errors import InsufficientDataError, ParameterError, RegimeError  # noqa: E402
from .graph import ErGraph, complete_graph, generate_er  # noqa: E402
from .spin import ModelParams, SpinConfig  # noqa: E402

__all__ = ["ErGraph", "InsufficientDataError", "ModelParams", "ParameterError", "RegimeError", "SpinConfig",
           "complete_graph", "generate_er", "__version__"]
