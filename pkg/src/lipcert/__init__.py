"""Certified upper bounds on the l2 Lipschitz constant of feedforward
networks, computed by assembling per-subnetwork linear matrix inequalities
into one semidefinite program.

Quick use:

    >>> from lipcert import generate_architecture, certify
    >>> net = generate_architecture("d(32).d(32).d(10)", seed=0)
    >>> certify(net).gamma        # doctest: +SKIP
"""

from .baselines import MPBound, empirical_lower_bound, mp_bound, unroll_to_dense
from .conic import ConicProblem, SolveResult, solve
from .errors import (
    AssemblyError,
    InfeasibleError,
    LipcertError,
    ModelError,
    SolveError,
    SplitError,
)
from .genarch import INITS, NAMED, generate_architecture
from .lmi import AssemblyInfo, assemble_network
from .modelio import load_network, save_network
from .network import (
    Activation,
    AvgPool,
    Conv1D,
    Conv2D,
    Flatten,
    FullyConnected,
    GroupSort,
    Interface,
    MaxPool,
    Network,
    Residual,
    StateSpace,
    split_subnetworks,
    trace_shapes,
)
from .pipeline import BoundReport, certify, equilibrate
from .sdpa import export_sdpa, read_sdpa
from .spectral import operator_norm

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "AssemblyError",
    "AssemblyInfo",
    "AvgPool",
    "BoundReport",
    "ConicProblem",
    "Conv1D",
    "Conv2D",
    "Flatten",
    "FullyConnected",
    "GroupSort",
    "INITS",
    "InfeasibleError",
    "Interface",
    "LipcertError",
    "MPBound",
    "MaxPool",
    "ModelError",
    "NAMED",
    "Network",
    "Residual",
    "SolveError",
    "SolveResult",
    "SplitError",
    "StateSpace",
    "assemble_network",
    "certify",
    "empirical_lower_bound",
    "equilibrate",
    "export_sdpa",
    "generate_architecture",
    "load_network",
    "mp_bound",
    "operator_norm",
    "read_sdpa",
    "save_network",
    "solve",
    "split_subnetworks",
    "trace_shapes",
    "unroll_to_dense",
    "__version__",
]
