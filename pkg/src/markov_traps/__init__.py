"""Markov chains in random trap fields: simulation, exact solves and criteria."""

from .chains import (
    Chain,
    DeterministicDrift,
    DriftTree,
    FiniteChain,
    LazyLine,
    PathSample,
    SimpleWalkZd,
    TreeWithChains,
    first_visit_flags,
    sample_path,
    transitions,
    tree_with_chains_classify,
)
from .exceptions import ConfigError, ConvergenceError, DensityError, EncodingError, SolverError
from .fields import (
    AlternatingShellField,
    BlobSet,
    ChainEndField,
    ConstantField,
    ConstantOnSet,
    EuclideanBall,
    Everything,
    Nothing,
    RadialField,
    StateSet,
    TabulatedField,
    TrapRealization,
    ZeroField,
    annealed_status,
    q_eval,
    quenched_status,
)

__version__ = "0.1.0"
