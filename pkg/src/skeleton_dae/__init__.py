"""Skeleton-chain regularization of ``B x' = x + f(t)`` with singular ``B``."""
from .chain import (
    ChainKind,
    ChainLevel,
    ChainReport,
    SkeletonChain,
    build_chain,
    build_projector,
    verify_chain,
)
from .errors import (
    ChainMismatchError,
    ChainNotRegularError,
    NoConvergenceError,
    NonFiniteError,
    NotNilpotentError,
    OrderCapExceededError,
    ParseError,
    SingularError,
    SpecInvalidError,
    StepTooCoarseError,
    ToleranceAmbiguous,
)
from .linalg import SkeletonFactorization, eigenvalues, full_rank_factorize, rank_of, solve_linear
from .oracle import SynthSpec, random_spec, synthesize
from .signals import CallableSignal, Signal, SignalTerm, differentiate, parse_signal
from .solver import (
    Consistency,
    DegenerateProblem,
    RegularizedIVP,
    Stability,
    Trajectory,
    check_classical_consistency,
    check_stability,
    residual_norm,
    solve,
    solve_degenerate,
    solve_nilpotent_iteration,
    solve_regular,
)

__version__ = "0.1.0"
