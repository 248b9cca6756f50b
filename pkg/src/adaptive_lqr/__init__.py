"""Adaptive regulation of linear-quadratic systems: certainty-equivalence
regulators, exact regret decomposition, and identifiability geometry."""
from .errors import (AdaptiveLQRError, BadCost, BadCovariance, ConfigError, MismatchedTrajectories,
                     MissingGains, NoConvergence, NonSquare, NotStabilizable, SingularGram,
                     UnstableInput, UnsupportedConstraint)
from .estimation import (EpisodeSchedule, Estimate, RegressorAccumulator, accumulate,
                         constrained_least_squares, least_squares)
from .kernels import BACKEND
from .linalg import RiccatiSolution, dare, rank, solve_lyapunov, solve_riccati, spectral_radius
from .policies import (ce_policy, gce_policy, initial_estimate, optimal_policy, rce_policy,
                       ts_policy)
from .regret import (DecompositionTerms, RegretLedger, compute_regret, decompose,
                     no_upward_trend, normalized_curves, optimal_cost_fluctuation)
from .sideinfo import AffineSubspace, SideInformation
from .system import (CostSpec, DynamicsParameter, NoiseModel, Trajectory, draw_noise,
                     reference_system, simulate, simulate_coupled)

__version__ = "0.1.0"
