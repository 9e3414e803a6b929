"""Garsia-Rodemich-Rumsey bounds for rectangular increments on [0, 1]^n: numerics and Monte Carlo checks."""

from .errors import (BoundViolation, DivergenceError, DomainError, GrrError, HypothesisError,
                     ModelError, ParameterError, ResolutionError)
from .field_grid import GridField, PointPair, corner_expansion, rect_increment, rect_increment_iterated
from .modulus import LogModulatedModulus, ModulusFunction, YoungFunction, eval_log_modulus
from .grr import (GrrChain, GrrProblem, b_functional, build_grr_chain, grr_rhs, kolmogorov_bound_check,
                  kolmogorov_constant, verify_grr)
from .gaussian import (CovarianceModel, GaussianSampler, build_empirical_modulus, exp_moment_check,
                       increment_moment_mc, increment_variance, sample_field)
from .heat import (HeatPoint, KernelIntegralTable, heat_cov, heat_sq_increment, heat_sq_increment_bound,
                   lemma51_brackets, rho)
from .experiments import (ExperimentSpec, RegularityReport, edge_decomposition_bound, grr_certificate,
                          refinement_sweep, sup_ratio)

__version__ = "0.1.0"
