"""Distributionally robust controller synthesis and certificate verification
for polynomial systems under Wasserstein ambiguity."""
from .ambiguity import AmbiguitySet, NominalDistribution, TruncatedGaussian, UniformBox, child_rng, empirical_nominal
from .certificates import CertificateCandidate, VerificationReport, check_drcbc, load_fixture, safety_lower_bound
from .dro_dual import SolverConfig, ValueEvaluator, dual_value, primal_worst_case, robust_bellman
from .harness import SimulationConfig, StudyConfig, monte_carlo, run_group_study, wilson_interval
from .model import Box, FiniteInputs, PolytopeInputs, Polynomial, SuperLevel, SystemModel, builtin_system
from .synthesis import PolicyTable, StateGrid, ValueGrid, threshold_policy, value_iteration

__version__ = "0.1.0"

__all__ = [
    "AmbiguitySet", "Box", "CertificateCandidate", "FiniteInputs", "NominalDistribution", "PolicyTable",
    "PolytopeInputs", "Polynomial", "SimulationConfig", "SolverConfig", "StateGrid", "StudyConfig",
    "SuperLevel", "SystemModel", "TruncatedGaussian", "UniformBox", "ValueEvaluator", "ValueGrid",
    "VerificationReport", "builtin_system", "check_drcbc", "child_rng", "dual_value", "empirical_nominal",
    "load_fixture", "monte_carlo", "primal_worst_case", "robust_bellman", "run_group_study",
    "safety_lower_bound", "threshold_policy", "value_iteration", "wilson_interval",
]
