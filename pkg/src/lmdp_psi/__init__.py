"""Latent MDPs with prospective side information: exact simulation, planning,
learning and lower-bound instances at desk scale."""
from .env import (LmdpPsi, ModelClass, TrajectoryRecord, ValidationReport, random_instance,
                  sample_episode, trajectory_probability, validate_model, value_of_policy)
from .errors import ConfigError, RankError, SizeError
from .hardgen import (EmissionAssignment, HardInstanceSpec, HardLayout, build_hard_instance,
                      build_reference, conditional_kl, effective_alpha, kl_chain_identity_check,
                      sample_emission_assignment)
from .harness import ExperimentConfig, ScalingFit, fit_scaling_exponent, load_fixture, run_preset
from .learning import (BonusAccumulator, ConfidenceSet, Dataset, RunLog, bonus_rebuild,
                       explore_then_exploit, loglikelihood, omle_regret_min, pure_explore,
                       update_confidence_set)
from .planning import (BonusSpec, enumerate_policies_oracle, evaluate_policy, plan_blind_optimal,
                       plan_bonus_optimal, plan_informed_optimal)
from .policies import BlindPolicy, InformedPolicy, StochasticPolicy, TablePolicy, UniformPolicy
from .psr import (PsrOperators, PsrState, build_operators, conditional_conditioning,
                  conditioning_constant, left_inverse, psr_state)

__version__ = "0.1.0"
