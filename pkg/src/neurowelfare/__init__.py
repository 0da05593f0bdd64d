"""Actor-critic simulation, model inference and welfare evaluation toolkit."""

from .agent import (AgentConfig, AgentState, CueModel, DualSelfUtility, Trajectory, actor_update,
                    critic_update, effective_values, implemented_utility, policy_probs, q_from_v,
                    run_learning, td_error)
from .environment import (Intervention, Mdp, StochasticPolicy, apply_intervention, solve_policy_values,
                          step, validate_mdp, value_iteration)
from .inference import (ChannelSpec, FitResult, FitSearch, IdentifiabilityReport, JointDistributionTable,
                        ModelSpec, choice_log_likelihood, enumerate_joint, fit_mle, identifiability_gap,
                        joint_log_likelihood, parameter_recovery)
from .neural import (ConditioningProtocol, EncodingValidationStats, LinkFunction, NeuralTrace, NoiseModel,
                     encode, simulate_conditioning, validate_encoding)
from .report import AuditConfig, ChecklistReport, render_report, run_audit
from .scenarios import (PlatformOptimizer, ScenarioBundle, build_addiction, build_behavioral_twin,
                        build_conditioning, build_platform, build_scale_pair, run_platform_loop)
from .welfare import (InterventionComparison, MistakeClassification, WelfareCriterion, classify_mistake_states,
                      compare_interventions, criterion_utility, evaluate_welfare)
