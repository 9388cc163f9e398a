"""Robust self-triggered sampling for uncertain nonlinear sampled-data systems."""
from .bounds import (ExpCertificate, KLCertificate, LipschitzEnvelope, ScalarFunction,
                     estimate_local_lipschitz, gronwall_bound, gronwall_bound_kl)
from .dynamics import (ControlLaw, DisturbanceProfile, EtaSchedule, PlantModel, build_model,
                       eval_closed_loop, rigid_body_law, rigid_body_model, rk4_step)
from .errors import (ConfigurationError, ContractViolation, DivergenceError, DomainError,
                     InfeasibleTuningError, StcError, UndefinedStatisticsError)
from .samplers import (EventLebesgue, EventRelative, NominalPrediction, NuCoefficients, Periodic,
                       SelfTrigGlobal, SelfTrigLebesgue, SelfTrigNonlinear, SelfTrigUniversal,
                       TriggerPolicy, interval_bounds, next_interval_global,
                       next_interval_lebesgue, next_interval_nonlinear, next_interval_universal)
from .simulation import Scenario, Trace, replay_event_times, simulate, simulate_batch
from .tuning import (TuningReport, perturbation_sup_asymptotic, perturbation_sup_exponential,
                     perturbation_sup_global, suggest_nu)

__version__ = "0.1.0"
