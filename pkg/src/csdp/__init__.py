"""Private prefix sums under continual observation with k concurrent shufflers."""
from .bandit import (BanditInstance, LinUcbState, RegretTrace, beta, random_instance,
                     regularity_diagnostics, run_bandit, select_action)
from .errors import (CapacityExceeded, ConfigError, CsdpError, EstimatorUndefined, FitUndefined,
                     MalformedTranscript, NumericalFailure, ProtocolViolation)
from .estimator import (ErrorReport, StreamResult, TreeSumEstimator, error_profile,
                        process_stream)
from .hard_inputs import HardDistParams, HardStream, big, c_eps, rep, sample_hard_stream
from .kernels import BACKEND
from .mechanisms import (BINARY, KINDS, ORACLE, VECTOR, MechanismSpec, SumEstimate,
                         mechanism_variance)
from .plan import Node, TreePlan, build_plan, schedule, vstar
from .privacy import PrivacyParams, audit_participation, composed_budget, split_budget
from .runtime import ShuffleRuntime, ShufflerSlot, Transcript, TranscriptRecord

__version__ = "0.1.0"
