"""Coupled Morris-Lecar simulation and MCMC estimation of drive and coupling."""

from .exceptions import (AllFailed, DegeneratePolygon, DegenerateTimes, EmptyWindow,
                         InitialOutsideRegion, InsufficientData, LengthMismatch,
                         MalformedFile, MLCoupleError, NonFinite, NonPositiveSd,
                         SimulationFailed, SingularFit, TooShort)
from .features import (ConditionedLikelihood, CumulativePowerTransformer, DataFeatures,
                       LikelihoodConfig, PowerCurve, Theta, conditioned_log_likelihood,
                       cumulative_power, fourier_power_slope, mean_log_likelihood,
                       model_power, p0_estimate, power_log_likelihood)
from .mcmc import (PROFILES, Chain, ChainRecord, ConditionedMCMCEstimator, McmcConfig,
                   build_likelihood, combine_summaries, log_posterior, mh_step, propose,
                   run_chain, run_chains, summarize, synthetic_trace)
from .region import FeasibleRegion, builtin_region, contains, log_prior, triangulate
from .sim import (DEFAULT_IC, DynamicsLabel, MLParams, NetworkState, VoltageTrace,
                  classify_dynamics, gating_functions, ml_derivatives,
                  simulate_deterministic, simulate_on_grid, simulate_stochastic)
from .smooth import (LocalPolynomialRegression, LwprConfig, SmoothedSignal, gcv_score,
                     gcv_select, lwpr_eval, smooth_trace, tricube_weight)

__version__ = "0.1.0"
