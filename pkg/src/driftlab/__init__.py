"""driftlab: simulation harness for prediction under drift with dependent data.

Generates drifting binary-label streams (independent or Markov-modulated),
runs windowed/subsampled ERM learners on them, accounts cumulative excess risk
exactly, and verifies the supporting facts (blocking, uniform deviation,
discrepancy bounds, mixing rates) by exact computation.
"""

__version__ = "0.1.0"
SCHEMA_VERSION = 1

from .distributions import (
    ConceptPath,
    DriftSchedule,
    FiniteSupport,
    Marginal,
    Observation,
    ThresholdConcept,
    concept_path,
    discrepancy,
    drift_path_from_json,
    drift_path_to_json,
    load_drift_path,
    make_drift_schedule,
    save_drift_path,
    tv_distance,
)
from .evaluation import (
    BlockingReport,
    DegenerateCurveError,
    RateFit,
    RegretCurve,
    UniformDeviationReport,
    default_checkpoints,
    fit_growth_exponent,
    geometric_checkpoints,
    run_experiment,
    run_single,
    theoretical_exponent,
    verify_blocking,
    verify_uniform_deviation,
)
from .hypotheses import (
    FiniteExplicitClass,
    FiniteHypothesis,
    FunctionClass,
    Hypothesis,
    ThresholdClass,
    ThresholdHypothesis,
    erm,
    finite_class_from_json,
    inf_risk,
    initial_hypothesis,
    load_finite_class,
    loss,
    risk,
    threshold_erm,
)
from .learners import (
    AdaptiveWindowLearner,
    BaselineLearner,
    ConstantWindowLearner,
    Learner,
    SubsampledErmLearner,
    baseline_step,
    best_window,
    constant_window_size,
    erm_step,
    subsample_schedule,
    subsample_times,
)
from .processes import (
    MarkovModulatedProcess,
    MixingProfile,
    MixingRateReport,
    ProcessModel,
    ProductProcess,
    SamplePath,
    beta_coefficient,
    load_process,
    mixing_profile,
    process_from_json,
    process_to_json,
    sample_path,
    save_process,
    symmetric_chain,
    verify_mixing_rate,
)
from .harness import (
    ConfigError,
    RunRecord,
    SweepRecord,
    build_checkpoints,
    build_learner,
    build_model,
    config_hash,
    refit_rates,
    resolve_config,
    run_config,
    run_sweep,
    run_verify,
)
