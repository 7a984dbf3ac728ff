"""Robust aggregation of two forecasts from experts who neglect the base rate."""
from ._backend import BACKEND
from .aggregators import (
    AVERAGE_PRIOR,
    SIMPLE_AVERAGE,
    AggregatorSpec,
    Kind,
    aggregate,
    aggregate_array,
    balancing,
    format_spec,
    parse_spec,
)
from .belief import (
    PROFILES,
    Signal,
    SignalChannel,
    TwoSignalStructure,
    bayes_from_brn,
    bayes_posterior,
    brn_from_bayes,
    brn_posterior,
    inverse_logit,
    logit,
    omniscient_from_predictions,
    omniscient_from_structure,
    profile_probability,
)
from .bounds import TroughReport, lower_bound, single_trough_check
from .empirical import (
    Case,
    Classification,
    Label,
    LambdaEstimate,
    PredictionRecord,
    benchmarks,
    classify,
    combine_cases,
    empirical_loss,
    estimate_lambda,
    evaluate,
    load_dataset,
    substitute_bayes,
    subsample_key,
    synth_generate,
)
from .errors import (
    DatasetError,
    DomainError,
    ExcludedCaseError,
    InsufficientDataError,
    MuMismatchError,
    SpecParseError,
    SpecRangeError,
    UndefinedAggregation,
)
from .regret import (
    TENTHS,
    JointStructure,
    OptimizerConfig,
    RegretCurve,
    SearchResult,
    overall_from_curve,
    overall_regret_upper,
    regret_curve,
    relative_loss,
    relative_loss_general,
    worst_case_regret,
)

__version__ = "0.1.0"
