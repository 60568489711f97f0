"""Offline contextual-bandit policy learning and evaluation from logged data."""

from .data import (
    BINARY,
    CONTINUOUS,
    Dataset,
    FeatureSchema,
    LoggedSample,
    PreprocessStats,
    accel_magnitude,
    binarize_rewards,
    export_csv,
    ingest_csv,
    kfold_split,
    load_dataset,
    scale_features,
    split_multi_action,
)
from .errors import ConfigError, DataError, FitError, OffBanditError
from .estimators import PolicyValueEstimate, value_dm, value_dr, value_tipw
from .evaluation import (
    ExperimentResult,
    FeatureRanking,
    TTestResult,
    rank_features,
    run_experiment,
    t_test_independent,
)
from .learners import (
    BehaviorPolicy,
    ImputedRewardMatrix,
    LinearPolicy,
    ObservedPolicy,
    OffsetTreePolicy,
    Policy,
    RandomPolicy,
    SoftmaxPolicy,
    decide,
    fit_offset_tree,
    fit_policy,
    impute_rewards,
    learn_policy,
    load_policy_json,
    make_baseline,
)
from .propensity import (
    BalanceReport,
    BoostingConfig,
    PropensityModel,
    asmd,
    clip_propensity,
    fit_gbm_propensity,
    fit_multinomial_logit,
    predict_propensities,
)
from .reward import RewardModel, fit_reward_models, predict_reward
from .synth import (
    GroundTruth,
    OracleValue,
    OraclePolicy,
    SynthConfig,
    generate,
    make_ground_truth,
    sample_dataset,
    true_value,
)

__version__ = "0.1.0"

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "BalanceReport",
    "BehaviorPolicy",
    "BoostingConfig",
    "ConfigError",
    "DataError",
    "Dataset",
    "ExperimentResult",
    "FeatureRanking",
    "FeatureSchema",
    "FitError",
    "GroundTruth",
    "ImputedRewardMatrix",
    "LinearPolicy",
    "LoggedSample",
    "ObservedPolicy",
    "OffBanditError",
    "OffsetTreePolicy",
    "OracleValue",
    "OraclePolicy",
    "Policy",
    "PolicyValueEstimate",
    "PreprocessStats",
    "PropensityModel",
    "RandomPolicy",
    "RewardModel",
    "SoftmaxPolicy",
    "SynthConfig",
    "TTestResult",
    "accel_magnitude",
    "asmd",
    "binarize_rewards",
    "clip_propensity",
    "decide",
    "export_csv",
    "fit_gbm_propensity",
    "fit_multinomial_logit",
    "fit_offset_tree",
    "fit_policy",
    "fit_reward_models",
    "generate",
    "impute_rewards",
    "ingest_csv",
    "kfold_split",
    "learn_policy",
    "load_dataset",
    "load_policy_json",
    "make_baseline",
    "make_ground_truth",
    "predict_propensities",
    "predict_reward",
    "rank_features",
    "run_experiment",
    "sample_dataset",
    "scale_features",
    "split_multi_action",
    "t_test_independent",
    "true_value",
    "value_dm",
    "value_dr",
    "value_tipw",
    "__version__",
]
