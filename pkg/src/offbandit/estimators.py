"""Off-policy value estimators for candidate policies on logged data.

All three estimators average per-sample contributions; the importance
weighted ones are Horvitz-Thompson style (no weight-sum normalization),
so values can exceed the reward range when propensities are small. A
self-normalized variant is available behind a flag for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, FitError
from .learners import Policy
from .propensity import PropensityModel, clip_propensity
from .reward import RewardModel

KIND_DM = "DM"
KIND_IPW = "IPW"
KIND_TIPW = "tIPW"
KIND_DR = "DR"


@dataclass(frozen=True)
class PolicyValueEstimate:
    """Estimated policy value with its per-sample breakdown."""

    mean: float
    std_error: float
    per_sample_contributions: np.ndarray
    estimator_kind: str
    tau: float

    @property
    def n_samples(self) -> int:
        return self.per_sample_contributions.shape[0]

    def to_row(self) -> dict:
        return {
            "estimator": self.estimator_kind,
            "tau": self.tau,
            "mean": self.mean,
            "std_error": self.std_error,
            "T": self.n_samples,
        }


def _finish(contributions: np.ndarray, kind: str, tau: float) -> PolicyValueEstimate:
    n = contributions.shape[0]
    std_error = float(contributions.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return PolicyValueEstimate(
        mean=float(contributions.mean()),
        std_error=std_error,
        per_sample_contributions=contributions,
        estimator_kind=kind,
        tau=tau,
    )


def _check_arms(policy: Policy, data: Dataset, *models) -> None:
    n_arms = data.schema.n_arms
    if policy.n_arms != n_arms:
        raise ConfigError("policy and dataset disagree on the number of arms")
    for model in models:
        if model.n_arms != n_arms:
            raise ConfigError("model and dataset disagree on the number of arms")


def value_dm(policy: Policy, data: Dataset, rm: RewardModel) -> PolicyValueEstimate:
    """Direct-method value: reward-model predictions under the policy.

    Per-sample contribution is the policy's action distribution dotted
    with the per-arm reward predictions; for a deterministic policy this
    collapses to the prediction at the chosen arm.
    """
    _check_arms(policy, data, rm)
    probs = policy.action_probs(data.contexts, data.actions)
    rhat = rm.predict_matrix(data.contexts)
    return _finish((probs * rhat).sum(axis=1), KIND_DM, 0.0)


def value_tipw(
    policy: Policy,
    data: Dataset,
    pm: PropensityModel,
    tau: float = 0.0,
    self_normalized: bool = False,
) -> PolicyValueEstimate:
    """Trimmed inverse-propensity-weighted value.

    Per-sample contribution is policy-prob-of-logged-action times reward
    over the tau-clipped propensity. tau = 0 recovers the classic IPW
    estimator.
    """
    _check_arms(policy, data, pm)
    if data.rewards is None:
        raise FitError("dataset has no binary rewards; binarize first")
    rows = np.arange(data.n_samples)
    probs = policy.action_probs(data.contexts, data.actions)
    pe = probs[rows, data.actions]
    phat = pm.predict_matrix(data.contexts)[rows, data.actions]
    weights = pe / clip_propensity(phat, tau, data.schema.n_arms)
    if self_normalized:
        total = weights.sum()
        if total > 0:
            weights = weights * (data.n_samples / total)
    kind = KIND_IPW if tau == 0.0 else KIND_TIPW
    return _finish(weights * data.rewards, kind, tau)


def value_dr(
    policy: Policy,
    data: Dataset,
    rm: RewardModel,
    pm: PropensityModel,
    tau: float = 0.0,
    self_normalized: bool = False,
) -> PolicyValueEstimate:
    """Doubly robust value: direct method plus a weighted residual correction.

    The direct term sums reward predictions over the policy's action
    distribution; the correction reweights the reward-model residual at
    the logged action by policy-prob over tau-clipped propensity. The
    estimate is consistent when either component model is correct.
    """
    _check_arms(policy, data, rm, pm)
    if data.rewards is None:
        raise FitError("dataset has no binary rewards; binarize first")
    rows = np.arange(data.n_samples)
    probs = policy.action_probs(data.contexts, data.actions)
    rhat = rm.predict_matrix(data.contexts)
    direct = (probs * rhat).sum(axis=1)
    pe = probs[rows, data.actions]
    phat = pm.predict_matrix(data.contexts)[rows, data.actions]
    weights = pe / clip_propensity(phat, tau, data.schema.n_arms)
    if self_normalized:
        total = weights.sum()
        if total > 0:
            weights = weights * (data.n_samples / total)
    residual = data.rewards - rhat[rows, data.actions]
    return _finish(direct + weights * residual, KIND_DR, tau)
