"""Per-arm reward regression: the approximator behind DM and DR.

Each arm gets its own L2-regularized binary logistic regression of
reward on context, fit over the samples where that arm was the logged
action. Predictions are probabilities of a positive reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, FitError
from .logistic import fit_binary_logistic, sigmoid


@dataclass(frozen=True)
class RewardModel:
    """One logistic regression per arm, sharing the context schema."""

    coef: np.ndarray        # (K, F)
    intercept: np.ndarray   # (K,)
    lam: float
    feature_names: tuple[str, ...]
    arm_names: tuple[str, ...]

    @property
    def n_arms(self) -> int:
        return len(self.arm_names)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Predicted reward probability for every (context, arm) pair."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ConfigError(
                f"context matrix has shape {X.shape}, expected (n, {len(self.feature_names)})"
            )
        return sigmoid(X @ self.coef.T + self.intercept)

    def predict_one(self, context: np.ndarray, arm: int) -> float:
        context = np.asarray(context, dtype=float)
        if context.ndim != 1 or context.shape[0] != len(self.feature_names):
            raise ConfigError(
                f"context has shape {context.shape}, expected ({len(self.feature_names)},)"
            )
        if not 0 <= arm < self.n_arms:
            raise ConfigError(f"arm index {arm} outside [0, {self.n_arms})")
        return float(sigmoid(context @ self.coef[arm] + self.intercept[arm]))

    def to_json_dict(self) -> dict:
        return {
            "format": "reward-model/1",
            "lambda": self.lam,
            "feature_names": list(self.feature_names),
            "arms": {
                name: {
                    "intercept": float(self.intercept[a]),
                    "coefficients": {
                        fname: float(self.coef[a, f]) for f, fname in enumerate(self.feature_names)
                    },
                }
                for a, name in enumerate(self.arm_names)
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RewardModel":
        if doc.get("format") != "reward-model/1":
            raise ConfigError(f"unsupported reward model document: {doc.get('format')!r}")
        feature_names = tuple(doc["feature_names"])
        arm_names = tuple(doc["arms"].keys())
        coef = np.array(
            [[doc["arms"][a]["coefficients"][f] for f in feature_names] for a in arm_names]
        )
        intercept = np.array([doc["arms"][a]["intercept"] for a in arm_names])
        return cls(
            coef=coef,
            intercept=intercept,
            lam=float(doc["lambda"]),
            feature_names=feature_names,
            arm_names=arm_names,
        )


def fit_reward_models(train: Dataset, lam: float = 1.0) -> RewardModel:
    """Fit the per-arm reward regressions on a training dataset.

    Arms whose samples all share one reward value still fit (the ridge
    keeps the optimum finite); an arm with no samples at all is an error.
    """
    if train.rewards is None:
        raise FitError("dataset has no binary rewards; binarize first")
    if lam < 0:
        raise ConfigError("lambda must be non-negative")
    n_arms = train.schema.n_arms
    n_feat = train.schema.n_features
    coef = np.zeros((n_arms, n_feat))
    intercept = np.zeros(n_arms)
    for a in range(n_arms):
        mask = train.actions == a
        if not mask.any():
            raise FitError(f"no samples for arm {train.schema.arm_names[a]!r}")
        coef[a], intercept[a], _ = fit_binary_logistic(
            train.contexts[mask], train.rewards[mask], lam
        )
    return RewardModel(
        coef=coef,
        intercept=intercept,
        lam=lam,
        feature_names=train.schema.names,
        arm_names=train.schema.arm_names,
    )


def predict_reward(model: RewardModel, context: np.ndarray, arm: int) -> float:
    """Predicted probability of a positive reward for (context, arm)."""
    return model.predict_one(context, arm)
