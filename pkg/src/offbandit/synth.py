"""Synthetic logged-bandit environments with known ground truth.

These environments are the verification oracle for the estimators and
learners: contexts are drawn from independent feature distributions, the
behavior policy is an explicit softmax-linear rule, and the expected
reward is an explicit logistic surface (optionally with quadratic terms
to create a misspecified scenario). Everything is seed-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import BINARY, CONTINUOUS, Dataset, FeatureSchema
from .errors import ConfigError
from .learners import Policy, SoftmaxPolicy, _default_arm_names, _one_hot
from .logistic import sigmoid, softmax
from .propensity import KIND_LOGIT, PropensityModel
from .reward import RewardModel


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for a generated environment.

    ``n_informative`` features get nonzero planted coefficients in both
    the behavior and reward surfaces; the rest are pure noise.
    ``label_flip_prob`` mixes the reward Bernoulli toward a coin flip.
    """

    n_samples: int = 5000
    n_arms: int = 10
    n_features: int = 40
    n_informative: int = 3
    binary_fraction: float = 0.5
    behavior_strength: float = 0.5
    behavior_intercept_spread: float = 0.3
    reward_strength: float = 3.0
    reward_intercept_loc: float = -0.3
    reward_intercept_spread: float = 0.7
    label_flip_prob: float = 0.0
    quadratic_reward: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if self.n_arms < 2:
            raise ConfigError("need at least two arms")
        if not 0 <= self.n_informative <= self.n_features:
            raise ConfigError("n_informative must lie in [0, n_features]")
        if not 0.0 <= self.binary_fraction <= 1.0:
            raise ConfigError("binary_fraction must lie in [0, 1]")
        if not 0.0 <= self.label_flip_prob < 0.5:
            raise ConfigError("label_flip_prob must lie in [0, 0.5)")


@dataclass(frozen=True)
class GroundTruth:
    """Explicit generative model: context sampler, behavior policy, reward surface."""

    schema: FeatureSchema
    behavior_coef: np.ndarray        # (K, F)
    behavior_intercept: np.ndarray   # (K,)
    reward_coef: np.ndarray          # (K, F)
    reward_intercept: np.ndarray     # (K,)
    reward_quadratic: np.ndarray | None = None
    label_flip_prob: float = 0.0
    informative: tuple[int, ...] = ()

    @property
    def n_arms(self) -> int:
        return self.schema.n_arms

    def sample_contexts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Independent features: binary ~ Bernoulli(1/2), continuous ~ U[0, 1]."""
        X = np.empty((n, self.schema.n_features))
        for j, kind in enumerate(self.schema.kinds):
            if kind == BINARY:
                X[:, j] = (rng.random(n) < 0.5).astype(float)
            else:
                X[:, j] = rng.random(n)
        return X

    def behavior_probs(self, X: np.ndarray) -> np.ndarray:
        return softmax(X @ self.behavior_coef.T + self.behavior_intercept)

    def reward_means(self, X: np.ndarray) -> np.ndarray:
        """True expected reward for every (context, arm) pair, flips included."""
        logits = X @ self.reward_coef.T + self.reward_intercept
        if self.reward_quadratic is not None:
            logits = logits + (X * X) @ self.reward_quadratic.T
        means = sigmoid(logits)
        if self.label_flip_prob > 0:
            means = means * (1.0 - self.label_flip_prob) + (1.0 - means) * self.label_flip_prob
        return means

    def behavior_policy(self) -> SoftmaxPolicy:
        return SoftmaxPolicy(
            coef=self.behavior_coef,
            intercept=self.behavior_intercept,
            feature_names=self.schema.names,
            arm_names=self.schema.arm_names,
        )

    def optimal_policy(self) -> "OraclePolicy":
        return OraclePolicy(ground_truth=self, arm_names=self.schema.arm_names)

    def behavior_model(self) -> PropensityModel:
        """The true behavior policy wrapped as a propensity model."""
        return PropensityModel(
            kind=KIND_LOGIT,
            feature_names=self.schema.names,
            arm_names=self.schema.arm_names,
            coef=self.behavior_coef.copy(),
            intercept=self.behavior_intercept.copy(),
        )

    def corrupted_behavior_model(self, noise_std: float = 1.0, seed: int = 0) -> PropensityModel:
        """Behavior model with per-arm logits shifted by Gaussian noise."""
        rng = np.random.default_rng(seed)
        return PropensityModel(
            kind=KIND_LOGIT,
            feature_names=self.schema.names,
            arm_names=self.schema.arm_names,
            coef=self.behavior_coef.copy(),
            intercept=self.behavior_intercept + rng.normal(0.0, noise_std, self.n_arms),
        )

    def reward_model(self) -> RewardModel:
        """The true reward surface wrapped as a reward model (linear case only)."""
        if self.reward_quadratic is not None:
            raise ConfigError("the quadratic reward surface has no exact linear-logit form")
        return RewardModel(
            coef=self.reward_coef.copy(),
            intercept=self.reward_intercept.copy(),
            lam=0.0,
            feature_names=self.schema.names,
            arm_names=self.schema.arm_names,
        )

    def to_json_dict(self) -> dict:
        return {
            "format": "ground-truth/1",
            "schema": self.schema.to_json_dict(),
            "behavior_coef": self.behavior_coef.tolist(),
            "behavior_intercept": self.behavior_intercept.tolist(),
            "reward_coef": self.reward_coef.tolist(),
            "reward_intercept": self.reward_intercept.tolist(),
            "reward_quadratic": (
                None if self.reward_quadratic is None else self.reward_quadratic.tolist()
            ),
            "label_flip_prob": self.label_flip_prob,
            "informative": list(self.informative),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GroundTruth":
        if doc.get("format") != "ground-truth/1":
            raise ConfigError(f"unsupported ground truth document: {doc.get('format')!r}")
        quad = doc.get("reward_quadratic")
        return cls(
            schema=FeatureSchema.from_json_dict(doc["schema"]),
            behavior_coef=np.asarray(doc["behavior_coef"], dtype=float),
            behavior_intercept=np.asarray(doc["behavior_intercept"], dtype=float),
            reward_coef=np.asarray(doc["reward_coef"], dtype=float),
            reward_intercept=np.asarray(doc["reward_intercept"], dtype=float),
            reward_quadratic=None if quad is None else np.asarray(quad, dtype=float),
            label_flip_prob=float(doc.get("label_flip_prob", 0.0)),
            informative=tuple(doc.get("informative", ())),
        )


@dataclass(frozen=True)
class OraclePolicy(Policy):
    """Plays the arm with the highest true expected reward (ties to lowest index)."""

    ground_truth: GroundTruth
    arm_names: tuple[str, ...]

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        best = np.argmax(self.ground_truth.reward_means(np.asarray(X, dtype=float)), axis=1)
        return _one_hot(best, self.n_arms)


def make_ground_truth(config: SynthConfig) -> GroundTruth:
    """Draw a ground-truth environment from the config's seed."""
    rng = np.random.default_rng(config.seed)
    n_binary = int(round(config.n_features * config.binary_fraction))
    kinds = tuple(
        BINARY if j < n_binary else CONTINUOUS for j in range(config.n_features)
    )
    width = max(2, len(str(config.n_features - 1)))
    schema = FeatureSchema(
        names=tuple(f"f{j:0{width}d}" for j in range(config.n_features)),
        kinds=kinds,
        arm_names=_default_arm_names(config.n_arms),
    )
    informative = tuple(
        sorted(rng.choice(config.n_features, size=config.n_informative, replace=False).tolist())
    )
    behavior_coef = np.zeros((config.n_arms, config.n_features))
    reward_coef = np.zeros((config.n_arms, config.n_features))
    idx = list(informative)
    behavior_coef[:, idx] = rng.normal(0.0, config.behavior_strength,
                                       (config.n_arms, len(idx)))
    behavior_intercept = rng.normal(0.0, config.behavior_intercept_spread, config.n_arms)
    reward_coef[:, idx] = rng.normal(0.0, config.reward_strength, (config.n_arms, len(idx)))
    reward_intercept = rng.normal(
        config.reward_intercept_loc, config.reward_intercept_spread, config.n_arms
    )
    reward_quadratic = None
    if config.quadratic_reward:
        reward_quadratic = np.zeros((config.n_arms, config.n_features))
        reward_quadratic[:, idx] = rng.normal(
            0.0, config.reward_strength, (config.n_arms, len(idx))
        )
    return GroundTruth(
        schema=schema,
        behavior_coef=behavior_coef,
        behavior_intercept=behavior_intercept,
        reward_coef=reward_coef,
        reward_intercept=reward_intercept,
        reward_quadratic=reward_quadratic,
        label_flip_prob=config.label_flip_prob,
        informative=informative,
    )


def sample_dataset(gt: GroundTruth, n_samples: int, seed: int) -> Dataset:
    """Draw a logged dataset from the environment: x, a ~ behavior, r ~ Bernoulli."""
    if n_samples < 1:
        raise ConfigError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    X = gt.sample_contexts(n_samples, rng)
    probs = gt.behavior_probs(X)
    cum = probs.cumsum(axis=1)
    actions = (rng.random(n_samples)[:, None] > cum).sum(axis=1).astype(np.int64)
    means = gt.reward_means(X)[np.arange(n_samples), actions]
    rewards = (rng.random(n_samples) < means).astype(float)
    return Dataset(schema=gt.schema, contexts=X, actions=actions, rewards=rewards)


def generate(config: SynthConfig) -> tuple[Dataset, GroundTruth]:
    """Build an environment and one logged dataset from it, all from one seed."""
    gt = make_ground_truth(config)
    return sample_dataset(gt, config.n_samples, config.seed), gt


@dataclass(frozen=True)
class OracleValue:
    """Monte Carlo estimate of a policy's true value."""

    value: float
    std_error: float
    n_mc: int


def true_value(
    policy: Policy, gt: GroundTruth, n_mc: int = 200_000, seed: int = 0
) -> OracleValue:
    """True policy value by Monte Carlo over fresh contexts.

    Averages the policy's action distribution against the true expected
    rewards, so only context sampling contributes Monte Carlo error.
    """
    if n_mc < 1:
        raise ConfigError("n_mc must be positive")
    rng = np.random.default_rng(seed)
    X = gt.sample_contexts(n_mc, rng)
    per_context = (policy.action_probs(X) * gt.reward_means(X)).sum(axis=1)
    se = float(per_context.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return OracleValue(value=float(per_context.mean()), std_error=se, n_mc=n_mc)
