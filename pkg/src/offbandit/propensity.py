"""Behavior-policy estimation and covariate-balance diagnostics.

The logged actions came from an unknown decision rule, so importance
weighting needs an estimate of the probability each arm had of being
chosen in each context. Two estimators are provided: an L2-regularized
multinomial logit and softmax-deviance boosted trees whose stopping
iteration is picked by covariate balance (mean absolute standardized
mean difference under inverse-propensity weights) rather than deviance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from .data import Dataset
from .errors import ConfigError, FitError
from .logistic import fit_multinomial_logistic, softmax

KIND_BOOSTED = "boosted_trees"
KIND_LOGIT = "multinomial_logit"


def clip_propensity(p, tau: float, n_arms: int):
    """Lower-bound propensity scores at tau; tau must obey tau < 1/K.

    The trimming threshold is only admissible below 1/K (the uniform
    probability), which is the standard heuristic bound for the number
    of arms K. Accepts scalars or arrays.
    """
    if not 0.0 <= tau < 1.0 / n_arms:
        raise ConfigError(
            f"tau={tau} violates the heuristic bound tau < 1/K "
            f"(K={n_arms} arms, 1/K={1.0 / n_arms:.4g})"
        )
    return np.maximum(p, tau)


@dataclass(frozen=True)
class BoostingConfig:
    """Hyperparameters for the boosted-trees propensity fit.

    Balance is evaluated at iteration 1 and then every
    ``checkpoint_every`` iterations; the model is truncated at the
    checkpoint with the best (lowest) balance summary.
    """

    max_iterations: int = 5000
    tree_depth: int = 3
    shrinkage: float = 0.05
    min_samples_leaf: int = 10
    checkpoint_every: int = 50
    balance_aggregate: str = "mean"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ConfigError("shrinkage must lie in (0, 1]")
        if self.tree_depth < 1 or self.min_samples_leaf < 1:
            raise ConfigError("tree_depth and min_samples_leaf must be positive")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be positive")
        if self.balance_aggregate not in ("mean", "max"):
            raise ConfigError("balance_aggregate must be 'mean' or 'max'")


@dataclass(frozen=True)
class BalanceReport:
    """Per-feature, per-arm absolute standardized mean differences.

    ``values[f, a]`` contrasts the weighted mean of feature f among
    samples with action a against all other samples, divided by the
    pooled (unweighted) standard deviation. ``iteration_curve`` holds
    (iteration, summary) pairs for boosted fits.
    """

    values: np.ndarray
    summary: float
    aggregate: str
    feature_names: tuple[str, ...]
    arm_names: tuple[str, ...]
    iteration_curve: tuple[tuple[int, float], ...] = ()

    @property
    def max_asmd(self) -> float:
        return float(self.values.max())

    def to_json_dict(self) -> dict:
        return {
            "summary": self.summary,
            "aggregate": self.aggregate,
            "asmd": {
                fname: {aname: float(self.values[f, a]) for a, aname in enumerate(self.arm_names)}
                for f, fname in enumerate(self.feature_names)
            },
            "iteration_curve": [[it, val] for it, val in self.iteration_curve],
        }


def asmd(dataset: Dataset, weights: np.ndarray, aggregate: str = "mean") -> BalanceReport:
    """Weighted one-vs-rest covariate balance for every (feature, arm) pair.

    The denominator is the unweighted standard deviation of the feature
    over the full dataset, so curves stay comparable across weightings.
    Zero-variance features report 0.
    """
    weights = np.asarray(weights, dtype=float)
    if (weights < 0).any() or weights.sum() <= 0:
        raise ConfigError("weights must be non-negative and not all zero")
    if aggregate not in ("mean", "max"):
        raise ConfigError("aggregate must be 'mean' or 'max'")
    X = dataset.contexts
    actions = dataset.actions
    n_arms = dataset.schema.n_arms
    pooled_sd = X.std(axis=0, ddof=0)
    values = np.zeros((X.shape[1], n_arms))
    for a in range(n_arms):
        in_arm = actions == a
        w_in = weights * in_arm
        w_out = weights * ~in_arm
        if w_in.sum() == 0 or w_out.sum() == 0:
            continue
        mean_in = (w_in @ X) / w_in.sum()
        mean_out = (w_out @ X) / w_out.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            col = np.abs(mean_in - mean_out) / pooled_sd
        values[:, a] = np.where(pooled_sd > 0, col, 0.0)
    summary = float(values.mean() if aggregate == "mean" else values.max())
    return BalanceReport(
        values=values,
        summary=summary,
        aggregate=aggregate,
        feature_names=dataset.schema.names,
        arm_names=dataset.schema.arm_names,
    )


@dataclass(frozen=True)
class _Tree:
    """Compact regression tree: parallel arrays indexed by node id."""

    feature: np.ndarray      # split feature, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # leaf values, 0 at internal nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return self.value[node]
            go_left = X[np.arange(X.shape[0]), np.where(internal, feat, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def to_nested(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }

    @classmethod
    def from_nested(cls, doc: dict) -> "_Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def build(rec: dict) -> int:
            idx = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "value" in rec:
                value[idx] = float(rec["value"])
            else:
                feature[idx] = int(rec["feature"])
                threshold[idx] = float(rec["threshold"])
                left[idx] = build(rec["left"])
                right[idx] = build(rec["right"])
            return idx

        build(doc)
        return cls(
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=float),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=float),
        )


def _extract_tree(fitted: DecisionTreeRegressor, leaf_values: np.ndarray) -> _Tree:
    t = fitted.tree_
    feature = t.feature.copy()
    feature[feature < 0] = -1
    value = np.zeros(t.node_count)
    leaves = t.children_left == -1
    value[leaves] = leaf_values[leaves]
    return _Tree(
        feature=feature.astype(np.int64),
        threshold=t.threshold.copy(),
        left=t.children_left.astype(np.int64),
        right=t.children_right.astype(np.int64),
        value=value,
    )


@dataclass(frozen=True)
class PropensityModel:
    """Estimated behavior policy mapping a context to arm probabilities."""

    kind: str
    feature_names: tuple[str, ...]
    arm_names: tuple[str, ...]
    coef: np.ndarray | None = None                 # logit kind: (K, F)
    intercept: np.ndarray | None = None            # logit kind: (K,)
    trees: tuple[tuple[_Tree, ...], ...] = ()      # boosted kind: per-iteration, per-arm
    shrinkage: float = 0.0
    chosen_iteration: int | None = None

    @property
    def n_arms(self) -> int:
        return len(self.arm_names)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        """Propensity matrix with one probability-simplex row per context."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ConfigError(
                f"context matrix has shape {X.shape}, expected (n, {len(self.feature_names)})"
            )
        if self.kind == KIND_LOGIT:
            scores = X @ self.coef.T + self.intercept
        else:
            scores = np.zeros((X.shape[0], self.n_arms))
            for iteration in self.trees:
                for a, tree in enumerate(iteration):
                    scores[:, a] += self.shrinkage * tree.predict(X)
        return softmax(scores)

    def predict_one(self, context: np.ndarray) -> np.ndarray:
        context = np.asarray(context, dtype=float)
        if context.ndim != 1 or context.shape[0] != len(self.feature_names):
            raise ConfigError(
                f"context has length {context.shape}, expected {len(self.feature_names)}"
            )
        return self.predict_matrix(context[None, :])[0]

    def to_json_dict(self) -> dict:
        doc = {
            "format": "propensity-model/1",
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "arm_names": list(self.arm_names),
        }
        if self.kind == KIND_LOGIT:
            doc["coef"] = self.coef.tolist()
            doc["intercept"] = self.intercept.tolist()
        else:
            doc["shrinkage"] = self.shrinkage
            doc["chosen_iteration"] = self.chosen_iteration
            doc["trees"] = [[tree.to_nested() for tree in iteration] for iteration in self.trees]
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PropensityModel":
        if doc.get("format") != "propensity-model/1":
            raise ConfigError(f"unsupported propensity model document: {doc.get('format')!r}")
        common = {
            "feature_names": tuple(doc["feature_names"]),
            "arm_names": tuple(doc["arm_names"]),
        }
        if doc["kind"] == KIND_LOGIT:
            return cls(
                kind=KIND_LOGIT,
                coef=np.asarray(doc["coef"], dtype=float),
                intercept=np.asarray(doc["intercept"], dtype=float),
                **common,
            )
        return cls(
            kind=KIND_BOOSTED,
            trees=tuple(
                tuple(_Tree.from_nested(rec) for rec in iteration) for iteration in doc["trees"]
            ),
            shrinkage=float(doc["shrinkage"]),
            chosen_iteration=doc["chosen_iteration"],
            **common,
        )


def predict_propensities(model: PropensityModel, context: np.ndarray) -> np.ndarray:
    """Probability-simplex vector over arms for a single context."""
    return model.predict_one(context)


def _check_arm_support(dataset: Dataset) -> None:
    counts = np.bincount(dataset.actions, minlength=dataset.schema.n_arms)
    empty = np.where(counts == 0)[0]
    if empty.size:
        names = [dataset.schema.arm_names[a] for a in empty]
        raise FitError(f"no samples for arm(s): {names}")
    if dataset.n_samples < dataset.schema.n_arms:
        raise FitError("need at least as many samples as arms")


def fit_multinomial_logit(dataset: Dataset, ridge: float = 1.0) -> PropensityModel:
    """L2-regularized multinomial logit estimate of the behavior policy."""
    _check_arm_support(dataset)
    coef, intercept = fit_multinomial_logistic(
        dataset.contexts, dataset.actions, dataset.schema.n_arms, ridge
    )
    return PropensityModel(
        kind=KIND_LOGIT,
        feature_names=dataset.schema.names,
        arm_names=dataset.schema.arm_names,
        coef=coef,
        intercept=intercept,
    )


def fit_gbm_propensity(
    dataset: Dataset, config: BoostingConfig | None = None
) -> tuple[PropensityModel, BalanceReport]:
    """Boosted-trees behavior policy with balance-based early stopping.

    One regression tree per arm per iteration is fit to the softmax
    deviance residuals with Newton-style leaf values. At iteration 1 and
    every ``checkpoint_every`` iterations thereafter the balance summary
    is computed under weights 1/propensity-of-logged-action; the model
    is truncated at the argmin checkpoint (ties to the earliest).
    """
    config = config or BoostingConfig()
    _check_arm_support(dataset)
    X = dataset.contexts
    actions = dataset.actions
    n, n_arms = X.shape[0], dataset.schema.n_arms
    onehot = np.zeros((n, n_arms))
    onehot[np.arange(n), actions] = 1.0

    checkpoints = {1, config.max_iterations}
    checkpoints.update(range(config.checkpoint_every, config.max_iterations + 1,
                             config.checkpoint_every))
    scores = np.zeros((n, n_arms))
    all_trees: list[tuple[_Tree, ...]] = []
    curve: list[tuple[int, float]] = []
    best_summary = np.inf
    best_iteration = 0
    best_report: BalanceReport | None = None
    row_idx = np.arange(n)
    for m in range(1, config.max_iterations + 1):
        probs = softmax(scores)
        iteration_trees = []
        for a in range(n_arms):
            resid = onehot[:, a] - probs[:, a]
            tree = DecisionTreeRegressor(
                max_depth=config.tree_depth,
                min_samples_leaf=config.min_samples_leaf,
                random_state=0,
            ).fit(X, resid)
            leaf = tree.apply(X)
            n_nodes = tree.tree_.node_count
            num = np.bincount(leaf, weights=resid, minlength=n_nodes)
            den = np.bincount(
                leaf, weights=np.abs(resid) * (1.0 - np.abs(resid)), minlength=n_nodes
            )
            gamma = ((n_arms - 1) / n_arms) * num / np.maximum(den, 1e-12)
            scores[:, a] += config.shrinkage * gamma[leaf]
            iteration_trees.append(_extract_tree(tree, gamma))
        all_trees.append(tuple(iteration_trees))
        if m in checkpoints:
            probs = softmax(scores)
            weights = 1.0 / probs[row_idx, actions]
            report = asmd(dataset, weights, aggregate=config.balance_aggregate)
            curve.append((m, report.summary))
            if report.summary < best_summary:
                best_summary = report.summary
                best_iteration = m
                best_report = report

    model = PropensityModel(
        kind=KIND_BOOSTED,
        feature_names=dataset.schema.names,
        arm_names=dataset.schema.arm_names,
        trees=tuple(all_trees[:best_iteration]),
        shrinkage=config.shrinkage,
        chosen_iteration=best_iteration,
    )
    report = BalanceReport(
        values=best_report.values,
        summary=best_report.summary,
        aggregate=best_report.aggregate,
        feature_names=best_report.feature_names,
        arm_names=best_report.arm_names,
        iteration_curve=tuple(curve),
    )
    return model, report
