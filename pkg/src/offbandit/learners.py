"""Policy classes and offline policy learners.

Learning follows an imputation-then-classify reduction: build a T x K
matrix of imputed per-arm rewards (direct-method, inverse-propensity, or
doubly-robust flavors), then fit one logistic scorer per arm on
sign/magnitude-decomposed cells and act by argmax. The offset tree is an
alternative reduction to a tournament of weighted binary classifiers
arranged over a balanced tree of arms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, FitError
from .logistic import fit_binary_logistic, softmax
from .propensity import PropensityModel, clip_propensity
from .reward import RewardModel

METHOD_DM = "dm"
METHOD_IPW = "ipw"
METHOD_DR = "dr"


class Policy:
    """Decision rule mapping contexts to a distribution over arms."""

    arm_names: tuple[str, ...]

    @property
    def n_arms(self) -> int:
        return len(self.arm_names)

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        """Per-context probability-simplex rows over the arms.

        ``actions`` carries the logged arm of each row; only policies
        defined relative to the log (the observed policy) use it.
        """
        raise NotImplementedError


def _default_arm_names(n_arms: int) -> tuple[str, ...]:
    width = max(2, len(str(n_arms - 1)))
    return tuple(f"arm{i:0{width}d}" for i in range(n_arms))


def _one_hot(indices: np.ndarray, n_arms: int) -> np.ndarray:
    out = np.zeros((indices.shape[0], n_arms))
    out[np.arange(indices.shape[0]), indices] = 1.0
    return out


@dataclass(frozen=True)
class LinearPolicy(Policy):
    """Deterministic argmax over per-arm linear scores; ties to the lowest index."""

    coef: np.ndarray        # (K, F)
    intercept: np.ndarray   # (K,)
    feature_names: tuple[str, ...]
    arm_names: tuple[str, ...]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ConfigError(
                f"context matrix has shape {X.shape}, expected (n, {len(self.feature_names)})"
            )
        return X @ self.coef.T + self.intercept

    def decide_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def decide(self, context: np.ndarray) -> int:
        return int(self.decide_batch(np.asarray(context, dtype=float)[None, :])[0])

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        return _one_hot(self.decide_batch(X), self.n_arms)

    def to_json_dict(self) -> dict:
        return {
            "format": "linear-policy/1",
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
    def from_json_dict(cls, doc: dict) -> "LinearPolicy":
        if doc.get("format") != "linear-policy/1":
            raise ConfigError(f"unsupported policy document: {doc.get('format')!r}")
        feature_names = tuple(doc["feature_names"])
        arm_names = tuple(doc["arms"].keys())
        coef = np.array(
            [[doc["arms"][a]["coefficients"][f] for f in feature_names] for a in arm_names]
        )
        intercept = np.array([doc["arms"][a]["intercept"] for a in arm_names])
        return cls(coef=coef, intercept=intercept, feature_names=feature_names,
                   arm_names=arm_names)


@dataclass(frozen=True)
class SoftmaxPolicy(Policy):
    """Stochastic policy: softmax over per-arm linear scores."""

    coef: np.ndarray
    intercept: np.ndarray
    feature_names: tuple[str, ...]
    arm_names: tuple[str, ...]

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ConfigError(
                f"context matrix has shape {X.shape}, expected (n, {len(self.feature_names)})"
            )
        return softmax(X @ self.coef.T + self.intercept)


@dataclass(frozen=True)
class RandomPolicy(Policy):
    """Uniform 1/K over all arms in every context."""

    arm_names: tuple[str, ...]

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        n = np.asarray(X).shape[0]
        return np.full((n, self.n_arms), 1.0 / self.n_arms)


@dataclass(frozen=True)
class ObservedPolicy(Policy):
    """Plays exactly the logged action of each evaluated sample."""

    arm_names: tuple[str, ...]

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        if actions is None:
            raise ConfigError("the observed policy needs the logged actions to be evaluated")
        actions = np.asarray(actions, dtype=np.int64)
        return _one_hot(actions, self.n_arms)


@dataclass(frozen=True)
class BehaviorPolicy(Policy):
    """Stochastic baseline that mimics the estimated behavior policy."""

    model: PropensityModel

    @property
    def arm_names(self) -> tuple[str, ...]:  # type: ignore[override]
        return self.model.arm_names

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        return self.model.predict_matrix(X)


def make_baseline(kind: str, n_arms: int, arm_names: tuple[str, ...] | None = None) -> Policy:
    """Construct the random or observed baseline policy."""
    if n_arms < 1:
        raise ConfigError("need at least one arm")
    names = tuple(arm_names) if arm_names is not None else _default_arm_names(n_arms)
    if len(names) != n_arms:
        raise ConfigError("arm_names length does not match n_arms")
    if kind == "random":
        return RandomPolicy(arm_names=names)
    if kind == "observed":
        return ObservedPolicy(arm_names=names)
    raise ConfigError(f"unknown baseline kind: {kind!r}")


# ---------------------------------------------------------------------------
# Imputation-then-classify reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImputedRewardMatrix:
    """T x K matrix of imputed per-arm rewards plus the method that built it."""

    values: np.ndarray
    method: str
    tau: float

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise FitError("imputed reward matrix contains non-finite entries")


def impute_rewards(
    data: Dataset,
    method: str,
    rm: RewardModel | None = None,
    pm: PropensityModel | None = None,
    tau: float = 0.0,
) -> ImputedRewardMatrix:
    """Build the imputed reward matrix for one of the dm/ipw/dr methods.

    Logged cells (i, a_i) follow the method formulas with the propensity
    clipped at tau. Off-logged cells carry the reward-model prediction
    for dm and dr; under ipw they are 0 because nothing was observed
    there.
    """
    if method not in (METHOD_DM, METHOD_IPW, METHOD_DR):
        raise ConfigError(f"unknown imputation method: {method!r}")
    if method in (METHOD_DM, METHOD_DR) and rm is None:
        raise ConfigError(f"method {method!r} requires a reward model")
    if method in (METHOD_IPW, METHOD_DR) and pm is None:
        raise ConfigError(f"method {method!r} requires a propensity model")
    if data.rewards is None:
        raise FitError("dataset has no binary rewards; binarize first")
    n = data.n_samples
    rows = np.arange(n)
    if method == METHOD_DM:
        values = rm.predict_matrix(data.contexts)
        return ImputedRewardMatrix(values=values, method=method, tau=tau)
    phat = pm.predict_matrix(data.contexts)[rows, data.actions]
    phat = clip_propensity(phat, tau, data.schema.n_arms)
    if method == METHOD_IPW:
        values = np.zeros((n, data.schema.n_arms))
        values[rows, data.actions] = data.rewards / phat
    else:
        values = rm.predict_matrix(data.contexts)
        logged = values[rows, data.actions]
        values[rows, data.actions] = logged + (data.rewards - logged) / phat
    return ImputedRewardMatrix(values=values, method=method, tau=tau)


def fit_policy(
    imputed: ImputedRewardMatrix, data: Dataset, policy_lambda: float = 1.0
) -> LinearPolicy:
    """Distill an imputed reward matrix into a linear argmax policy.

    Every cell becomes one weighted binary example for its arm's scorer:
    label 1 if the imputed reward is positive (else 0), weight equal to
    its magnitude. Zero-valued cells carry no weight; an arm whose whole
    column is zero keeps zero coefficients and is only chosen on ties.
    """
    values = imputed.values
    n, n_arms = values.shape
    if n != data.n_samples or n_arms != data.schema.n_arms:
        raise ConfigError("imputed matrix shape does not match the dataset")
    coef = np.zeros((n_arms, data.schema.n_features))
    intercept = np.zeros(n_arms)
    for a in range(n_arms):
        column = values[:, a]
        weights = np.abs(column)
        mask = weights > 0
        if not mask.any():
            continue
        labels = (column[mask] > 0).astype(float)
        coef[a], intercept[a], _ = fit_binary_logistic(
            data.contexts[mask], labels, policy_lambda, sample_weight=weights[mask]
        )
    return LinearPolicy(
        coef=coef,
        intercept=intercept,
        feature_names=data.schema.names,
        arm_names=data.schema.arm_names,
    )


def decide(policy: LinearPolicy, context: np.ndarray) -> int:
    """Arm chosen by the policy for one context (ties to the lowest index)."""
    return policy.decide(context)


# ---------------------------------------------------------------------------
# Offset tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _OffsetNode:
    """Internal tree node deciding between two contiguous arm ranges."""

    lo: int
    hi: int
    mid: int
    coef: np.ndarray
    intercept: float
    left_child: int | None   # node index, or None when the left side is a leaf
    right_child: int | None

    @property
    def left_arm(self) -> int | None:
        return self.lo if self.left_child is None else None

    @property
    def right_arm(self) -> int | None:
        return self.mid if self.right_child is None else None


@dataclass(frozen=True)
class OffsetTreePolicy(Policy):
    """Balanced binary tournament over arms with one classifier per node.

    Routing starts at the root and goes right when the node score is
    positive; a zero score routes left (toward lower arm indices), which
    is also the behavior of untrained nodes.
    """

    nodes: tuple[_OffsetNode, ...]
    feature_names: tuple[str, ...]
    arm_names: tuple[str, ...]

    def route(self, context: np.ndarray) -> tuple[list[int], int]:
        """Node indices visited and the arm finally selected."""
        context = np.asarray(context, dtype=float)
        path = []
        idx = 0
        while True:
            node = self.nodes[idx]
            path.append(idx)
            go_right = float(context @ node.coef + node.intercept) > 0.0
            child = node.right_child if go_right else node.left_child
            if child is None:
                return path, (node.mid if go_right else node.lo)
            idx = child

    def decide(self, context: np.ndarray) -> int:
        return self.route(context)[1]

    def decide_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ConfigError(
                f"context matrix has shape {X.shape}, expected (n, {len(self.feature_names)})"
            )
        scores = X @ np.stack([n.coef for n in self.nodes]).T + np.array(
            [n.intercept for n in self.nodes]
        )
        n = X.shape[0]
        out = np.empty(n, dtype=np.int64)
        state = np.zeros(n, dtype=np.int64)
        done = np.full(n, False)
        while not done.all():
            for idx in np.unique(state[~done]):
                node = self.nodes[idx]
                here = (state == idx) & ~done
                go_right = scores[here, idx] > 0.0
                for right, child, arm in (
                    (True, node.right_child, node.mid),
                    (False, node.left_child, node.lo),
                ):
                    sel = np.where(here)[0][go_right == right]
                    if child is None:
                        out[sel] = arm
                        done[sel] = True
                    else:
                        state[sel] = child
        return out

    def action_probs(self, X: np.ndarray, actions: np.ndarray | None = None) -> np.ndarray:
        return _one_hot(self.decide_batch(X), self.n_arms)

    @property
    def max_route_length(self) -> int:
        """Longest root-to-leaf classifier chain; equals ceil(log2 K)."""
        depth = {0: 1}
        best = 1
        for idx, node in enumerate(self.nodes):
            for child in (node.left_child, node.right_child):
                if child is not None:
                    depth[child] = depth[idx] + 1
                    best = max(best, depth[child])
        return best

    def to_json_dict(self) -> dict:
        return {
            "format": "offset-tree-policy/1",
            "feature_names": list(self.feature_names),
            "arm_names": list(self.arm_names),
            "nodes": [
                {
                    "arms": [node.lo, node.hi],
                    "mid": node.mid,
                    "left_child": node.left_child,
                    "right_child": node.right_child,
                    "intercept": float(node.intercept),
                    "coefficients": {
                        fname: float(node.coef[f]) for f, fname in enumerate(self.feature_names)
                    },
                }
                for node in self.nodes
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "OffsetTreePolicy":
        if doc.get("format") != "offset-tree-policy/1":
            raise ConfigError(f"unsupported policy document: {doc.get('format')!r}")
        feature_names = tuple(doc["feature_names"])
        nodes = tuple(
            _OffsetNode(
                lo=rec["arms"][0],
                hi=rec["arms"][1],
                mid=rec["mid"],
                coef=np.array([rec["coefficients"][f] for f in feature_names]),
                intercept=float(rec["intercept"]),
                left_child=rec["left_child"],
                right_child=rec["right_child"],
            )
            for rec in doc["nodes"]
        )
        return cls(nodes=nodes, feature_names=feature_names, arm_names=tuple(doc["arm_names"]))


def fit_offset_tree(
    data: Dataset,
    pm: PropensityModel,
    tau: float = 0.0,
    policy_lambda: float = 1.0,
) -> OffsetTreePolicy:
    """Learn an offset-tree policy from binary-reward logged data.

    Arms are arranged in index order on a balanced binary tree. Each
    internal node sees the samples whose logged action lies in its range
    as weighted binary examples: a rewarded sample votes for the side
    holding its action, an unrewarded one for the opposite side, with
    weight |reward - 1/2| / clipped propensity. Nodes without examples
    keep a zero classifier, i.e. they route left.
    """
    if data.rewards is None:
        raise FitError("dataset has no binary rewards; binarize first")
    n_arms = data.schema.n_arms
    rows = np.arange(data.n_samples)
    phat = pm.predict_matrix(data.contexts)[rows, data.actions]
    phat = clip_propensity(phat, tau, n_arms)
    base_weight = np.abs(data.rewards - 0.5) / phat
    rewarded = data.rewards > 0.5

    nodes: list[_OffsetNode | None] = []

    def build(lo: int, hi: int) -> int:
        idx = len(nodes)
        nodes.append(None)  # reserve slot so children get stable indices
        mid = (lo + hi + 1) // 2
        in_range = (data.actions >= lo) & (data.actions < hi)
        usable = in_range & (base_weight > 0)
        side = (data.actions[usable] >= mid).astype(float)
        labels = np.where(rewarded[usable], side, 1.0 - side)
        if usable.any():
            coef, intercept, _ = fit_binary_logistic(
                data.contexts[usable],
                labels,
                policy_lambda,
                sample_weight=base_weight[usable],
            )
        else:
            coef, intercept = np.zeros(data.schema.n_features), 0.0
        left_child = build(lo, mid) if mid - lo > 1 else None
        right_child = build(mid, hi) if hi - mid > 1 else None
        nodes[idx] = _OffsetNode(
            lo=lo, hi=hi, mid=mid, coef=coef, intercept=float(intercept),
            left_child=left_child, right_child=right_child,
        )
        return idx

    build(0, n_arms)
    return OffsetTreePolicy(
        nodes=tuple(nodes),
        feature_names=data.schema.names,
        arm_names=data.schema.arm_names,
    )


def learn_policy(
    train: Dataset,
    algorithm: str,
    pm: PropensityModel | None = None,
    rm: RewardModel | None = None,
    tau: float = 0.0,
    policy_lambda: float = 1.0,
) -> Policy:
    """Learn a policy by name: dm, ipw, dr, ot, random, or observed."""
    if algorithm in (METHOD_DM, METHOD_IPW, METHOD_DR):
        imputed = impute_rewards(train, algorithm, rm=rm, pm=pm, tau=tau)
        return fit_policy(imputed, train, policy_lambda)
    if algorithm == "ot":
        if pm is None:
            raise ConfigError("the offset tree requires a propensity model")
        return fit_offset_tree(train, pm, tau, policy_lambda)
    if algorithm in ("random", "observed"):
        return make_baseline(algorithm, train.schema.n_arms, train.schema.arm_names)
    if algorithm == "behavior":
        if pm is None:
            raise ConfigError("the behavior baseline requires a propensity model")
        return BehaviorPolicy(model=pm)
    raise ConfigError(f"unknown algorithm: {algorithm!r}")


def load_policy_json(doc: dict) -> Policy:
    """Rebuild a serialized policy from its JSON document."""
    fmt = doc.get("format")
    if fmt == "linear-policy/1":
        return LinearPolicy.from_json_dict(doc)
    if fmt == "offset-tree-policy/1":
        return OffsetTreePolicy.from_json_dict(doc)
    raise ConfigError(f"unsupported policy document: {fmt!r}")
