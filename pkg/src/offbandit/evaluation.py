"""Cross-validated benchmarking of learners with significance tests.

Each fold refits the propensity model, the reward models, and every
requested policy on the training part, then scores policies on the held
out part with the trimmed IPW estimator. The trimming threshold is the
same during learning and evaluation. Fold means feed Welch t-tests
against the random and observed baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats

from .data import Dataset, kfold_split
from .errors import ConfigError, FitError, OffBanditError
from .estimators import value_tipw
from .learners import LinearPolicy, learn_policy
from .propensity import BoostingConfig, fit_gbm_propensity, fit_multinomial_logit
from .reward import fit_reward_models

DISPLAY_NAMES = {
    "dr": "DR",
    "dm": "DM",
    "ipw": "IPW",
    "ot": "OT",
    "random": "Random",
    "observed": "Observed",
    "behavior": "Behavior",
}

# learners whose imputation does not involve the trimming threshold
_TAU_FREE = ("dm", "random", "observed", "behavior")


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool


def t_test_independent(a, b, alpha: float = 0.05) -> TTestResult:
    """Welch's unequal-variance two-sided t-test.

    Degenerate zero-variance inputs are resolved explicitly: equal
    constants give p = 1, different constants give p = 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ConfigError("each sample needs at least two observations")
    if a.var(ddof=1) == 0.0 and b.var(ddof=1) == 0.0:
        if a.mean() == b.mean():
            return TTestResult(t=0.0, p=1.0, significant=False)
        t = math.inf if a.mean() > b.mean() else -math.inf
        return TTestResult(t=t, p=0.0, significant=True)
    t, p = scipy_stats.ttest_ind(a, b, equal_var=False)
    return TTestResult(t=float(t), p=float(p), significant=bool(p < alpha))


@dataclass(frozen=True)
class FeatureRanking:
    """Features ordered by summed absolute coefficient magnitude."""

    entries: tuple[tuple[str, float], ...]

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def to_json_list(self) -> list:
        return [{"feature": name, "importance": imp} for name, imp in self.entries]

    def to_csv_text(self) -> str:
        lines = ["feature,importance"]
        lines.extend(f"{name},{imp!r}" for name, imp in self.entries)
        return "\n".join(lines) + "\n"

    def to_svg(self, width: int = 640, bar_height: int = 18, gap: int = 6) -> str:
        """Minimal horizontal bar chart; deterministic bytes for fixed input."""
        label_w = 180
        top = max((imp for _, imp in self.entries), default=0.0)
        scale = (width - label_w - 60) / top if top > 0 else 0.0
        height = len(self.entries) * (bar_height + gap) + gap
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
            '<style>text{font-family:sans-serif;font-size:12px}</style>',
        ]
        for i, (name, imp) in enumerate(self.entries):
            y = gap + i * (bar_height + gap)
            bar = imp * scale
            parts.append(
                f'<text x="{label_w - 6}" y="{y + bar_height - 5}" text-anchor="end">{name}</text>'
            )
            parts.append(
                f'<rect x="{label_w}" y="{y}" width="{bar:.2f}" height="{bar_height}" '
                'fill="#4878a8"/>'
            )
            parts.append(
                f'<text x="{label_w + bar + 4:.2f}" y="{y + bar_height - 5}">{imp:.3f}</text>'
            )
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def rank_features(policy: LinearPolicy) -> FeatureRanking:
    """Rank features by the sum over arms of absolute coefficients.

    Descending by importance; ties keep the schema's feature order.
    """
    if not isinstance(policy, LinearPolicy):
        raise ConfigError("feature ranking needs a linear policy")
    importance = np.abs(policy.coef).sum(axis=0)
    order = np.argsort(-importance, kind="stable")
    entries = tuple((policy.feature_names[j], float(importance[j])) for j in order)
    return FeatureRanking(entries=entries)


@dataclass(frozen=True)
class ExperimentResult:
    """Per-fold mean rewards for every (algorithm, tau) cell plus test flags."""

    algorithms: tuple[str, ...]
    taus: tuple[float, ...]
    n_folds: int
    seed: int
    alpha: float
    fold_values: dict          # algorithm -> {tau -> np.ndarray of fold means}
    significance: dict         # algorithm -> {tau -> {"vs_random": TTestResult, ...}}

    def folds(self, algorithm: str, tau: float) -> np.ndarray:
        return self.fold_values[algorithm][tau]

    def summary(self, algorithm: str, tau: float) -> tuple[float, float]:
        vals = self.folds(algorithm, tau)
        return float(vals.mean()), float(vals.std(ddof=1))

    def to_json_dict(self) -> dict:
        sig = {
            alg: {
                repr(tau): {
                    name: {"t": res.t, "p": res.p, "significant": res.significant}
                    for name, res in by_base.items()
                }
                for tau, by_base in by_tau.items()
            }
            for alg, by_tau in self.significance.items()
        }
        return {
            "algorithms": list(self.algorithms),
            "taus": list(self.taus),
            "n_folds": self.n_folds,
            "seed": self.seed,
            "alpha": self.alpha,
            "fold_values": {
                alg: {repr(tau): vals.tolist() for tau, vals in by_tau.items()}
                for alg, by_tau in self.fold_values.items()
            },
            "summary": {
                alg: {
                    repr(tau): {"mean": self.summary(alg, tau)[0], "std": self.summary(alg, tau)[1]}
                    for tau in self.taus
                }
                for alg in self.algorithms
            },
            "significance": sig,
        }

    def to_markdown(self) -> str:
        """Mean-reward-by-policy grid, one row per algorithm, one column per tau.

        A dagger marks significance over the random baseline, an
        asterisk over the observed baseline, both at the result's alpha.
        """
        header = "| Algorithm | " + " | ".join(f"IPW(tau = {tau:g})" for tau in self.taus) + " |"
        sep = "|" + "---|" * (len(self.taus) + 1)
        lines = [header, sep]
        for alg in self.algorithms:
            cells = []
            for tau in self.taus:
                mean, std = self.summary(alg, tau)
                marks = ""
                by_base = self.significance.get(alg, {}).get(tau, {})
                if by_base.get("vs_random") is not None and by_base["vs_random"].significant:
                    marks += "†"
                if by_base.get("vs_observed") is not None and by_base["vs_observed"].significant:
                    marks += "*"
                cells.append(f"{mean:.3f} ± {std:.3f}{marks}")
            lines.append(f"| {DISPLAY_NAMES.get(alg, alg)} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def run_experiment(
    data: Dataset,
    algorithms: list[str],
    taus: list[float],
    k: int = 5,
    seed: int = 0,
    propensity: str = "logit",
    propensity_ridge: float = 1.0,
    boosting: BoostingConfig | None = None,
    reward_lambda: float = 1.0,
    policy_lambda: float = 1.0,
    alpha: float = 0.05,
) -> ExperimentResult:
    """Cross-validated mean reward of each algorithm at each trimming level.

    Per fold: propensity and reward models are fit on the training part,
    each policy is learned on the training part (with the same tau used
    for its imputation), and all policies are scored on the held-out
    part with the trimmed IPW estimator at that tau.
    """
    if data.rewards is None:
        raise ConfigError("dataset has no binary rewards; binarize first")
    n_arms = data.schema.n_arms
    for tau in taus:
        if not 0.0 <= tau < 1.0 / n_arms:
            raise ConfigError(f"tau={tau} violates the heuristic bound tau < 1/K (K={n_arms})")
    if propensity not in ("logit", "gbm"):
        raise ConfigError(f"unknown propensity estimator: {propensity!r}")
    algorithms = list(algorithms)
    taus = [float(t) for t in taus]

    folds = kfold_split(data, k, seed)
    fold_values: dict[str, dict[float, np.ndarray]] = {
        alg: {tau: np.zeros(k) for tau in taus} for alg in algorithms
    }
    for f, (train, test) in enumerate(folds):
        try:
            if propensity == "gbm":
                pm, _ = fit_gbm_propensity(train, boosting)
            else:
                pm = fit_multinomial_logit(train, propensity_ridge)
            needs_rm = any(alg in ("dm", "dr") for alg in algorithms)
            rm = fit_reward_models(train, reward_lambda) if needs_rm else None
            tau_free_cache: dict[str, object] = {}
            for tau in taus:
                for alg in algorithms:
                    if alg in _TAU_FREE:
                        policy = tau_free_cache.get(alg)
                        if policy is None:
                            policy = learn_policy(
                                train, alg, pm=pm, rm=rm, tau=0.0, policy_lambda=policy_lambda
                            )
                            tau_free_cache[alg] = policy
                    else:
                        policy = learn_policy(
                            train, alg, pm=pm, rm=rm, tau=tau, policy_lambda=policy_lambda
                        )
                    estimate = value_tipw(policy, test, pm, tau)
                    fold_values[alg][tau][f] = estimate.mean
        except OffBanditError as exc:
            raise FitError(f"fold {f + 1} of {k}: {exc}") from exc

    significance: dict[str, dict[float, dict]] = {alg: {tau: {} for tau in taus}
                                                  for alg in algorithms}
    for alg in algorithms:
        for tau in taus:
            for base in ("random", "observed"):
                if base in algorithms and alg != base:
                    significance[alg][tau][f"vs_{base}"] = t_test_independent(
                        fold_values[alg][tau], fold_values[base][tau], alpha
                    )
    return ExperimentResult(
        algorithms=tuple(algorithms),
        taus=tuple(taus),
        n_folds=k,
        seed=seed,
        alpha=alpha,
        fold_values=fold_values,
        significance=significance,
    )
