"""Data model, CSV ingestion, and preprocessing transforms.

The unit of learning is a logged interaction: a context vector, the arm
that was chosen, a self-reported effectiveness score in [0, 10], and the
binary reward derived from it. Datasets are immutable; every transform
returns a new ``Dataset``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

BINARY = "binary"
CONTINUOUS = "continuous"

ACTION_COLUMN = "action"
EFFECTIVENESS_COLUMN = "effectiveness"
REWARD_COLUMN = "reward"
USER_COLUMN = "user_id"
ACTION_SET_SEPARATOR = ";"


@dataclass(frozen=True)
class FeatureSchema:
    """Names and kinds of context features plus the arm labels.

    kinds are per-feature tags, either ``"binary"`` or ``"continuous"``;
    binary features are left untouched by scaling.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    arm_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "arm_names", tuple(self.arm_names))
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")
        if len(self.kinds) != len(self.names):
            raise DataError("kinds must have the same length as names")
        bad = [k for k in self.kinds if k not in (BINARY, CONTINUOUS)]
        if bad:
            raise DataError(f"unknown feature kind(s): {bad}")
        if len(set(self.arm_names)) != len(self.arm_names):
            raise DataError("arm names must be unique")
        if len(self.arm_names) < 2:
            raise DataError("at least two arms are required")

    @property
    def n_features(self) -> int:
        return len(self.names)

    @property
    def n_arms(self) -> int:
        return len(self.arm_names)

    @property
    def continuous_mask(self) -> np.ndarray:
        return np.array([k == CONTINUOUS for k in self.kinds])

    def arm_index(self, label: str) -> int:
        try:
            return self.arm_names.index(label)
        except ValueError:
            raise DataError(f"unknown arm label: {label!r}") from None

    def to_json_dict(self) -> dict:
        return {
            "features": [{"name": n, "kind": k} for n, k in zip(self.names, self.kinds)],
            "arms": list(self.arm_names),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureSchema":
        feats = doc["features"]
        return cls(
            names=tuple(f["name"] for f in feats),
            kinds=tuple(f["kind"] for f in feats),
            arm_names=tuple(doc["arms"]),
        )


@dataclass(frozen=True)
class LoggedSample:
    """One logged (context, action, reward, raw effectiveness) record."""

    context: np.ndarray
    action: int
    reward: float | None = None
    effectiveness_raw: float | None = None
    user_id: str | None = None


@dataclass(frozen=True)
class PreprocessStats:
    """Statistics recorded by preprocessing, reused on held-out data.

    ``grand_mean`` is the dataset-wide average effectiveness used as the
    reward-binarization threshold. Scaling minima/maxima and imputation
    fill values are keyed by feature name.
    """

    grand_mean: float | None = None
    feature_min: dict[str, float] = field(default_factory=dict)
    feature_max: dict[str, float] = field(default_factory=dict)
    fill_values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.grand_mean is not None and not (0.0 <= self.grand_mean <= 10.0):
            raise DataError(f"grand mean {self.grand_mean} outside [0, 10]")
        for name in self.feature_min:
            if name in self.feature_max and self.feature_min[name] > self.feature_max[name]:
                raise DataError(f"min > max recorded for feature {name!r}")

    def to_json_dict(self) -> dict:
        return {
            "grand_mean": self.grand_mean,
            "feature_min": dict(self.feature_min),
            "feature_max": dict(self.feature_max),
            "fill_values": dict(self.fill_values),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PreprocessStats":
        return cls(
            grand_mean=doc.get("grand_mean"),
            feature_min=dict(doc.get("feature_min", {})),
            feature_max=dict(doc.get("feature_max", {})),
            fill_values=dict(doc.get("fill_values", {})),
        )


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of logged samples stored column-wise.

    ``contexts`` is (T, F), ``actions`` is (T,) int
    arm indices, ``rewards`` is (T,) in {0, 1} (None before binarization)
    and ``effectiveness`` is (T,) raw scores (None for environments that
    emit rewards directly). ``missing_mask`` marks imputed cells.
    """

    schema: FeatureSchema
    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray | None = None
    effectiveness: np.ndarray | None = None
    user_ids: tuple[str, ...] | None = None
    stats: PreprocessStats = field(default_factory=PreprocessStats)
    missing_mask: np.ndarray | None = None

    def __post_init__(self):
        contexts = np.asarray(self.contexts, dtype=float)
        actions = np.asarray(self.actions, dtype=np.int64)
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "actions", actions)
        if contexts.ndim != 2 or contexts.shape[1] != self.schema.n_features:
            raise DataError(
                f"context matrix has shape {contexts.shape}, expected "
                f"(T, {self.schema.n_features})"
            )
        n = contexts.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one sample")
        if actions.shape != (n,):
            raise DataError("actions length does not match contexts")
        if actions.min() < 0 or actions.max() >= self.schema.n_arms:
            raise DataError("action index outside [0, K)")
        if self.rewards is not None:
            rewards = np.asarray(self.rewards, dtype=float)
            object.__setattr__(self, "rewards", rewards)
            if rewards.shape != (n,):
                raise DataError("rewards length does not match contexts")
            if not np.isin(rewards, (0.0, 1.0)).all():
                raise DataError("rewards must be binary")
        if self.effectiveness is not None:
            eff = np.asarray(self.effectiveness, dtype=float)
            object.__setattr__(self, "effectiveness", eff)
            if eff.shape != (n,):
                raise DataError("effectiveness length does not match contexts")
            if np.nanmin(eff) < 0.0 or np.nanmax(eff) > 10.0:
                raise DataError("effectiveness scores must lie in [0, 10]")
        if self.user_ids is not None and len(self.user_ids) != n:
            raise DataError("user_ids length does not match contexts")

    @property
    def n_samples(self) -> int:
        return self.contexts.shape[0]

    def __len__(self) -> int:
        return self.n_samples

    @property
    def samples(self) -> list[LoggedSample]:
        out = []
        for i in range(self.n_samples):
            out.append(
                LoggedSample(
                    context=self.contexts[i],
                    action=int(self.actions[i]),
                    reward=None if self.rewards is None else float(self.rewards[i]),
                    effectiveness_raw=(
                        None if self.effectiveness is None else float(self.effectiveness[i])
                    ),
                    user_id=None if self.user_ids is None else self.user_ids[i],
                )
            )
        return out

    @classmethod
    def from_samples(
        cls,
        schema: FeatureSchema,
        samples: Sequence[LoggedSample],
        stats: PreprocessStats | None = None,
    ) -> "Dataset":
        if not samples:
            raise DataError("cannot build a dataset from zero samples")
        has_reward = samples[0].reward is not None
        has_eff = samples[0].effectiveness_raw is not None
        has_uid = samples[0].user_id is not None
        return cls(
            schema=schema,
            contexts=np.stack([np.asarray(s.context, dtype=float) for s in samples]),
            actions=np.array([s.action for s in samples], dtype=np.int64),
            rewards=np.array([s.reward for s in samples], dtype=float) if has_reward else None,
            effectiveness=(
                np.array([s.effectiveness_raw for s in samples], dtype=float) if has_eff else None
            ),
            user_ids=tuple(s.user_id for s in samples) if has_uid else None,
            stats=stats or PreprocessStats(),
        )

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            contexts=self.contexts[indices],
            actions=self.actions[indices],
            rewards=None if self.rewards is None else self.rewards[indices],
            effectiveness=None if self.effectiveness is None else self.effectiveness[indices],
            user_ids=(
                None if self.user_ids is None else tuple(self.user_ids[i] for i in indices)
            ),
            stats=self.stats,
            missing_mask=None if self.missing_mask is None else self.missing_mask[indices],
        )


def accel_magnitude(ax: float, ay: float, az: float) -> float:
    """Orientation-invariant acceleration magnitude (1/3)*sqrt(x^2+y^2+z^2)."""
    if not (math.isfinite(ax) and math.isfinite(ay) and math.isfinite(az)):
        raise DataError("accelerometer components must be finite")
    return math.sqrt(ax * ax + ay * ay + az * az) / 3.0


def split_multi_action(
    context: np.ndarray,
    actions: Iterable[int],
    effectiveness: float,
    user_id: str | None = None,
) -> list[LoggedSample]:
    """Expand a record whose action field holds a set of arms.

    Each arm in the set becomes its own sample carrying the same context
    and the same effectiveness score.
    """
    actions = list(actions)
    if not actions:
        raise DataError("action set must be non-empty")
    return [
        LoggedSample(
            context=np.asarray(context, dtype=float),
            action=int(a),
            effectiveness_raw=float(effectiveness),
            user_id=user_id,
        )
        for a in actions
    ]


def binarize_rewards(dataset: Dataset) -> Dataset:
    """Derive binary rewards by thresholding effectiveness at the grand mean.

    reward = 1 iff effectiveness > grand mean (strict, so ties map to 0).
    A grand mean already recorded in ``dataset.stats`` is reused, which
    makes the transform idempotent on its own output.
    """
    if dataset.effectiveness is None or np.isnan(dataset.effectiveness).any():
        raise DataError("every sample needs an effectiveness score before binarization")
    if dataset.stats.grand_mean is not None:
        grand_mean = dataset.stats.grand_mean
    else:
        grand_mean = float(dataset.effectiveness.mean())
    rewards = (dataset.effectiveness > grand_mean).astype(float)
    stats = replace(dataset.stats, grand_mean=grand_mean)
    return replace(dataset, rewards=rewards, stats=stats)


def scale_features(dataset: Dataset, stats: PreprocessStats | None = None) -> Dataset:
    """Min-max scale continuous features to [0, 1]; binary features pass through.

    When ``stats`` is given (fit on a training fold), its minima/maxima
    are applied and the result is clamped to [0, 1] so held-out values
    cannot leak outside the training range. Constant columns map to 0.
    """
    contexts = dataset.contexts.copy()
    reuse = stats is not None
    fmin = dict(stats.feature_min) if reuse else {}
    fmax = dict(stats.feature_max) if reuse else {}
    for j, (name, kind) in enumerate(zip(dataset.schema.names, dataset.schema.kinds)):
        if kind != CONTINUOUS:
            continue
        col = contexts[:, j]
        if reuse:
            lo, hi = fmin[name], fmax[name]
        else:
            lo, hi = float(col.min()), float(col.max())
            fmin[name], fmax[name] = lo, hi
        if hi > lo:
            contexts[:, j] = np.clip((col - lo) / (hi - lo), 0.0, 1.0)
        else:
            contexts[:, j] = 0.0
    new_stats = replace(dataset.stats, feature_min=fmin, feature_max=fmax)
    return replace(dataset, contexts=contexts, stats=new_stats)


def kfold_split(dataset: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Deterministic k-fold partition into (train, test) dataset pairs.

    Fold sizes differ by at most one and the test folds partition the
    sample indices.
    """
    n = dataset.n_samples
    if k < 2:
        raise DataError("k must be at least 2")
    if k > n:
        raise DataError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k)
    pairs = []
    for i in range(k):
        test_idx = np.sort(folds[i])
        train_idx = np.sort(np.concatenate([folds[j] for j in range(k) if j != i]))
        pairs.append((dataset.subset(train_idx), dataset.subset(test_idx)))
    return pairs


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------


def _parse_float(raw: str, row_num: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"row {row_num}: cannot parse {column}={raw!r} as a number") from None


def ingest_csv(path: str | Path, schema: FeatureSchema) -> Dataset:
    """Read logged interactions from a CSV file.

    The header must cover the schema's feature names plus ``action`` and
    ``effectiveness``. The action cell holds one arm label or a
    ``;``-separated set; multi-action rows are expanded into one sample
    per arm with the shared effectiveness score. Rows with an empty
    effectiveness cell are dropped. Missing feature cells are imputed
    with the column mean (continuous) or mode (binary), recorded in the
    returned dataset's stats.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        has_reward = REWARD_COLUMN in header
        has_eff = EFFECTIVENESS_COLUMN in header
        required = set(schema.names) | {ACTION_COLUMN}
        if not has_reward:
            # raw files must carry effectiveness; preprocessed/synthetic
            # files may carry rewards directly instead
            required.add(EFFECTIVENESS_COLUMN)
        missing_cols = sorted(required - set(header))
        if missing_cols:
            raise DataError(f"missing column(s): {missing_cols}")
        has_uid = USER_COLUMN in header

        contexts: list[list[float]] = []
        missing: list[list[bool]] = []
        action_sets: list[list[int]] = []
        eff_values: list[float] = []
        rewards: list[float] = []
        user_ids: list[str | None] = []
        for row_num, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise DataError(f"row {row_num}: wrong number of fields")
            if has_eff:
                eff_raw = (row[EFFECTIVENESS_COLUMN] or "").strip()
                if eff_raw == "":
                    continue  # no effectiveness report: excluded from learning
                eff = _parse_float(eff_raw, row_num, EFFECTIVENESS_COLUMN)
            else:
                eff = np.nan
            labels = [s.strip() for s in row[ACTION_COLUMN].split(ACTION_SET_SEPARATOR)]
            labels = [s for s in labels if s]
            if not labels:
                raise DataError(f"row {row_num}: empty action cell")
            try:
                arm_idx = [schema.arm_index(lbl) for lbl in labels]
            except DataError as exc:
                raise DataError(f"row {row_num}: {exc}") from None
            vec, miss = [], []
            for name in schema.names:
                raw = (row[name] or "").strip()
                if raw == "":
                    vec.append(np.nan)
                    miss.append(True)
                else:
                    vec.append(_parse_float(raw, row_num, name))
                    miss.append(False)
            contexts.append(vec)
            missing.append(miss)
            action_sets.append(arm_idx)
            eff_values.append(eff)
            rewards.append(
                _parse_float(row[REWARD_COLUMN], row_num, REWARD_COLUMN) if has_reward else np.nan
            )
            user_ids.append(row.get(USER_COLUMN) if has_uid else None)

    if not contexts:
        raise DataError(f"{path}: no usable rows (all lacked an effectiveness score)")

    ctx = np.asarray(contexts, dtype=float)
    miss_mask = np.asarray(missing, dtype=bool)
    fill_values: dict[str, float] = {}
    for j, (name, kind) in enumerate(zip(schema.names, schema.kinds)):
        col_missing = miss_mask[:, j]
        if not col_missing.any():
            continue
        observed = ctx[~col_missing, j]
        if observed.size == 0:
            fill = 0.0
        elif kind == BINARY:
            fill = 1.0 if (observed == 1.0).sum() > (observed != 1.0).sum() else 0.0
        else:
            fill = float(observed.mean())
        ctx[col_missing, j] = fill
        fill_values[name] = fill

    # expand multi-action rows: one sample per arm, shared context/effectiveness
    out_ctx, out_act, out_eff, out_rew, out_uid, out_miss = [], [], [], [], [], []
    for i, arms in enumerate(action_sets):
        for a in arms:
            out_ctx.append(ctx[i])
            out_act.append(a)
            out_eff.append(eff_values[i])
            out_rew.append(rewards[i])
            out_uid.append(user_ids[i])
            out_miss.append(miss_mask[i])

    rew_arr = np.asarray(out_rew, dtype=float)
    eff_arr = np.asarray(out_eff, dtype=float)
    return Dataset(
        schema=schema,
        contexts=np.asarray(out_ctx, dtype=float),
        actions=np.asarray(out_act, dtype=np.int64),
        rewards=None if np.isnan(rew_arr).any() else rew_arr,
        effectiveness=None if np.isnan(eff_arr).any() else eff_arr,
        user_ids=tuple(out_uid) if has_uid else None,
        stats=PreprocessStats(fill_values=fill_values),
        missing_mask=np.asarray(out_miss, dtype=bool),
    )


def export_csv(dataset: Dataset, path: str | Path, sidecar: str | Path | None = None) -> Path:
    """Write a dataset back to CSV plus a JSON sidecar with schema and stats.

    The sidecar defaults to ``<path>.meta.json``; ``load_dataset`` uses it
    to rebuild the dataset without an external schema.
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(path.suffix + ".meta.json")
    schema = dataset.schema
    has_uid = dataset.user_ids is not None
    has_rew = dataset.rewards is not None
    has_eff = dataset.effectiveness is not None
    header = ([USER_COLUMN] if has_uid else []) + list(schema.names) + [ACTION_COLUMN]
    if has_eff:
        header.append(EFFECTIVENESS_COLUMN)
    if has_rew:
        header.append(REWARD_COLUMN)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n_samples):
            row: list[str] = []
            if has_uid:
                row.append(dataset.user_ids[i] or "")
            row.extend(repr(float(v)) for v in dataset.contexts[i])
            row.append(schema.arm_names[dataset.actions[i]])
            if has_eff:
                row.append(repr(float(dataset.effectiveness[i])))
            if has_rew:
                row.append(repr(float(dataset.rewards[i])))
            writer.writerow(row)
    meta = {"schema": schema.to_json_dict(), "stats": dataset.stats.to_json_dict()}
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def load_dataset(path: str | Path, sidecar: str | Path | None = None) -> Dataset:
    """Load a CSV written by ``export_csv`` using its JSON sidecar."""
    path = Path(path)
    sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(path.suffix + ".meta.json")
    if not sidecar.exists():
        raise DataError(f"missing sidecar: {sidecar}")
    with open(sidecar) as fh:
        meta = json.load(fh)
    schema = FeatureSchema.from_json_dict(meta["schema"])
    dataset = ingest_csv(path, schema)
    return replace(dataset, stats=PreprocessStats.from_json_dict(meta["stats"]))
