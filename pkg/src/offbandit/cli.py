"""Config-driven command line front end.

Subcommands: preprocess, learn, evaluate, simulate, predict. A single
YAML config file drives every stage; command-line flags override config
values. All outputs are plain CSV/JSON/Markdown/SVG files written into
the configured output directory, and every stage is byte-reproducible
for a fixed config and seed.

Exit codes: 0 on success, 2 for input/config problems, 3 for runtime or
fit failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .data import (
    Dataset,
    FeatureSchema,
    binarize_rewards,
    export_csv,
    ingest_csv,
    load_dataset,
    scale_features,
)
from .errors import ConfigError, DataError, FitError, OffBanditError
from .evaluation import rank_features, run_experiment
from .learners import learn_policy, load_policy_json
from .propensity import BoostingConfig, asmd, fit_gbm_propensity, fit_multinomial_logit
from .reward import fit_reward_models
from .synth import SynthConfig, generate, true_value

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"no such config file: {p}")
    with open(p) as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return doc


def _cfg(config: dict, path: str, default=None):
    node = config
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node


def _require(config: dict, path: str):
    value = _cfg(config, path)
    if value is None:
        raise ConfigError(f"config key {path!r} is required")
    return value


def _schema_from_config(config: dict) -> FeatureSchema:
    doc = _require(config, "data.schema")
    feats = doc.get("features")
    arms = doc.get("arms")
    if not feats or not arms:
        raise ConfigError("data.schema needs 'features' and 'arms'")
    return FeatureSchema(
        names=tuple(f["name"] for f in feats),
        kinds=tuple(f["kind"] for f in feats),
        arm_names=tuple(arms),
    )


def _out_dir(config: dict, args, stage: str) -> Path:
    if getattr(args, "out", None):
        out = Path(args.out)
    elif _cfg(config, "output_dir"):
        out = Path(_cfg(config, "output_dir"))
    else:
        out = Path("runs") / f"{stage}-seed{_cfg(config, 'seed', 0)}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: dict | list) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(config: dict, out: Path) -> None:
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(config, fh, sort_keys=True)


def _load_input_dataset(config: dict) -> Dataset:
    path = _require(config, "data.input")
    sidecar = Path(path).with_suffix(Path(path).suffix + ".meta.json")
    if sidecar.exists():
        return load_dataset(path)
    return ingest_csv(path, _schema_from_config(config))


def _boosting_config(config: dict) -> BoostingConfig:
    p = _cfg(config, "models.propensity", {}) or {}
    return BoostingConfig(
        max_iterations=int(p.get("max_iterations", 5000)),
        tree_depth=int(p.get("tree_depth", 3)),
        shrinkage=float(p.get("shrinkage", 0.05)),
        min_samples_leaf=int(p.get("min_samples_leaf", 10)),
        checkpoint_every=int(p.get("checkpoint_every", 50)),
        balance_aggregate=p.get("balance_aggregate", "mean"),
    )


def _fit_propensity(config: dict, data: Dataset):
    kind = _cfg(config, "models.propensity.kind", "logit")
    if kind == "gbm":
        return fit_gbm_propensity(data, _boosting_config(config))
    if kind == "logit":
        model = fit_multinomial_logit(data, float(_cfg(config, "models.propensity.ridge", 1.0)))
        rows = np.arange(data.n_samples)
        weights = 1.0 / model.predict_matrix(data.contexts)[rows, data.actions]
        return model, asmd(data, weights)
    raise ConfigError(f"unknown propensity kind: {kind!r}")


def cmd_preprocess(config: dict, args) -> int:
    out = _out_dir(config, args, "preprocess")
    dataset = _load_input_dataset(config)
    if dataset.effectiveness is not None:
        dataset = binarize_rewards(dataset)
    elif dataset.rewards is None:
        raise DataError("input has neither effectiveness scores nor rewards")
    dataset = scale_features(dataset)
    export_csv(dataset, out / "dataset.csv")
    _echo_config(config, out)
    grand = dataset.stats.grand_mean
    print(f"samples: {dataset.n_samples}")
    print(f"arms: {dataset.schema.n_arms}")
    print(f"grand_mean: {'n/a' if grand is None else format(grand, '.6g')}")
    print(f"wrote {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_learn(config: dict, args) -> int:
    out = _out_dir(config, args, "learn")
    dataset = _load_input_dataset(config)
    if dataset.rewards is None:
        raise DataError("learning requires binarized rewards; run preprocess first")
    algorithms = _cfg(config, "learn.algorithms", ["dr"])
    tau = float(_cfg(config, "learn.tau", 0.0))
    try:
        pm, balance = _fit_propensity(config, dataset)
    except OffBanditError as exc:
        raise FitError(f"propensity estimation failed: {exc}") from exc
    _write_json(out / "balance.json", balance.to_json_dict())
    needs_rm = any(alg in ("dm", "dr") for alg in algorithms)
    rm = None
    if needs_rm:
        try:
            rm = fit_reward_models(dataset, float(_cfg(config, "models.reward.lambda", 1.0)))
        except OffBanditError as exc:
            raise FitError(f"reward modeling failed: {exc}") from exc
    policy_lambda = float(_cfg(config, "models.policy.lambda", 1.0))
    for alg in algorithms:
        try:
            policy = learn_policy(dataset, alg, pm=pm, rm=rm, tau=tau,
                                  policy_lambda=policy_lambda)
        except OffBanditError as exc:
            raise FitError(f"policy learning ({alg}) failed: {exc}") from exc
        _write_json(out / f"policy_{alg}.json", policy.to_json_dict())
        print(f"wrote {out / f'policy_{alg}.json'}")
    _echo_config(config, out)
    return EXIT_OK


def cmd_evaluate(config: dict, args) -> int:
    out = _out_dir(config, args, "evaluate")
    dataset = _load_input_dataset(config)
    algorithms = _cfg(config, "evaluate.algorithms", ["dr", "dm", "ot", "observed", "random"])
    taus = [float(t) for t in _cfg(config, "evaluate.taus", [0.0, 0.02, 0.05])]
    result = run_experiment(
        dataset,
        algorithms=algorithms,
        taus=taus,
        k=int(_cfg(config, "evaluate.folds", 5)),
        seed=int(_cfg(config, "seed", 0)),
        propensity=_cfg(config, "models.propensity.kind", "logit"),
        propensity_ridge=float(_cfg(config, "models.propensity.ridge", 1.0)),
        boosting=(
            _boosting_config(config)
            if _cfg(config, "models.propensity.kind", "logit") == "gbm"
            else None
        ),
        reward_lambda=float(_cfg(config, "models.reward.lambda", 1.0)),
        policy_lambda=float(_cfg(config, "models.policy.lambda", 1.0)),
        alpha=float(_cfg(config, "evaluate.alpha", 0.05)),
    )
    _write_json(out / "report.json", result.to_json_dict())
    with open(out / "report.md", "w") as fh:
        fh.write(result.to_markdown())
    print(result.to_markdown())
    if args.rank_features or _cfg(config, "evaluate.rank_features", False):
        pm, _ = _fit_propensity(config, dataset)
        rm = fit_reward_models(dataset, float(_cfg(config, "models.reward.lambda", 1.0)))
        policy = learn_policy(
            dataset, "dr", pm=pm, rm=rm,
            tau=float(_cfg(config, "learn.tau", 0.0)),
            policy_lambda=float(_cfg(config, "models.policy.lambda", 1.0)),
        )
        ranking = rank_features(policy)
        with open(out / "ranking.csv", "w") as fh:
            fh.write(ranking.to_csv_text())
        with open(out / "ranking.svg", "w") as fh:
            fh.write(ranking.to_svg())
        print(f"wrote {out / 'ranking.csv'} and {out / 'ranking.svg'}")
    _echo_config(config, out)
    print(f"wrote {out / 'report.md'}")
    return EXIT_OK


def cmd_simulate(config: dict, args) -> int:
    out = _out_dir(config, args, "simulate")
    spec = _cfg(config, "synth")
    if not spec:
        raise ConfigError("config key 'synth' is required for simulate")
    synth_config = SynthConfig(
        n_samples=int(spec.get("samples", 5000)),
        n_arms=int(spec.get("arms", 10)),
        n_features=int(spec.get("features", 40)),
        n_informative=int(spec.get("informative", 3)),
        binary_fraction=float(spec.get("binary_fraction", 0.5)),
        behavior_strength=float(spec.get("behavior_strength", 0.5)),
        behavior_intercept_spread=float(spec.get("behavior_intercept_spread", 0.3)),
        reward_strength=float(spec.get("reward_strength", 3.0)),
        reward_intercept_loc=float(spec.get("reward_intercept_loc", -0.3)),
        reward_intercept_spread=float(spec.get("reward_intercept_spread", 0.7)),
        label_flip_prob=float(spec.get("label_flip_prob", 0.0)),
        quadratic_reward=bool(spec.get("quadratic_reward", False)),
        seed=int(_cfg(config, "seed", 0)),
    )
    dataset, gt = generate(synth_config)
    export_csv(dataset, out / "dataset.csv")
    _write_json(out / "ground_truth.json", gt.to_json_dict())
    n_mc = int(spec.get("oracle_mc", 200_000))
    oracle_seed = int(_cfg(config, "seed", 0)) + 1
    oracle = {
        "random": true_value(
            learn_policy(dataset, "random"), gt, n_mc, oracle_seed
        ),
        "behavior": true_value(gt.behavior_policy(), gt, n_mc, oracle_seed),
        "optimal": true_value(gt.optimal_policy(), gt, n_mc, oracle_seed),
    }
    _write_json(
        out / "oracle.json",
        {name: {"value": v.value, "std_error": v.std_error} for name, v in oracle.items()},
    )
    _echo_config(config, out)
    for name in ("random", "behavior", "optimal"):
        v = oracle[name]
        print(f"true value ({name}): {v.value:.6f} ± {v.std_error:.6f}")
    print(f"wrote {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_predict(config: dict, args) -> int:
    policy_path = args.policy or _cfg(config, "predict.policy")
    contexts_path = args.contexts or _cfg(config, "predict.contexts")
    if not policy_path or not contexts_path:
        raise ConfigError("predict needs --policy and --contexts (or config predict.*)")
    with open(policy_path) as fh:
        policy = load_policy_json(json.load(fh))
    with open(contexts_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = sorted(set(policy.feature_names) - set(header))
        if missing:
            raise DataError(f"contexts file lacks feature column(s): {missing}")
        rows = []
        for row_num, row in enumerate(reader, start=2):
            try:
                rows.append([float(row[name]) for name in policy.feature_names])
            except (TypeError, ValueError):
                raise DataError(f"row {row_num}: non-numeric feature value") from None
    if not rows:
        raise DataError("contexts file has no rows")
    decisions = policy.decide_batch(np.asarray(rows, dtype=float))
    out_path = Path(args.out) if args.out else Path("decisions.csv")
    if out_path.is_dir():
        out_path = out_path / "decisions.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["action"])
        for d in decisions:
            writer.writerow([policy.arm_names[d]])
    print(f"wrote {out_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offbandit",
        description="Learn and evaluate treatment policies from logged bandit data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("preprocess", "binarize rewards and scale features of a raw CSV"),
        ("learn", "fit propensity/reward models and learn policies"),
        ("evaluate", "cross-validated benchmark with significance tests"),
        ("simulate", "generate a synthetic logged dataset with ground truth"),
        ("predict", "map a CSV of contexts to arm decisions with a saved policy"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="YAML config file")
        p.add_argument("--out", help="output directory (overrides config output_dir)")
        p.add_argument("--seed", type=int, help="override config seed")
        if name == "evaluate":
            p.add_argument("--rank-features", action="store_true",
                           help="also write the feature-importance CSV and SVG chart")
        if name == "predict":
            p.add_argument("--policy", help="policy JSON written by 'learn'")
            p.add_argument("--contexts", help="CSV of contexts to decide on")
    return parser


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "predict": cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        return _COMMANDS[args.command](config, args)
    except (DataError, ConfigError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OffBanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
