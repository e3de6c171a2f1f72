"""Command-line pipeline: fetch klines, train an agent, backtest, report.

Commands share one JSON config with a block per component; flags given before
the subcommand override config values. Every run writes the fully resolved
config next to its artifacts so the exact run can be reproduced from it.

Exit codes: 0 success, 1 runtime failure, 2 missing input, 3 refused overwrite.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from .agents import (
    GailConfig,
    PpoConfig,
    SacConfig,
    gail_train,
    generate_expert_dataset,
    ppo_train,
    sac_train,
    save_expert_dataset,
    write_training_log,
)
from .backtest import (
    BacktestReport,
    evaluate_profit_metrics,
    export_annotated_series,
    make_report,
    render_report,
    run_backtest,
    save_report_json,
)
from .env import EnvConfig, TradingEnv
from .errors import DimensionMismatch, DivergenceDetected, NetworkError
from .features import (
    FeatureConfig,
    build_feature_matrix,
    feature_config_from_json,
    feature_config_to_json,
    fit_normalizer,
    normalize,
    normalizer_from_json,
    normalizer_to_json,
)
from .market_data import (
    INTERVAL_MS,
    BinanceClient,
    KlineSeries,
    load_klines_csv,
    save_klines_csv,
    split_train_test,
)
from .neural import GaussianPolicy, Mlp, load_checkpoint, save_checkpoint
from .synthetic import make_sine_series

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MISSING = 2
EXIT_REFUSED = 3

ALGOS = ("ppo", "sac", "gail")


@dataclass
class RunConfig:
    symbol: str = "ETHUSDT"
    interval: str = "4h"
    data: dict | None = None  # exactly one of csv / fetch / synthetic
    split_fraction: float = 0.95
    algo: str = "ppo"
    seed: int = 0
    out: str = "runs/latest"
    features: FeatureConfig = FeatureConfig()
    env: EnvConfig = EnvConfig()
    ppo: PpoConfig = PpoConfig()
    sac: SacConfig = SacConfig()
    gail: GailConfig = GailConfig()


DEFAULT_SYNTHETIC = {
    "n_bars": 600,
    "base": 100.0,
    "amplitude": 0.1,
    "period": 40,
    "volume": 1000.0,
    "start_time": 1609459200000,  # 2021-01-01T00:00:00Z
}


def _algo_config_from_json(cls, block: dict):
    if "hidden" in block:
        block = dict(block, hidden=tuple(block["hidden"]))
    return cls(**block)


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    """Read the config file (if any), apply flag overrides, validate."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        raw = json.loads(p.read_text())
    config = RunConfig()
    for key in ("symbol", "interval", "split_fraction", "algo", "seed", "out"):
        if key in raw:
            setattr(config, key, raw[key])
    if "data" in raw:
        config.data = raw["data"]
    if "features" in raw:
        config.features = feature_config_from_json(
            {**feature_config_to_json(FeatureConfig()), **raw["features"]}
        )
    env_block = dict(raw.get("env", {}))
    env_block.setdefault("window", config.features.window)
    config.env = EnvConfig(**{**asdict(EnvConfig()), **env_block})
    if "ppo" in raw:
        config.ppo = _algo_config_from_json(PpoConfig, raw["ppo"])
    if "sac" in raw:
        config.sac = _algo_config_from_json(SacConfig, raw["sac"])
    if "gail" in raw:
        config.gail = _algo_config_from_json(GailConfig, raw["gail"])
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    if config.data is None:
        config.data = {"synthetic": dict(DEFAULT_SYNTHETIC)}
    if config.algo not in ALGOS:
        raise ValueError(f"algo must be one of {ALGOS}, got {config.algo!r}")
    if config.interval not in INTERVAL_MS:
        raise ValueError(f"unknown interval {config.interval!r}")
    sources = [k for k in ("csv", "fetch", "synthetic") if k in config.data]
    if len(sources) != 1:
        raise ValueError(
            f"config must name exactly one data source (csv, fetch, or synthetic), "
            f"got {sources}"
        )
    if config.env.window != config.features.window:
        raise ValueError(
            f"env window {config.env.window} != feature window {config.features.window}"
        )
    if not 0.0 < config.split_fraction < 1.0:
        raise ValueError(f"split_fraction must be in (0, 1), got {config.split_fraction}")
    return config


def resolved_config_json(config: RunConfig) -> dict:
    return {
        "symbol": config.symbol,
        "interval": config.interval,
        "data": config.data,
        "split_fraction": config.split_fraction,
        "algo": config.algo,
        "seed": config.seed,
        "out": config.out,
        "features": feature_config_to_json(config.features),
        "env": asdict(config.env),
        "ppo": {**asdict(config.ppo), "hidden": list(config.ppo.hidden)},
        "sac": {**asdict(config.sac), "hidden": list(config.sac.hidden)},
        "gail": {**asdict(config.gail), "hidden": list(config.gail.hidden)},
    }


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _echo_config(config: RunConfig) -> None:
    _write_json(Path(config.out) / "config_resolved.json", resolved_config_json(config))


def _date_ms(text: str) -> int:
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def resolve_series(config: RunConfig, transport=None) -> KlineSeries:
    """Materialize the configured data source as a validated series."""
    interval_ms = INTERVAL_MS[config.interval]
    data = config.data or {}
    if "csv" in data:
        path = Path(data["csv"])
        if not path.exists():
            raise FileNotFoundError(f"kline fixture not found: {path}")
        return load_klines_csv(path, symbol=config.symbol, interval_ms=interval_ms)
    if "synthetic" in data:
        block = {**DEFAULT_SYNTHETIC, **data["synthetic"]}
        return make_sine_series(
            n_bars=block["n_bars"],
            base=block["base"],
            amplitude=block["amplitude"],
            period=block["period"],
            volume=block["volume"],
            start_time=block["start_time"],
            interval_ms=interval_ms,
            symbol=config.symbol,
        )
    fetch = data["fetch"]
    cache = Path(config.out) / "data" / "klines.csv"
    if cache.exists():
        return load_klines_csv(cache, symbol=config.symbol, interval_ms=interval_ms)
    client = BinanceClient(transport=transport) if transport else BinanceClient()
    series = client.fetch_klines(
        config.symbol, config.interval, _date_ms(fetch["start"]), _date_ms(fetch["end"])
    )
    cache.parent.mkdir(parents=True, exist_ok=True)
    save_klines_csv(series, cache)
    return series


def _series_summary(series: KlineSeries) -> str:
    first = datetime.fromtimestamp(int(series.open_times[0]) // 1000, tz=timezone.utc)
    last = datetime.fromtimestamp(int(series.open_times[-1]) // 1000, tz=timezone.utc)
    return (
        f"{len(series)} bars {series.symbol} "
        f"{first.date().isoformat()}..{last.date().isoformat()}"
    )


def cmd_fetch(config: RunConfig, force: bool) -> int:
    dest = Path(config.out) / "data" / "klines.csv"
    if dest.exists() and not force:
        print(f"refusing to overwrite {dest} (use --force)", file=sys.stderr)
        return EXIT_REFUSED
    if dest.exists():
        dest.unlink()  # a stale cache would short-circuit resolve_series
    series = resolve_series(config)
    dest.parent.mkdir(parents=True, exist_ok=True)
    save_klines_csv(series, dest)
    _echo_config(config)
    print(f"wrote {dest}: {_series_summary(series)}")
    return EXIT_OK


@dataclass
class Prepared:
    """Everything derived from the data that training and backtest share."""

    series: KlineSeries
    norm_matrix: object
    normalizer: object
    n_train: int


def prepare(config: RunConfig, normalizer=None) -> Prepared:
    """Build features over the full series; statistics come from train rows only."""
    series = resolve_series(config)
    train_series, _ = split_train_test(series, config.split_fraction)
    n_train = len(train_series)
    matrix = build_feature_matrix(series, config.features)
    if normalizer is None:
        normalizer = fit_normalizer(matrix, range(matrix.valid_from, n_train))
    norm_matrix = normalize(matrix, normalizer)
    return Prepared(
        series=series, norm_matrix=norm_matrix, normalizer=normalizer, n_train=n_train
    )


def _train_episode(prepared: Prepared, config: RunConfig) -> range:
    first_t = prepared.norm_matrix.valid_from + config.features.window - 1
    return range(first_t, prepared.n_train)


def _test_episode(prepared: Prepared) -> range:
    return range(prepared.n_train, len(prepared.series))


def _checkpoint_payload(config: RunConfig, prepared: Prepared) -> dict:
    return {
        "symbol": config.symbol,
        "interval": config.interval,
        "split_fraction": config.split_fraction,
        "seed": config.seed,
        "feature_config": feature_config_to_json(config.features),
        "env_config": asdict(config.env),
        "normalizer": normalizer_to_json(prepared.normalizer),
    }


def cmd_train(config: RunConfig, force: bool) -> int:
    out = Path(config.out)
    ckpt_path = out / "checkpoints" / f"{config.algo}.json"
    if ckpt_path.exists() and not force:
        print(f"refusing to overwrite {ckpt_path} (use --force)", file=sys.stderr)
        return EXIT_REFUSED
    prepared = prepare(config)
    rng = np.random.default_rng(config.seed)
    train_env = TradingEnv(
        prepared.series, prepared.norm_matrix, config.env, _train_episode(prepared, config)
    )
    base = _checkpoint_payload(config, prepared)
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    _echo_config(config)
    try:
        if config.algo == "ppo":
            result = ppo_train(train_env, config.ppo, rng)
            payload = {
                **base,
                "train_config": {**asdict(config.ppo), "hidden": list(config.ppo.hidden)},
                "policy": result.policy.to_json(),
                "value_net": result.value_net.to_json(),
            }
            history = result.history
        elif config.algo == "sac":
            result = sac_train(train_env, config.sac, rng)
            nets = result.nets
            payload = {
                **base,
                "train_config": {**asdict(config.sac), "hidden": list(config.sac.hidden)},
                "policy": nets.policy.to_json(),
                "q1": nets.q1.to_json(),
                "q2": nets.q2.to_json(),
                "q1_target": nets.q1_target.to_json(),
                "q2_target": nets.q2_target.to_json(),
                "log_alpha": nets.log_alpha.tolist(),
            }
            history = result.history
        else:
            expert_policy, expert_history = _expert_policy(config, prepared, train_env, rng)
            if expert_history is not None:
                write_training_log(expert_history, out / "logs" / "ppo_train.csv")
            expert = generate_expert_dataset(
                expert_policy,
                train_env,
                n_episodes=config.gail.n_expert_episodes,
                traj_limitation=config.gail.traj_limitation,
            )
            (out / "data").mkdir(parents=True, exist_ok=True)
            save_expert_dataset(expert, out / "data" / "expert.csv")
            result = gail_train(train_env, expert, config.gail, rng)
            payload = {
                **base,
                "train_config": {**asdict(config.gail), "hidden": list(config.gail.hidden)},
                "policy": result.policy.to_json(),
                "value_net": result.value_net.to_json(),
                "discriminator": result.discriminator.to_json(),
            }
            history = result.history
    except DivergenceDetected as exc:
        crash_path = out / "checkpoints" / f"{config.algo}_diverged.json"
        save_checkpoint(crash_path, config.algo, {**base, **exc.artifacts})
        print(f"training diverged: {exc}; state saved to {crash_path}", file=sys.stderr)
        return EXIT_RUNTIME
    save_checkpoint(ckpt_path, config.algo, payload)
    write_training_log(history, out / "logs" / f"{config.algo}_train.csv")
    print(f"wrote {ckpt_path}")
    return EXIT_OK


def _expert_policy(config: RunConfig, prepared: Prepared, train_env: TradingEnv, rng):
    """Load a PPO expert checkpoint if present, else train one now."""
    ppo_ckpt = Path(config.out) / "checkpoints" / "ppo.json"
    if ppo_ckpt.exists():
        doc = load_checkpoint(ppo_ckpt)
        return GaussianPolicy.from_json(doc["policy"]), None
    expert_rng = np.random.default_rng(config.seed)
    result = ppo_train(train_env, config.ppo, expert_rng)
    payload = {
        **_checkpoint_payload(config, prepared),
        "train_config": {**asdict(config.ppo), "hidden": list(config.ppo.hidden)},
        "policy": result.policy.to_json(),
        "value_net": result.value_net.to_json(),
    }
    save_checkpoint(ppo_ckpt, "ppo", payload)
    return result.policy, result.history


def cmd_backtest(config: RunConfig, checkpoint: str | None, force: bool) -> int:
    out = Path(config.out)
    ckpt_path = Path(checkpoint) if checkpoint else out / "checkpoints" / f"{config.algo}.json"
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    doc = load_checkpoint(ckpt_path)
    algo = doc["kind"]
    report_path = out / "reports" / f"{algo}_report.json"
    if report_path.exists() and not force:
        print(f"refusing to overwrite {report_path} (use --force)", file=sys.stderr)
        return EXIT_REFUSED
    feature_config = feature_config_from_json(doc["feature_config"])
    env_config = EnvConfig(**doc["env_config"])
    normalizer = normalizer_from_json(doc["normalizer"])
    run = replace(
        config,
        features=feature_config,
        env=env_config,
        split_fraction=doc["split_fraction"],
    )
    prepared = prepare(run, normalizer=normalizer)
    policy = GaussianPolicy.from_json(doc["policy"])
    test_env = TradingEnv(
        prepared.series, prepared.norm_matrix, env_config, _test_episode(prepared)
    )
    if policy.obs_dim != test_env.observation_dim:
        raise DimensionMismatch(
            f"checkpoint expects {policy.obs_dim}-dim observations, features "
            f"produce {test_env.observation_dim}"
        )
    report, annotated = run_backtest(policy, test_env)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    save_report_json(report, report_path)
    with open(out / "reports" / f"{algo}_report.txt", "w") as fh:
        fh.write(render_report(report) + "\n")
    export_annotated_series(annotated, out / "reports" / f"{algo}_annotated.csv")
    _echo_config(run)
    print(render_report(report))
    return EXIT_OK


def cmd_report(config: RunConfig) -> int:
    path = Path(config.out) / "reports" / f"{config.algo}_report.json"
    if not path.exists():
        raise FileNotFoundError(f"report not found: {path}")
    doc = json.loads(path.read_text())
    report = make_report(
        begin_value=doc["begin_value"],
        end_value=doc["end_value"],
        total_cost=doc["total_cost"],
        total_trades=doc["total_trades"],
        start_date=date.fromisoformat(doc["start_date"]),
        end_date=date.fromisoformat(doc["end_date"]),
    )
    print(render_report(report))
    metrics = evaluate_profit_metrics(report)
    for key in ("profit_ratio", "net_profit", "cost_share"):
        print(f"{key}\t{metrics[key]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drltrade",
        description="Train and evaluate trading agents on exchange klines.",
    )
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fetch", help="materialize the configured data source as CSV")
    train = sub.add_parser("train", help="train the configured algorithm")
    train.add_argument("--algo", choices=ALGOS, help="override the config algorithm")
    back = sub.add_parser("backtest", help="evaluate a checkpoint on the test split")
    back.add_argument("--algo", choices=ALGOS, help="override the config algorithm")
    back.add_argument("--checkpoint", help="explicit checkpoint path")
    rep = sub.add_parser("report", help="print a saved report")
    rep.add_argument("--algo", choices=ALGOS, help="override the config algorithm")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "algo": getattr(args, "algo", None),
    }
    try:
        config = load_run_config(args.config, overrides)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_MISSING
    try:
        if args.command == "fetch":
            return cmd_fetch(config, args.force)
        if args.command == "train":
            return cmd_train(config, args.force)
        if args.command == "backtest":
            return cmd_backtest(config, args.checkpoint, args.force)
        return cmd_report(config)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_MISSING
    except (NetworkError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
