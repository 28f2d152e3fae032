"""Flat key=value experiment configs with per-experiment defaults.

A config file is plain text, one `key = value` per line, `#` comments.
Values stay strings until a typed getter pulls them out; the resolved
(defaults + file + overrides) dict is what gets serialized into the run
manifest, so a manifest alone is enough to rerun the experiment.
"""
from __future__ import annotations

from pathlib import Path


class ConfigError(Exception):
    """Bad key, bad value, or unreadable config file."""


# every key an experiment understands, with its desk-scale default
DEFAULTS: dict[str, dict[str, str]] = {
    "seed-sweep": {
        "p": "3", "t": "5", "vocab": "15", "hidden": "64",
        "learning_rate": "0.001", "opt_rule": "adam", "sp_batch": "64",
        "budgets": "6,8,12,18,27,40,60,90,125",
        "fracs": "0.0,0.5,1.0",
        "threshold": "0.95", "entropy_bonus": "0.0",
        "max_steps": "4000", "patience": "10", "eval_interval": "50",
        "rand_q": "0.75",
        "seeds": "0,1,2,3,4",
    },
    "simple-game": {
        "p": "1", "t": "10", "vocab": "10", "hidden": "64",
        "learning_rate": "0.001", "opt_rule": "adam", "sp_batch": "64",
        "coverage": "4", "sp_steps": "4000", "entropy_bonus": "0.3",
        "max_steps": "4000", "patience": "3", "eval_interval": "10",
        "seeds": "0,1,2,3,4,5,6,7,8,9",
    },
    "perfect-emcomm": {
        "p": "3", "t": "5", "vocab": "15", "hidden": "64",
        "learning_rate": "0.001", "opt_rule": "adam", "sp_batch": "64",
        "budgets": "6,8,12,18,27,40,60,90,125",
        "threshold": "0.95", "entropy_bonus": "0.0",
        "n_teachers": "10",
        "distill_steps": "400", "distill_batch": "64",
        "max_steps": "4000", "patience": "10", "eval_interval": "50",
        "seeds": "0,1,2,3,4",
    },
    "schedules": {
        "feat_dim": "16", "vocab": "30", "msg_len": "4", "distractors": "4",
        "emb_size": "16", "rec_size": "32", "attr_p": "3", "attr_t": "6",
        "feat_noise": "0.1",
        "world_size": "600", "n_train": "32", "n_val": "256", "n_test": "120",
        "learning_rate": "0.003", "opt_rule": "adam", "batch": "16",
        "kinds": "sup,sup2sp,sp2sup,rand,sched,sched_frz,sched_rand_frz",
        "rand_q": "0.75", "sched_l": "50", "sched_m": "30", "freeze_r": "0.5",
        "max_steps": "2500", "patience": "10", "eval_interval": "25",
        "seeds": "0,1,2,3,4",
    },
    "population": {
        "feat_dim": "16", "vocab": "30", "msg_len": "4", "distractors": "4",
        "emb_size": "16", "rec_size": "32", "attr_p": "3", "attr_t": "6",
        "feat_noise": "0.1",
        "world_size": "400", "n_val": "64", "n_test": "120",
        "budgets": "32",
        "learning_rate": "0.001", "opt_rule": "adam", "batch": "32",
        "kind": "sched", "rand_q": "0.75", "sched_l": "30", "sched_m": "10",
        "n_pop": "10", "distill_steps": "800", "distill_batch": "32",
        "max_steps": "1200", "patience": "10", "eval_interval": "25",
        "seeds": "0,1,2,3,4",
    },
    "crossplay": {
        "feat_dim": "16", "vocab": "30", "msg_len": "4", "distractors": "4",
        "emb_size": "16", "rec_size": "32", "attr_p": "3", "attr_t": "6",
        "feat_noise": "0.1",
        "world_size": "400", "n_train": "48", "n_val": "64", "n_test": "120",
        "learning_rate": "0.001", "opt_rule": "adam", "batch": "32",
        "kind": "sched", "rand_q": "0.75", "sched_l": "30", "sched_m": "10",
        "n_pop": "6", "n_episodes": "256",
        "max_steps": "1200", "patience": "10", "eval_interval": "25",
        "seeds": "0",
    },
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(experiment: str, file_values: dict[str, str] | None = None,
                   seeds: list[int] | None = None) -> dict[str, str]:
    """Defaults overlaid with the config file and a --seeds override."""
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = dict(DEFAULTS[experiment])
    for key, value in (file_values or {}).items():
        if key not in cfg:
            raise ConfigError(f"unknown key {key!r} for experiment {experiment}")
        cfg[key] = value
    if seeds is not None:
        cfg["seeds"] = ",".join(str(s) for s in seeds)
    return cfg


def _get(cfg: dict[str, str], key: str) -> str:
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def cfg_int(cfg: dict[str, str], key: str) -> int:
    try:
        return int(_get(cfg, key))
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected integer, got {cfg[key]!r}") from exc


def cfg_float(cfg: dict[str, str], key: str) -> float:
    try:
        return float(_get(cfg, key))
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected number, got {cfg[key]!r}") from exc


def cfg_str(cfg: dict[str, str], key: str) -> str:
    return _get(cfg, key)


def cfg_int_list(cfg: dict[str, str], key: str) -> list[int]:
    raw = _get(cfg, key)
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected comma-separated integers, "
                          f"got {raw!r}") from exc


def cfg_float_list(cfg: dict[str, str], key: str) -> list[float]:
    raw = _get(cfg, key)
    try:
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, "
                          f"got {raw!r}") from exc


def cfg_str_list(cfg: dict[str, str], key: str) -> list[str]:
    return [tok.strip() for tok in _get(cfg, key).split(",") if tok.strip()]


def cfg_seeds(cfg: dict[str, str]) -> list[int]:
    seeds = cfg_int_list(cfg, "seeds")
    if not seeds:
        raise ConfigError("empty seed list")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("duplicate seeds")
    return seeds
