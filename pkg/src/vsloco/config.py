"""YAML configuration loading with packaged defaults and override merging."""

import importlib.resources

import yaml


def load_packaged_yaml(name: str) -> dict:
    ref = importlib.resources.files("vsloco.configs") / name
    return yaml.safe_load(ref.read_text()) or {}


def load_yaml(path) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins, nested dicts merge key-wise."""
    out = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_env_config_dict(path=None, overrides=None) -> dict:
    cfg = load_packaged_yaml("env.yaml")
    if path is not None:
        cfg = deep_merge(cfg, load_yaml(path))
    return deep_merge(cfg, overrides or {})


def load_train_config_dict(path=None, overrides=None) -> dict:
    cfg = load_packaged_yaml("train.yaml")
    if path is not None:
        cfg = deep_merge(cfg, load_yaml(path))
    return deep_merge(cfg, overrides or {})
