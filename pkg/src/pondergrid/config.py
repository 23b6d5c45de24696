"""Flat key = value run configuration with sections, presets, and sweeps.

Files are INI-style. Every knob has a named key whose default is the
full-scale recipe; presets shipped with the package override them for the
desk-scale experiment families. Unknown sections or keys are rejected by
name: a silently ignored typo in an experiment config is how results go
wrong quietly.

A [sweep] section turns one config into a grid: its keys are dotted paths
(e.g. ``model.mem_tokens = 0, 4, 8`` and ``train.seed = 0, 1, 2``) and the
run set is their cross product.
"""

import configparser
import io
import itertools
from importlib import resources

from .act import ActConfig
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration (unknown key, bad value)."""


_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


def _parse_bool(s):
    v = _BOOL.get(str(s).strip().lower())
    if v is None:
        raise ConfigError(f"expected a boolean, got {s!r}")
    return v


# key -> (section field name, parser)
_MODEL_KEYS = {
    "hidden": int, "heads": int, "head_dim": int, "vocab": int,
    "mem_tokens": int, "max_ponder": int, "seq_len": int,
    "norm_kind": str, "router_bias_init": float, "act_enabled": _parse_bool,
    "rope_theta": float, "rope_before_qk_norm": _parse_bool,
    "step_emb_first_only": _parse_bool, "rms_eps": float, "dtype": str,
}
_ACT_KEYS = {
    "epsilon": float, "k_run": int, "ponder_sequence_only": _parse_bool,
    "freeze_halted": _parse_bool,
}
_TRAIN_KEYS = {
    "lr_max": float, "batch_size": int, "epochs": float, "max_steps": int,
    "lambda": float, "lambda_warmup_steps": int, "ema_decay": float,
    "weight_decay": float, "beta1": float, "beta2": float, "adam_eps": float,
    "grad_clip": float, "lr_schedule": str, "seed": int, "eval_every": int,
    "eval_batch_size": int, "loss_blanks_only": _parse_bool,
}
_DATA_KEYS = {
    "kind": str, "n": int, "n_train": int, "n_eval": int,
    "givens_min": int, "givens_max": int, "train_csv": str, "eval_csv": str,
    "data_seed": int,
}
_RUN_KEYS = {
    "name": str, "capture_attention": _parse_bool,
}
_SECTIONS = {"model": _MODEL_KEYS, "act": _ACT_KEYS, "train": _TRAIN_KEYS,
             "data": _DATA_KEYS, "run": _RUN_KEYS, "sweep": None}

_DATA_DEFAULTS = {"kind": "generate", "n": 4, "n_train": 50000, "n_eval": 2000,
                  "givens_min": 4, "givens_max": 12, "train_csv": "",
                  "eval_csv": "", "data_seed": 1234}
_RUN_DEFAULTS = {"name": "run", "capture_attention": False}

PRESETS = ["micro-default", "bias-sweep", "memory-curve", "lambda-warmup",
           "fixed-depth", "rmsnorm-ablation"]


class RunConfig:
    """Parsed configuration bundle for one run (or a sweep of runs)."""

    def __init__(self, values, sweep=None, source_text=""):
        self.values = values          # {section: {key: parsed value}}
        self.sweep = sweep or {}      # {"section.key": [values]}
        self.source_text = source_text

    def model_config(self):
        v = dict(self.values["model"])
        return ModelConfig(**v)

    def act_config(self):
        v = dict(self.values["act"])
        mc = self.values["model"]
        tr = self.values["train"]
        return ActConfig(
            epsilon=v.get("epsilon", 0.01),
            ponder_lambda=tr.get("lambda", 0.0),
            lambda_warmup_steps=tr.get("lambda_warmup_steps", 0),
            k_run=v.get("k_run", mc.get("max_ponder", 18)),
            act_enabled=mc.get("act_enabled", True),
            ponder_sequence_only=v.get("ponder_sequence_only", False),
            freeze_halted=v.get("freeze_halted", False),
        )

    def train_config(self):
        v = dict(self.values["train"])
        if "lambda" in v:
            v["ponder_lambda"] = v.pop("lambda")
        return TrainConfig(**v)

    def data(self):
        out = dict(_DATA_DEFAULTS)
        out.update(self.values["data"])
        return out

    def run(self):
        out = dict(_RUN_DEFAULTS)
        out.update(self.values["run"])
        return out

    def is_sweep(self):
        return bool(self.sweep)

    def expand_sweep(self):
        """Yield (label, RunConfig) per grid cell, cross-product order."""
        if not self.sweep:
            yield "single", self
            return
        keys = sorted(self.sweep.keys())
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            values = {s: dict(kv) for s, kv in self.values.items()}
            label_parts = []
            for dotted, raw in zip(keys, combo):
                section, key = dotted.split(".", 1)
                values[section][key] = _parse_value(section, key, raw)
                label_parts.append(f"{key}={raw}")
            yield "_".join(label_parts), RunConfig(values, sweep=None,
                                                   source_text=self.source_text)

    def snapshot_text(self):
        """Canonical INI text reproducing this config exactly."""
        cp = configparser.ConfigParser()
        for section in ("model", "act", "train", "data", "run"):
            vals = self.values.get(section, {})
            if not vals:
                continue
            cp[section] = {}
            for key, val in vals.items():
                cp[section][key] = str(val)
        if self.sweep:
            cp["sweep"] = {k: ", ".join(str(v) for v in vals)
                           for k, vals in self.sweep.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _parse_value(section, key, raw):
    keys = _SECTIONS[section]
    if keys is None or key not in keys:
        raise ConfigError(f"unknown config key [{section}] {key}")
    try:
        return keys[key](raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r} ({exc})") from exc


def parse_text(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc
    values = {s: {} for s in _SECTIONS if s != "sweep"}
    sweep = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            if section == "sweep":
                if "." not in key:
                    raise ConfigError(
                        f"sweep keys must be section.key, got {key!r}")
                tgt_section, tgt_key = key.split(".", 1)
                if tgt_section not in _SECTIONS or _SECTIONS[tgt_section] is None \
                        or tgt_key not in _SECTIONS[tgt_section]:
                    raise ConfigError(f"unknown sweep target {key!r}")
                sweep[key] = [v.strip() for v in raw.split(",") if v.strip()]
            else:
                values[section][key] = _parse_value(section, key, raw)
    return RunConfig(values, sweep=sweep, source_text=text)


def load_file(path):
    with open(path) as fh:
        return parse_text(fh.read())


def load_preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {', '.join(PRESETS)}")
    text = resources.files("pondergrid.presets").joinpath(f"{name}.ini").read_text()
    return parse_text(text)


def apply_overrides(cfg, overrides):
    """Apply CLI --set section.key=value pairs on top of a parsed config."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must be section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        if section == "sweep":
            if key not in cfg.sweep and "." not in key:
                raise ConfigError(f"sweep override must target section.key, got {key!r}")
            cfg.sweep[key] = [v.strip() for v in raw.split(",") if v.strip()]
            continue
        if section not in _SECTIONS or _SECTIONS[section] is None:
            raise ConfigError(f"unknown config section [{section}]")
        cfg.values[section][key] = _parse_value(section, key, raw.strip())
    return cfg
