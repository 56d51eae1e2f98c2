"""Run configuration: a flat ``section.key = value`` text format with typed keys.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key has a type and a default; unknown keys, duplicate keys and values
that fail to parse raise ``ConfigError`` before anything is computed.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .engine import (DEFAULT_EPS_SET, DEFAULT_EVOLVE_PERIOD, ConfigError, EvolutionSchedule,
                     GenLossKind, TrainConfig)
from .losses import DEFAULT_DELTA, Setting, SettingParams

EXPERIMENTS = ("classify", "fig2_sweep", "gan")
GAN_MODES = ("evolving", "ugan")
ACTIVATIONS = ("leaky_relu", "relu", "linear")


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list_of(conv):
    def parse(text):
        text = text.strip()
        if text in ("", "none"):
            return ()
        return tuple(conv(item.strip()) for item in text.split(","))
    return parse


def _optional(conv):
    def parse(text):
        return None if text.lower() == "none" else conv(text)
    return parse


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _choices(options):
    item = _choice(options)
    return _list_of(item)


# key -> (parser, default, help)
SCHEMA = {
    "experiment": (_choice(EXPERIMENTS), "classify", "which experiment to run"),
    "seeds": (_list_of(int), (0,), "run seeds; --seed replaces the list"),
    "output_dir": (str, "runs", "where CSVs and checkpoints go; --out overrides"),
    "log_interval": (int, 100, "iterations between metric records"),

    "data.kind": (_choice(("mixture", "idx")), "mixture", "synthetic mixture or IDX files"),
    "data.L": (int, 3, "mixture: number of classes"),
    "data.per_class": (int, 1000, "mixture: points per class"),
    "data.d": (int, 2, "mixture: dimension"),
    "data.sep": (float, 3.0, "mixture: distance between neighbouring class means"),
    "data.seed": (int, 1000, "mixture: base seed, the run seed is added"),
    "data.images": (str, "", "idx: image file (optionally gzipped)"),
    "data.labels": (str, "", "idx: label file (optionally gzipped)"),
    "data.train": (int, 500, "training rows drawn per seed"),
    "data.test": (_optional(int), None, "test rows; none means every remaining row"),
    "data.stratified": (_parse_bool, False, "equal training rows per class"),
    "data.unlabeled": (_choice(("none", "test", "mixed")), "none",
                       "classify: unlabeled pool (test inputs or mixed pairs)"),
    "data.pairs": (int, 10000, "mixed universum points per run"),
    "data.ratio": (float, 0.5, "classify: mixing ratio for mixed points"),
    "data.ratios": (_list_of(float), (0.5, 0.7, 0.9, 0.95, 1.0), "fig2_sweep: mixing ratios"),

    "model.hidden": (_list_of(int), (64, 64), "discriminator hidden widths (empty: linear)"),
    "model.activation": (_choice(ACTIVATIONS), "leaky_relu", "hidden activation"),
    "model.gen_hidden": (_list_of(int), (64, 64), "generator hidden widths"),
    "model.noise_dim": (int, 16, "generator noise width"),
    "model.tie_tol": (float, 0.0, "decision tie tolerance for reported predictions"),

    "setting.settings": (_choices(tuple(s.value for s in Setting)), ("inductive", "semisupervised"),
                         "classify/fig2_sweep: learning settings to train"),
    "setting.delta": (float, DEFAULT_DELTA, "universum insensitivity"),

    "schedule.eps_set": (_list_of(float), DEFAULT_EPS_SET, "evolving epsilon staircase"),
    "schedule.evolve_period": (int, DEFAULT_EVOLVE_PERIOD, "iterations per staircase step"),
    "schedule.ugan_eps": (float, -0.05, "epsilon of the U-GAN-only mode"),
    "schedule.modes": (_choices(GAN_MODES), GAN_MODES, "gan: modes to run"),

    "gan.baseline_numiter": (int, 0, "gan: train an inductive discriminator for comparison (0 off)"),
    "gan.eval_samples": (int, 1000, "gan: generated samples for entropy"),

    "train.C_U": (float, 0.5, "weight of the unlabeled / generated term"),
    "train.C_gen": (float, 0.1, "generator compliance weight"),
    "train.lam": (float, 0.1, "generator L_Disc weight"),
    "train.M": (int, 64, "labeled batch size"),
    "train.M_unlabeled": (_optional(int), None, "unlabeled batch size (none: same as M)"),
    "train.numiter": (int, 1000, "iterations per run"),
    "train.lr": (float, 1e-3, "Adam step size"),
    "train.beta1": (float, 0.9, "Adam first moment decay"),
    "train.beta2": (float, 0.999, "Adam second moment decay"),
    "train.eps_stab": (float, 1e-8, "Adam denominator constant"),
    "train.gen_loss_kind": (_choice(tuple(k.value for k in GenLossKind)), "fm_plus_compliance",
                            "generator objective"),
}


def _fmt_value(value):
    if isinstance(value, tuple):
        return ",".join(_fmt_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value).lower() if isinstance(value, bool) else str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def experiment(self):
        return self.values["experiment"]

    @property
    def seeds(self):
        return self.values["seeds"]

    @property
    def output_dir(self):
        return Path(self.values["output_dir"])

    def with_overrides(self, **overrides):
        values = dict(self.values)
        for key, value in overrides.items():
            key = key.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
        return validate(values)

    def to_text(self):
        return "".join(f"{key} = {_fmt_value(self.values[key])}\n" for key in SCHEMA)

    def digest(self):
        """Hash of everything that affects results (seeds and output_dir excluded)."""
        text = "".join(f"{key}={_fmt_value(self.values[key])}\n" for key in SCHEMA
                       if key not in ("seeds", "output_dir"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def train_config(self, seed):
        v = self.values
        return TrainConfig(C_U=v["train.C_U"], C_gen=v["train.C_gen"], lam=v["train.lam"],
                           M=v["train.M"], M_unlabeled=v["train.M_unlabeled"],
                           numiter=v["train.numiter"], lr=v["train.lr"], beta1=v["train.beta1"],
                           beta2=v["train.beta2"], eps_stab=v["train.eps_stab"], seed=seed,
                           gen_loss_kind=GenLossKind(v["train.gen_loss_kind"]),
                           log_interval=v["log_interval"], eval_samples=v["gan.eval_samples"])

    def setting_params(self, setting):
        return SettingParams(Setting(setting), delta=self.values["setting.delta"],
                             C_U=self.values["train.C_U"])

    def schedule(self, mode):
        if mode == "ugan":
            return EvolutionSchedule.ugan(self.values["schedule.ugan_eps"])
        return EvolutionSchedule(self.values["schedule.eps_set"], self.values["schedule.evolve_period"])


def parse_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
    return validate(values)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def validate(values):
    """Fill defaults and check cross-field constraints; returns a RunConfig."""
    unknown = set(values) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    full = {key: values.get(key, entry[1]) for key, entry in SCHEMA.items()}
    positive = ["log_interval", "data.L", "data.per_class", "data.d", "data.train", "data.pairs",
                "model.noise_dim", "gan.eval_samples"]
    for key in positive:
        if full[key] < 1:
            raise ConfigError(f"{key} must be positive, got {full[key]}")
    if full["data.L"] < 2 or full["data.d"] < 2:
        raise ConfigError("data.L and data.d must be at least 2")
    if full["data.sep"] < 0 or full["setting.delta"] < 0 or full["model.tie_tol"] < 0:
        raise ConfigError("data.sep, setting.delta and model.tie_tol must be non-negative")
    if not full["seeds"]:
        raise ConfigError("seeds must list at least one seed")
    if any(w < 1 for w in full["model.hidden"] + full["model.gen_hidden"]):
        raise ConfigError("hidden widths must be positive")
    if any(not 0.5 <= a <= 1.0 for a in full["data.ratios"] + (full["data.ratio"],)):
        raise ConfigError("mixing ratios must lie in [0.5, 1.0]")
    if full["data.kind"] == "idx" and not (full["data.images"] and full["data.labels"]):
        raise ConfigError("data.kind = idx needs data.images and data.labels")
    if full["gan.baseline_numiter"] < 0:
        raise ConfigError("gan.baseline_numiter must be non-negative")
    if not full["setting.settings"] or not full["schedule.modes"]:
        raise ConfigError("setting.settings and schedule.modes must not be empty")
    cfg = RunConfig(full)
    # constructing these runs their own validation
    cfg.train_config(full["seeds"][0])
    for mode in full["schedule.modes"]:
        cfg.schedule(mode)
    for setting in full["setting.settings"]:
        try:
            cfg.setting_params(setting)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg
