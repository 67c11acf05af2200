"""Experiment configuration: a flat UTF-8 key=value file with dotted keys.

Example:

    dataset=data/cora.json
    method=oad
    arch=gcn
    model.layer_dims=16,7
    model.dropout=0.5
    train.lr=0.005
    train.group_size=4
    repeats=4
    output=runs/cora_gcn_oad

Lines starting with # and blank lines are ignored. Command-line overrides
use the same key=value syntax. parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .distill import LossWeights
from .train import TrainConfig

METHODS = ("single", "kd", "fitnet", "dml", "oad", "ensemble")
ARCHS = ("gcn", "gat", "sage")
PERTURBATION_KINDS = ("attribute_noise", "edge_removal")


class ConfigError(ValueError):
    """Bad key, bad value, or a missing required field."""


@dataclass
class ExperimentConfig:
    dataset: str = ""
    method: str = "single"
    arch: str = "gcn"
    layer_dims: list[int] = field(default_factory=lambda: [16, 7])
    heads: list[int] | None = None
    dropout: float = 0.5
    teacher_layer_dims: list[int] | None = None
    teacher_heads: list[int] | None = None
    repeats: int = 1
    output: str = "runs/experiment"
    perturb_kind: str | None = None
    perturb_level: float = 0.0
    perturb_seed: int = 0
    anchor_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if not self.dataset:
            raise ConfigError("dataset path is required")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.layer_dims:
            raise ConfigError("model.layer_dims is required")
        if self.arch == "gat" and (self.heads is None
                                   or len(self.heads) != len(self.layer_dims)):
            raise ConfigError("gat needs model.heads with one entry per layer")
        if self.method in ("kd", "fitnet"):
            if not self.teacher_layer_dims:
                raise ConfigError(f"method {self.method} requires teacher.layer_dims")
            if self.arch == "gat" and (self.teacher_heads is None or
                                       len(self.teacher_heads) != len(self.teacher_layer_dims)):
                raise ConfigError("gat teacher needs teacher.heads per layer")
        if self.perturb_kind is not None and self.perturb_kind not in PERTURBATION_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.perturb_kind!r}")


# ---------------------------------------------------------------------------
# value codecs
# ---------------------------------------------------------------------------

def _parse_int(v: str, key: str) -> int:
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _parse_float(v: str, key: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _parse_int_list(v: str, key: str) -> list[int]:
    v = v.strip()
    if not v:
        return []
    return [_parse_int(part.strip(), key) for part in v.split(",")]


def _fmt_int_list(xs) -> str:
    return ",".join(str(x) for x in xs)


# key -> (getter, setter-from-string, serializer or None to skip defaults)
def _apply(cfg: ExperimentConfig, key: str, value: str) -> None:
    t = cfg.train
    if key == "dataset":
        cfg.dataset = value
    elif key == "method":
        cfg.method = value
    elif key == "arch":
        cfg.arch = value
    elif key == "model.layer_dims":
        cfg.layer_dims = _parse_int_list(value, key)
    elif key == "model.heads":
        cfg.heads = _parse_int_list(value, key) or None
    elif key == "model.dropout":
        cfg.dropout = _parse_float(value, key)
    elif key == "teacher.layer_dims":
        cfg.teacher_layer_dims = _parse_int_list(value, key) or None
    elif key == "teacher.heads":
        cfg.teacher_heads = _parse_int_list(value, key) or None
    elif key == "repeats":
        cfg.repeats = _parse_int(value, key)
    elif key == "output":
        cfg.output = value
    elif key == "perturb.kind":
        cfg.perturb_kind = value or None
    elif key == "perturb.level":
        cfg.perturb_level = _parse_float(value, key)
    elif key == "perturb.seed":
        cfg.perturb_seed = _parse_int(value, key)
    elif key == "anchor.seed":
        cfg.anchor_seed = _parse_int(value, key)
    elif key == "train.epochs_warmup":
        t.epochs_warmup = _parse_int(value, key)
    elif key == "train.epochs_online":
        t.epochs_online = _parse_int(value, key)
    elif key == "train.optimizer":
        t.optimizer = value
    elif key == "train.lr":
        t.lr = _parse_float(value, key)
    elif key == "train.weight_decay":
        t.weight_decay = _parse_float(value, key)
    elif key == "train.momentum":
        t.momentum = _parse_float(value, key)
    elif key == "train.seed":
        t.seed = _parse_int(value, key)
    elif key == "train.alpha":
        t.weights = LossWeights(_parse_float(value, key), t.weights.beta)
    elif key == "train.beta":
        t.weights = LossWeights(t.weights.alpha, _parse_float(value, key))
    elif key == "train.temperature":
        t.temperature = _parse_float(value, key)
    elif key == "train.group_size":
        t.group_size = _parse_int(value, key)
    elif key == "train.kd_direction":
        t.kd_direction = value
    elif key == "train.disc_hidden":
        t.disc_hidden = _parse_int_list(value, key)  # empty string means []
    else:
        raise ConfigError(f"unknown config key {key!r}")


def parse_config_lines(lines, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        _apply(cfg, key.strip(), value.strip())
    _revalidate_train(cfg)
    return cfg


def _revalidate_train(cfg: ExperimentConfig) -> None:
    # dataclass validation only fires on construction; re-run it after edits
    t = cfg.train
    cfg.train = TrainConfig(
        epochs_warmup=t.epochs_warmup, epochs_online=t.epochs_online,
        optimizer=t.optimizer, lr=t.lr, weight_decay=t.weight_decay,
        momentum=t.momentum, seed=t.seed, weights=t.weights,
        temperature=t.temperature, group_size=t.group_size,
        kd_direction=t.kd_direction, disc_hidden=t.disc_hidden)


def load_config(path: str, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cfg = parse_config_lines(lines)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        _apply(cfg, key.strip(), value.strip())
    _revalidate_train(cfg)
    cfg.validate()
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    t = cfg.train
    lines = [
        f"dataset={cfg.dataset}",
        f"method={cfg.method}",
        f"arch={cfg.arch}",
        f"model.layer_dims={_fmt_int_list(cfg.layer_dims)}",
    ]
    if cfg.heads is not None:
        lines.append(f"model.heads={_fmt_int_list(cfg.heads)}")
    lines.append(f"model.dropout={cfg.dropout!r}")
    if cfg.teacher_layer_dims is not None:
        lines.append(f"teacher.layer_dims={_fmt_int_list(cfg.teacher_layer_dims)}")
    if cfg.teacher_heads is not None:
        lines.append(f"teacher.heads={_fmt_int_list(cfg.teacher_heads)}")
    lines.append(f"repeats={cfg.repeats}")
    lines.append(f"output={cfg.output}")
    if cfg.perturb_kind is not None:
        lines.append(f"perturb.kind={cfg.perturb_kind}")
        lines.append(f"perturb.level={cfg.perturb_level!r}")
        lines.append(f"perturb.seed={cfg.perturb_seed}")
    if cfg.anchor_seed:
        lines.append(f"anchor.seed={cfg.anchor_seed}")
    lines += [
        f"train.epochs_warmup={t.epochs_warmup}",
        f"train.epochs_online={t.epochs_online}",
        f"train.optimizer={t.optimizer}",
        f"train.lr={t.lr!r}",
        f"train.weight_decay={t.weight_decay!r}",
        f"train.momentum={t.momentum!r}",
        f"train.seed={t.seed}",
        f"train.alpha={t.weights.alpha!r}",
        f"train.beta={t.weights.beta!r}",
        f"train.temperature={t.temperature!r}",
        f"train.group_size={t.group_size}",
        f"train.kd_direction={t.kd_direction}",
    ]
    if t.disc_hidden is not None:
        lines.append(f"train.disc_hidden={_fmt_int_list(t.disc_hidden)}")
    return "\n".join(lines) + "\n"
