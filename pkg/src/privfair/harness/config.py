"""Experiment configuration: flat key=value files, validation, epsilon grids.

Config files are UTF-8 text, one `key = value` per line, `#` starts a comment.
Unknown keys are hard errors (typos must not silently fall back to defaults).
Epsilon grids are built with decimal arithmetic so the pretty values the user
wrote (0.1, 0.2, ..., 40.0) survive verbatim into the results CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from decimal import Decimal, InvalidOperation

from ..datasets import CIVILCOMMENTS_GROUPS, SynthConfig

PIPELINES = ("logistic", "groupdro_mlp", "pca_ffn")

# paper-scale FFN schedule, restored by --paper-faithful / paper_faithful=true
_FAITHFUL_FFN_EPOCHS = 2979
_FAITHFUL_FFN_LR = 1e-6


class ConfigError(ValueError):
    """Malformed config text or invalid field combination."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_float_list(s: str) -> tuple:
    return tuple(float(t.strip()) for t in s.split(",") if t.strip())


def _parse_int_list(s: str) -> tuple:
    return tuple(int(t.strip()) for t in s.split(",") if t.strip())


@dataclass
class ExperimentConfig:
    pipeline: str = "logistic"

    # epsilon grid: explicit list wins over (start, stop, step); strings keep
    # the user's decimal spelling for the CSV epsilon column
    epsilons: tuple = ()  # tuple of decimal strings
    grid_start: str | None = None
    grid_stop: str | None = None
    grid_step: str | None = None

    phi: float = 1e-5
    repetitions: int = 1
    seed: int = 2026

    # DP-SGD (logistic / groupdro_mlp); None = per-pipeline default
    clip_bound: float | None = None
    lr: float | None = None
    batch_size: int | None = None
    epochs: int | None = None
    normalize_features: bool = False

    # GroupDRO
    eta: float = 0.1

    # MLP trained under DP (groupdro_mlp)
    mlp_hidden: tuple = (64, 32)
    mlp_loss: str = "logloss"

    # PCA
    k: int = 32

    # downstream / attack FFN (non-private, AdamW)
    ffn_hidden: tuple = (64, 32)
    ffn_epochs: int = 300
    ffn_lr: float = 1e-3
    ffn_batch_size: int = 32
    ffn_patience: int = 25
    ffn_weight_decay: float = 0.01
    paper_faithful: bool = False

    # attack
    attack_target: str = "group"

    # data: directory of train/validation/test.csv, else synthetic
    data_dir: str | None = None
    synth_dims: int = 64
    synth_counts: tuple = (3000, 2500, 2500, 1500, 600, 400, 1200, 1200)
    synth_priors: tuple = (0.5, 0.3, 0.3, 0.2, 0.35, 0.35, 0.45, 0.45)
    synth_class_sep: float = 2.5
    synth_group_signal_dims: int = 32
    synth_group_signal_strength: float = 2.0
    synth_seed: int = 2026

    # reporting; unequal_risk over per-group 1-F1 mirrors what the F1-based
    # fairness plots show, and per-group 0-1 risk stays in the risk_ columns
    risk_field: str = "one_minus_f1"
    record_timing: bool = True

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        # logistic defaults tuned so the privacy-utility transition spans the
        # default sweep grid: clipping well above the typical gradient norm
        # keeps the noise floor high at mid epsilon
        if self.lr is None:
            self.lr = 4.0 if self.pipeline == "logistic" else 0.1
        if self.batch_size is None:
            self.batch_size = 256 if self.pipeline == "logistic" else 128
        if self.clip_bound is None:
            self.clip_bound = 1.0 if self.pipeline == "pca_ffn" else 8.0
        if self.epochs is None:
            self.epochs = {"logistic": 300, "groupdro_mlp": 30}.get(self.pipeline, 10)
        if self.grid_start is None:
            dflt = ("0.1", "10.0", "0.5") if self.pipeline == "pca_ffn" else ("0.1", "40.0", "0.1")
            self.grid_start, self.grid_stop, self.grid_step = dflt
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.mlp_loss not in ("logloss", "mse"):
            raise ConfigError(f"mlp_loss must be logloss or mse, got {self.mlp_loss!r}")
        if self.risk_field not in ("zero_one_risk", "one_minus_f1"):
            raise ConfigError(f"unknown risk_field {self.risk_field!r}")
        if self.attack_target not in ("group", "label"):
            raise ConfigError(f"attack_target must be group or label, got {self.attack_target!r}")
        for name in ("phi", "clip_bound", "lr", "eta", "ffn_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("batch_size", "epochs", "k", "ffn_epochs", "ffn_batch_size", "ffn_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    # grid -------------------------------------------------------------

    def epsilon_grid(self) -> list:
        """[(decimal string, float value)], validated nonempty and positive."""
        if self.epsilons:
            pairs = [(s, float(s)) for s in self.epsilons]
        else:
            try:
                start = Decimal(self.grid_start)
                stop = Decimal(self.grid_stop)
                step = Decimal(self.grid_step)
            except InvalidOperation as exc:
                raise ConfigError(f"grid bounds must be decimal numbers: {exc}") from None
            if step <= 0:
                raise ConfigError(f"grid_step must be positive, got {self.grid_step}")
            pairs = []
            k = 0
            while True:
                v = start + k * step
                if v > stop:
                    break
                pairs.append((str(v), float(v)))
                k += 1
        if not pairs:
            raise ConfigError("epsilon grid is empty")
        for s, v in pairs:
            if v <= 0:
                raise ConfigError(f"epsilon values must be positive, got {s}")
        return pairs

    # derived views ----------------------------------------------------

    def ffn_schedule(self) -> tuple:
        """(epochs, lr, patience) for the downstream FFN; patience None = no early stop."""
        if self.paper_faithful:
            return _FAITHFUL_FFN_EPOCHS, _FAITHFUL_FFN_LR, None
        return self.ffn_epochs, self.ffn_lr, self.ffn_patience

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            dims=self.synth_dims,
            counts=self.synth_counts,
            priors=self.synth_priors,
            class_sep=self.synth_class_sep,
            group_signal_dims=self.synth_group_signal_dims,
            group_signal_strength=self.synth_group_signal_strength,
            seed=self.synth_seed,
            group_names=CIVILCOMMENTS_GROUPS,
        )


# key -> (attribute, converter); None converter keeps the raw string
_CONVERTERS = {
    "pipeline": str,
    "epsilons": lambda s: tuple(t.strip() for t in s.split(",") if t.strip()),
    "grid_start": str,
    "grid_stop": str,
    "grid_step": str,
    "phi": float,
    "repetitions": int,
    "seed": int,
    "clip_bound": float,
    "lr": float,
    "batch_size": int,
    "epochs": int,
    "normalize_features": _parse_bool,
    "eta": float,
    "mlp_hidden": _parse_int_list,
    "mlp_loss": str,
    "k": int,
    "ffn_hidden": _parse_int_list,
    "ffn_epochs": int,
    "ffn_lr": float,
    "ffn_batch_size": int,
    "ffn_patience": int,
    "ffn_weight_decay": float,
    "paper_faithful": _parse_bool,
    "attack_target": str,
    "data_dir": str,
    "synth_dims": int,
    "synth_counts": _parse_int_list,
    "synth_priors": _parse_float_list,
    "synth_class_sep": float,
    "synth_group_signal_dims": int,
    "synth_group_signal_strength": float,
    "synth_seed": int,
    "risk_field": str,
    "record_timing": _parse_bool,
}

assert set(_CONVERTERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse flat `key = value` text into a validated ExperimentConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`, got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONVERTERS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONVERTERS[key](val)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"failed reading config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
