"""Run configuration: JSON with a ``preset`` and per-section overrides.

Example::

    {"preset": "desk", "seed": 0,
     "model": {"n_layers": 2},
     "train": {"total_steps": 500},
     "masking": {"start_rate": 0.3, "end_rate": 0.15, "priority_weight": 5.0},
     "tokenizer": {"vocab_size": 2048},
     "paths": {"corpus": "corpus.txt", "lexicon": "lexicon.txt", "out_dir": "run"}}

Relative paths are resolved against the config file's directory.
"""
import json
import os
from dataclasses import asdict, dataclass, field

from .encoder import ModelConfig
from .errors import ConfigurationError
from .masking import DEFAULT_PRIORITY_WEIGHT, MaskingSchedule
from .training import TrainConfig, config_hash

PRESETS = {
    "desk": {
        "model": dict(d_model=128, n_heads=4, n_layers=2, d_ff=256, vocab_size=2048,
                      max_seq_len=512, attention_block_size=128),
        "train": dict(total_steps=2000, checkpoint_every=500, log_every=10, peak_lr=5e-4,
                      warmup_steps=100, weight_decay=0.01, batch_size=16,
                      curriculum=[[0, 64], [1000, 128]]),
        "tokenizer": dict(vocab_size=2048),
    },
    "paper-scale": {
        "model": dict(d_model=768, n_heads=12, n_layers=22, d_ff=1152, vocab_size=50368,
                      max_seq_len=8192, attention_block_size=128),
        "train": dict(total_steps=150_000, checkpoint_every=10_000, log_every=10, peak_lr=5e-4,
                      warmup_steps=3000, weight_decay=0.01, batch_size=256,
                      curriculum=[[0, 128], [100_000, 8192]]),
        "tokenizer": dict(vocab_size=50368),
    },
}

PATH_KEYS = ("corpus", "lexicon", "added_tokens", "ontology_table", "tokenizer_dir", "heldout",
             "out_dir")
_MUST_EXIST = ("corpus", "lexicon", "added_tokens", "ontology_table", "tokenizer_dir", "heldout")


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    masking: MaskingSchedule
    priority_weight: float = DEFAULT_PRIORITY_WEIGHT
    tokenizer_vocab_size: int = 2048
    paths: dict = field(default_factory=dict)
    seed: int = 0
    deterministic: bool = True
    preset: str = "desk"

    def to_dict(self):
        return {"preset": self.preset, "seed": self.seed, "deterministic": self.deterministic,
                "model": self.model.to_dict(), "train": self.train.to_dict(),
                "masking": {"start_rate": self.masking.start_rate,
                            "end_rate": self.masking.end_rate,
                            "priority_weight": self.priority_weight},
                "tokenizer": {"vocab_size": self.tokenizer_vocab_size},
                "paths": dict(self.paths)}

    def hash(self):
        d = self.to_dict()
        d.pop("paths")
        return config_hash(d)


def resolve(raw, base_dir=".", check_paths=True):
    """Merge ``raw`` over its preset and validate every section."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {"preset", "seed", "deterministic", "model", "train", "masking", "tokenizer", "paths"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    preset = raw.get("preset", "desk")
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if "seed" not in raw:
        raise ConfigurationError("config must set a seed")
    seed = int(raw["seed"])
    base = PRESETS[preset]
    try:
        model = ModelConfig(**{**base["model"], **raw.get("model", {})})
        train = TrainConfig.from_dict({**base["train"], **raw.get("train", {}), "seed": seed})
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    mask_raw = dict(raw.get("masking", {}))
    weight = float(mask_raw.pop("priority_weight", DEFAULT_PRIORITY_WEIGHT))
    extra = set(mask_raw) - {"start_rate", "end_rate"}
    if extra:
        raise ConfigurationError(f"unknown masking keys {sorted(extra)}")
    masking = MaskingSchedule(total_steps=train.total_steps, **mask_raw)
    if weight <= 0:
        raise ConfigurationError("priority_weight must be positive")
    tok_size = int({**base["tokenizer"], **raw.get("tokenizer", {})}["vocab_size"])

    paths = {}
    for key, value in raw.get("paths", {}).items():
        if key not in PATH_KEYS:
            raise ConfigurationError(f"unknown path key {key!r}")
        paths[key] = value if os.path.isabs(value) else os.path.normpath(os.path.join(base_dir, value))
    if check_paths:
        for key in _MUST_EXIST:
            if key in paths and not os.path.exists(paths[key]):
                raise ConfigurationError(f"paths.{key}: {paths[key]} does not exist")
    return RunConfig(model, train, masking, weight, tok_size, paths, seed,
                     bool(raw.get("deterministic", True)), preset)


def load_run_config(path, check_paths=True):
    if not os.path.exists(path):
        raise ConfigurationError(f"config file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return resolve(raw, os.path.dirname(os.path.abspath(path)), check_paths)
