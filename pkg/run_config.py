# run_config.py
"""
Run configuration store: `key = value` text files, CLI overrides, digests.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional

from cryptography.hazmat.primitives import hashes

from config import settings
from modules.cgnn import TrainConfig
from modules.datasets import SYNTHETIC_KINDS
from modules.errors import ConfigError

logger = logging.getLogger("CgnnApp")


@dataclass(frozen=True)
class RunConfig:
    # dataset files (empty when a synthetic dataset is requested)
    graph: str = ""
    features: str = ""
    labels: str = ""
    splits: str = ""
    # synthetic dataset
    synthetic: str = ""
    synth_n: int = 200
    synth_p_in: float = 0.05
    synth_p_out: float = 0.005
    synth_noise: float = settings.SYNTH_NOISE
    synth_dim: int = settings.SYNTH_DIM
    # model / training
    layers: int = settings.LAYERS
    hidden: int = settings.HIDDEN
    lr: float = settings.LEARNING_RATE
    weight_decay: float = settings.WEIGHT_DECAY
    epochs: int = settings.EPOCHS
    seed: int = settings.SEED
    activation: str = settings.ACTIVATION
    # commute path
    rank_q: int = settings.RANK_Q
    backend: str = settings.DEFAULT_BACKEND
    dense_cap: int = settings.DENSE_CAP
    ppr_gamma: float = settings.PPR_GAMMA
    rewiring: str = settings.REWIRING
    out_dir: str = settings.OUT_DIR

    def validate(self, check_paths: bool = True) -> "RunConfig":
        if self.rank_q < 1:
            raise ConfigError(f"rank_q must be >= 1, got {self.rank_q}")
        if self.dense_cap < 1:
            raise ConfigError("dense_cap must be >= 1")
        if self.backend not in settings.BACKENDS:
            raise ConfigError(f"unknown backend '{self.backend}' (expected one of {settings.BACKENDS})")
        if self.rewiring not in ("similarity", "symmetric"):
            raise ConfigError(f"unknown rewiring '{self.rewiring}'")
        if self.synthetic:
            if self.synthetic not in SYNTHETIC_KINDS:
                raise ConfigError(f"unknown synthetic kind '{self.synthetic}'")
        elif check_paths:
            for key in ("graph", "features", "labels"):
                if not getattr(self, key):
                    raise ConfigError(f"'{key}' is required unless 'synthetic' is set")
            for key in ("graph", "features", "labels", "splits"):
                path = getattr(self, key)
                if path and not os.path.exists(path):
                    raise ConfigError(f"{key} file not found: {path}")
        self.train_config()  # hyperparameter checks live there
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(layers=self.layers, hidden=self.hidden, lr=self.lr,
                           weight_decay=self.weight_decay, epochs=self.epochs, seed=self.seed,
                           rank_q=self.rank_q, backend=self.backend, activation=self.activation)

    def synth_params(self) -> Dict[str, float]:
        if self.synthetic == "two_block":
            return {"p_in": self.synth_p_in, "p_out": self.synth_p_out,
                    "noise": self.synth_noise, "dim": self.synth_dim}
        return {"dim": self.synth_dim}


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: Any) -> Any:
    kind = _TYPES[key]
    if isinstance(raw, kind):
        return raw
    try:
        return kind(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"'{key}' expects {kind.__name__}, got '{raw}'") from e


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{no}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _TYPES:
                raise ConfigError(f"{path}:{no}: unknown key '{key}'")
            try:
                values[key] = _coerce(key, value)
            except ConfigError as e:
                raise ConfigError(f"{path}:{no}: {e}") from e
    logger.info(f"Config: loaded {len(values)} key(s) from {path}")
    return RunConfig(**values)


def merge_overrides(cfg: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """CLI values win over file values; None means 'not given'."""
    given = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown override '{key}'")
        given[key] = _coerce(key, value)
    return replace(cfg, **given) if given else cfg


def render_config(cfg: RunConfig, include_out_dir: bool = False) -> str:
    """Canonical `key = value` text, keys sorted."""
    items = sorted(asdict(cfg).items())
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n"
                   for k, v in items if include_out_dir or k != "out_dir")


def save_config(cfg: RunConfig, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_config(cfg, include_out_dir=True))


# ---- digests ----
def sha256_hex(data: bytes) -> str:
    digest = hashes.Hash(hashes.SHA256())
    digest.update(data)
    return digest.finalize().hex()


def file_digest(path: str) -> str:
    with open(path, "rb") as f:
        return sha256_hex(f.read())


def config_digest(cfg: RunConfig) -> str:
    # out_dir is where results go, not what they are
    return sha256_hex(render_config(cfg).encode("utf-8"))


def config_from_file_and_flags(path: Optional[str], overrides: Mapping[str, Any]) -> RunConfig:
    base = load_config(path) if path else RunConfig()
    return merge_overrides(base, overrides)
