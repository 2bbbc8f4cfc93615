"""Run configuration: defaults, key-value files, validation."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

# Maximum character lengths (question, answer) per dataset
MAX_LENGTHS = {
    "trecqa": (192, 386),
    "wikiqa": (125, 386),
}


@dataclass
class RunConfig:
    embed_dim: int = 50
    conv_blocks: list[tuple[int, int]] = field(default_factory=lambda: [(3, 128), (5, 32)])
    hidden_dim: int = 100
    dropout_rate: float = 0.0
    use_bn: bool = True
    max_len_q: int = 192
    max_len_a: int = 386
    lam: float = 5e-4
    adadelta_rho: float = 0.95
    adadelta_eps: float = 1e-6
    batch_size: int = 64
    patience: int = 5
    max_epochs: int = 50
    seed: int = 0
    activation: str = "relu"
    conv_mode: str = "narrow"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    n_features: int = 2
    init_scale: float = 0.05

    def __post_init__(self):
        self.conv_blocks = [tuple(int(v) for v in blk) for blk in self.conv_blocks]

    @classmethod
    def for_dataset(cls, dataset: str, **overrides) -> "RunConfig":
        cfg = cls(**overrides)
        if dataset in MAX_LENGTHS:
            q, a = MAX_LENGTHS[dataset]
            if "max_len_q" not in overrides:
                cfg.max_len_q = q
            if "max_len_a" not in overrides:
                cfg.max_len_a = a
        return cfg

    def validate(self) -> "RunConfig":
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("embed_dim and hidden_dim must be positive")
        if not self.conv_blocks:
            raise ConfigError("at least one convolution block is required")
        for w, n in self.conv_blocks:
            if w < 1 or n < 1:
                raise ConfigError(f"bad conv block (width={w}, filters={n})")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.conv_mode not in ("narrow", "wide"):
            raise ConfigError(f"unknown conv_mode {self.conv_mode!r}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if self.n_features < 0 or self.lam < 0:
            raise ConfigError("n_features and lam must be non-negative")
        if self.conv_mode == "narrow":
            need = min_length(self)
            if min(self.max_len_q, self.max_len_a) < need:
                raise ConfigError(f"max lengths must be >= {need} for the narrow conv stack")
        return self

    @property
    def join_dim(self) -> int:
        return 2 * self.conv_blocks[-1][1] + self.n_features

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["conv_blocks"] = [list(b) for b in self.conv_blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def min_length(config: RunConfig) -> int:
    """Shortest input the narrow conv stack accepts: sum(w - 1) + 1."""
    return sum(w - 1 for w, _ in config.conv_blocks) + 1


def parse_conv_blocks(text: str) -> list[tuple[int, int]]:
    """``"3:128,5:32"`` -> [(3, 128), (5, 32)]."""
    blocks = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            w, n = part.split(":")
            blocks.append((int(w), int(n)))
        except ValueError:
            raise ConfigError(f"conv block must look like WIDTH:FILTERS, got {part!r}") from None
    return blocks


def format_conv_blocks(blocks) -> str:
    return ",".join(f"{w}:{n}" for w, n in blocks)


def coerce(name: str, raw: str):
    """Convert a string value to the type of RunConfig field ``name``."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if name not in fields:
        raise ConfigError(f"unknown config key {name!r}")
    if name == "conv_blocks":
        return parse_conv_blocks(raw)
    default = getattr(RunConfig(), name)
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return type(default)(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            values[key] = coerce(key, raw)
    return values


def write_config_file(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in config.to_dict().items():
            if key == "conv_blocks":
                value = format_conv_blocks(config.conv_blocks)
            f.write(f"{key} = {value}\n")
