from dataclasses import asdict, dataclass

from ..errors import ConfigurationError

MAX_CONTEXT = 8192


@dataclass(frozen=True)
class ModelConfig:
    """Architectural hyperparameters of the encoder.

    ``attention`` selects the kernel used inside the layers: ``"blockwise"``
    (online softmax over key tiles) or ``"dense"``. Both give the same result.
    """

    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    vocab_size: int = 2048
    max_seq_len: int = 512
    rope_base: float = 10000.0
    attention_block_size: int = 128
    layer_norm_eps: float = 1e-5
    attention: str = "blockwise"
    init_std: float = 0.02

    def __post_init__(self):
        for name in ("d_model", "n_heads", "n_layers", "d_ff", "vocab_size", "max_seq_len"):
            if int(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.d_model % self.n_heads:
            raise ConfigurationError(
                f"n_heads={self.n_heads} does not divide d_model={self.d_model}")
        if self.d_head % 2:
            raise ConfigurationError(f"d_head={self.d_head} must be even for rotary embeddings")
        if self.max_seq_len > MAX_CONTEXT:
            raise ConfigurationError(f"max_seq_len may not exceed {MAX_CONTEXT}")
        if self.attention_block_size < 1:
            raise ConfigurationError("attention_block_size must be at least 1")
        if self.rope_base <= 0 or self.layer_norm_eps <= 0:
            raise ConfigurationError("rope_base and layer_norm_eps must be positive")
        if self.attention not in ("blockwise", "dense"):
            raise ConfigurationError(f"unknown attention kernel {self.attention!r}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
