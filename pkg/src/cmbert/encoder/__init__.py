from .attention import (AllocationTracker, attention_blockwise, attention_blockwise_backward,
                        attention_dense, attention_dense_backward, attention_weights)
from .checkpoint import load_params, read_container, save_params, write_container
from .config import ModelConfig
from .layers import geglu_backward, geglu_forward, gelu, layer_norm, layer_norm_backward
from .model import (ParameterStore, Tape, compute_gradients, encoder_forward,
                    encoder_layer_backward, encoder_layer_forward, expected_census,
                    extend_embeddings, init_params, mlm_forward, mlm_logits)
from .rope import rope_angles, rope_apply

__all__ = [
    "AllocationTracker", "ModelConfig", "ParameterStore", "Tape",
    "attention_blockwise", "attention_blockwise_backward", "attention_dense",
    "attention_dense_backward", "attention_weights", "compute_gradients",
    "encoder_forward", "encoder_layer_backward", "encoder_layer_forward",
    "expected_census", "extend_embeddings", "geglu_backward", "geglu_forward", "gelu",
    "init_params", "layer_norm", "layer_norm_backward", "load_params", "mlm_forward",
    "mlm_logits", "read_container", "rope_angles", "rope_apply", "save_params",
    "write_container",
]
