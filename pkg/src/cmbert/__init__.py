"""Desk-scale masked-language-model encoder pretraining for clinical text, in numpy.

Subpackages and modules:

- ``cmbert.encoder``: rotary attention (dense and blockwise), GeGLU, the
  encoder stack, reverse-mode gradients and the checkpoint container
- ``cmbert.tokenizer``: BPE training, encoding and vocabulary augmentation
- ``cmbert.masking``: token-aware MLM collation with a decaying mask rate
- ``cmbert.ontology``: medical code tables to natural-language lines
- ``cmbert.training``: loss, StableAdamW, cosine schedule, training loop
- ``cmbert.evaluation``: top-k MLM accuracy, embeddings, PCA/t-SNE, benchmarks
"""
from .encoder import ModelConfig, ParameterStore, encoder_forward, init_params
from .masking import MaskingSchedule, TokenPriorityTable, collate, masking_rate
from .tokenizer import Tokenizer
from .training import TrainConfig, train_loop

__version__ = "0.1.0"
