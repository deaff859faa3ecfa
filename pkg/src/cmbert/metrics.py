from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .tokenizer import N_SPECIAL

TOPK = (1, 5, 10, 25)


@dataclass
class TopKReport:
    k_values: tuple = TOPK
    accuracy: dict = field(default_factory=dict)
    mean_loss: float = float("nan")
    n_masked_evaluated: int = 0

    def to_dict(self):
        d = asdict(self)
        d["k_values"] = list(self.k_values)
        d["accuracy"] = {str(k): v for k, v in self.accuracy.items()}
        return d


def exclude_special(logits, n_special=N_SPECIAL):
    """Copy of ``logits`` with the special-token columns at -inf.

    Special ids are never masking targets, so they are not candidate
    predictions either.
    """
    out = np.array(logits, copy=True)
    out[:, :n_special] = -np.inf
    return out


def label_ranks(logits, labels):
    """0-based rank of each label among its row's logits.

    A logit ranks ahead of the label if it is strictly larger, or equal and
    belongs to a lower token id.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    target = logits[np.arange(len(labels)), labels][:, None]
    ids = np.arange(logits.shape[1])[None, :]
    ahead = (logits > target) | ((logits == target) & (ids < labels[:, None]))
    return ahead.sum(axis=1)


def topk_hits(logits, labels, ks=TOPK):
    """Per-k hit counts over the rows of ``logits``."""
    logits = np.asarray(logits)
    if max(ks) > logits.shape[1]:
        raise InputError(f"k={max(ks)} exceeds vocabulary size {logits.shape[1]}")
    ranks = label_ranks(logits, labels)
    return {k: int(np.sum(ranks < k)) for k in ks}


def topk_accuracy(logits, labels, ks=TOPK, mean_loss=float("nan")) -> TopKReport:
    """Fraction of rows whose label is among the ``k`` largest logits, for each k."""
    logits = np.asarray(logits)
    if len(logits) == 0:
        raise InputError("top-k accuracy needs at least one masked position")
    hits = topk_hits(logits, labels, ks)
    n = len(logits)
    return TopKReport(tuple(ks), {k: hits[k] / n for k in ks}, float(mean_loss), n)
