"""Token-aware MLM collation with a linearly decaying corruption rate."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .tokenizer import MASK_ID, N_SPECIAL, PAD_ID

IGNORE_INDEX = -100
DEFAULT_PRIORITY_WEIGHT = 5.0


@dataclass(frozen=True)
class MaskingSchedule:
    start_rate: float = 0.30
    end_rate: float = 0.15
    total_steps: int = 2000

    def __post_init__(self):
        if not 0 < self.end_rate <= self.start_rate < 1:
            raise ConfigurationError("need 0 < end_rate <= start_rate < 1")
        if self.total_steps <= 0:
            raise ConfigurationError("total_steps must be positive")


def masking_rate(schedule, step):
    t, total = min(step, schedule.total_steps), schedule.total_steps
    # weighted form keeps the endpoints and midpoint exact in binary floating point
    rate = (schedule.start_rate * (total - t) + schedule.end_rate * t) / total
    return min(max(rate, schedule.end_rate), schedule.start_rate)


class TokenPriorityTable:
    """Per-token selection weights, dense over the vocabulary (default 1.0)."""

    def __init__(self, weights):
        weights = np.asarray(weights, dtype=np.float64)
        if np.any(weights[N_SPECIAL:] <= 0):
            raise ConfigurationError("token weights must be positive")
        self.weights = weights

    @classmethod
    def uniform(cls, vocab_size):
        return cls(np.ones(vocab_size))

    @classmethod
    def from_lexicon(cls, terms, tokenizer, weight=DEFAULT_PRIORITY_WEIGHT):
        """Every id produced by tokenizing a lexicon term gets ``weight``."""
        w = np.ones(tokenizer.vocab_size)
        for term in terms:
            for i in tokenizer.encode(term, add_special=False):
                if i >= N_SPECIAL:
                    w[i] = weight
        return cls(w)

    def weight(self, token_id):
        return float(self.weights[token_id])

    def __len__(self):
        return len(self.weights)


def read_lexicon(path):
    """Terms from a UTF-8 file, one per line; blank lines and ``#`` comments skipped."""
    terms = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                terms.append(line)
    return terms


def round_half_up(x):
    return int(math.floor(x + 0.5 + 1e-9))


def inclusion_probabilities(weights, m):
    """Probabilities proportional to ``weights`` summing to ``m``, capped at 1.

    Units whose share would exceed 1 are taken with certainty and the
    remainder is redistributed over the rest.
    """
    w = np.asarray(weights, dtype=np.float64)
    pi = np.zeros_like(w)
    certain = np.zeros(w.shape, dtype=bool)
    while True:
        rest = ~certain
        budget = m - certain.sum()
        pi[rest] = budget * w[rest] / w[rest].sum()
        over = rest & (pi >= 1.0)
        if not over.any():
            break
        certain |= over
    pi[certain] = 1.0
    return pi


def select_mask_positions(token_ids, priorities, rate, rng):
    """Sorted indices to mask in one sequence.

    Exactly ``round(rate * n_eligible)`` positions are drawn without
    replacement; each eligible position (not special, not padding) is
    included with probability proportional to its token weight. The draw is
    a systematic sample over a random permutation of the eligible positions.
    """
    if not 0 < rate < 1:
        raise ValueError("rate must lie in (0, 1)")
    ids = np.asarray(token_ids)
    eligible = np.flatnonzero(ids >= N_SPECIAL)
    m = round_half_up(rate * len(eligible))
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if m >= len(eligible):
        return eligible.astype(np.int64)
    pi = inclusion_probabilities(priorities.weights[ids[eligible]], m)
    certain = eligible[pi >= 1.0]
    cand = np.flatnonzero(pi < 1.0)
    need = m - len(certain)
    picked = np.empty(0, dtype=np.int64)
    if need:
        order = rng.permutation(cand)
        cum = np.cumsum(pi[order])
        points = rng.random() + np.arange(need)
        idx = np.minimum(np.searchsorted(cum, points, side="right"), len(order) - 1)
        picked = eligible[order[np.unique(idx)]]
    return np.sort(np.concatenate([certain, picked])).astype(np.int64)


def corrupt(token_ids, positions, vocab_size, rng, probs=(0.8, 0.1, 0.1), *,
            return_branches=False):
    """Replace selected positions: [MASK], a random non-special id, or unchanged.

    ``probs`` gives the mask / random / keep split. With ``return_branches``
    the per-position branch code (0 mask, 1 random, 2 keep) is also returned.
    """
    out = np.array(token_ids, copy=True)
    positions = np.asarray(positions, dtype=np.int64)
    u = rng.random(len(positions))
    branch = np.where(u < probs[0], 0, np.where(u < probs[0] + probs[1], 1, 2))
    out[positions[branch == 0]] = MASK_ID
    rand = positions[branch == 1]
    out[rand] = rng.integers(N_SPECIAL, vocab_size, size=len(rand))
    if return_branches:
        return out, branch
    return out


@dataclass
class MLMBatch:
    input_ids: np.ndarray      # [batch, seq], corrupted
    labels: np.ndarray         # [batch, seq], IGNORE_INDEX outside the mask set
    padding_mask: np.ndarray   # [batch, seq], True at padding
    mask_positions: np.ndarray  # [n_masked, 2] of (row, col)

    @property
    def target_ids(self):
        return self.labels[self.mask_positions[:, 0], self.mask_positions[:, 1]]


def collate(sequences, step, schedule, priorities, vocab_size, rng, *, pad_to=None,
            max_seq_len=None, probs=(0.8, 0.1, 0.1), rate=None):
    """Pad a list of token-id sequences and apply the step's masking.

    ``rate`` overrides the schedule (used for fixed-rate evaluation).
    """
    if not len(sequences):
        raise InputError("cannot collate an empty batch")
    width = max(len(s) for s in sequences)
    if max_seq_len is not None and width > max_seq_len:
        raise InputError(f"sequence of length {width} exceeds max_seq_len {max_seq_len}")
    if pad_to is not None:
        if width > pad_to:
            raise InputError(f"sequence of length {width} exceeds pad_to {pad_to}")
        width = pad_to
    rate = masking_rate(schedule, step) if rate is None else rate

    original = np.full((len(sequences), width), PAD_ID, dtype=np.int64)
    for r, seq in enumerate(sequences):
        original[r, :len(seq)] = seq
    inputs = original.copy()
    labels = np.full_like(original, IGNORE_INDEX)
    rows, cols = [], []
    for r in range(len(sequences)):
        pos = select_mask_positions(original[r], priorities, rate, rng)
        inputs[r] = corrupt(original[r], pos, vocab_size, rng, probs)
        labels[r, pos] = original[r, pos]
        rows.append(np.full(len(pos), r))
        cols.append(pos)
    mask_positions = np.stack([np.concatenate(rows), np.concatenate(cols)], axis=1).astype(np.int64)
    return MLMBatch(inputs, labels, original == PAD_ID, mask_positions)
