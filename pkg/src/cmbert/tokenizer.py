"""Character-level byte-pair encoding over whitespace pretokens.

Each word is split into characters followed by the end-of-word symbol
``</w>``, so decoding can restore word boundaries.
Training greedily merges the most frequent adjacent pair (ties go to the
lexicographically smallest pair) until the vocabulary reaches its target or
no pair occurs at least twice.

Tokens added by :func:`augment_vocab` match whole words verbatim and
always encode to a single id.
"""
import os
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InputError

EOW = "</w>"
PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
N_SPECIAL = len(SPECIAL_TOKENS)


@dataclass
class Vocabulary:
    id_to_token: list
    added: set = field(default_factory=set)

    def __post_init__(self):
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        if tuple(self.id_to_token[:N_SPECIAL]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with {SPECIAL_TOKENS}")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    @property
    def special_ids(self):
        return tuple(range(N_SPECIAL))


class MergeTable(list):
    """Ordered ``(left, right)`` merge rules; a rule's rank is its index."""

    def ranks(self):
        return {pair: i for i, pair in enumerate(self)}


def pretokenize(text):
    return text.split()


def _word_symbols(word):
    return tuple(word) + (EOW,)


def _apply_merges(symbols, ranks):
    symbols = list(symbols)
    while len(symbols) > 1:
        best, best_rank = None, None
        for i in range(len(symbols) - 1):
            r = ranks.get((symbols[i], symbols[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best, best_rank = (symbols[i], symbols[i + 1]), r
        if best is None:
            break
        merged, i = [], 0
        while i < len(symbols):
            if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == best:
                merged.append(symbols[i] + symbols[i + 1])
                i += 2
            else:
                merged.append(symbols[i])
                i += 1
        symbols = merged
    return symbols


def bpe_train(corpus, target_vocab_size):
    """Learn a vocabulary and merge table from an iterable of text lines."""
    words = Counter()
    for line in corpus:
        words.update(pretokenize(line))
    if not words:
        raise InputError("cannot train a tokenizer on an empty corpus")

    base = sorted({s for w in words for s in _word_symbols(w)})
    if target_vocab_size < N_SPECIAL + len(base):
        raise InputError(f"target_vocab_size {target_vocab_size} is below the "
                         f"{N_SPECIAL + len(base)} special and base symbols")
    id_to_token = list(SPECIAL_TOKENS) + base
    seen = set(id_to_token)
    merges = MergeTable()
    splits = {w: list(_word_symbols(w)) for w in words}

    while len(id_to_token) < target_vocab_size:
        pairs = Counter()
        for w, syms in splits.items():
            f = words[w]
            for pair in zip(syms, syms[1:]):
                pairs[pair] += f
        if not pairs:
            break
        best_count = max(pairs.values())
        if best_count < 2:
            break
        best = min(p for p, c in pairs.items() if c == best_count)
        merges.append(best)
        token = best[0] + best[1]
        if token not in seen:
            seen.add(token)
            id_to_token.append(token)
        for w, syms in splits.items():
            if len(syms) < 2:
                continue
            out, i = [], 0
            while i < len(syms):
                if i < len(syms) - 1 and syms[i] == best[0] and syms[i + 1] == best[1]:
                    out.append(token)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            splits[w] = out
    return Vocabulary(id_to_token), merges


class Tokenizer:
    """Immutable encoder/decoder over a trained vocabulary and merge table."""

    def __init__(self, vocab, merges):
        self.vocab = vocab
        self.merges = MergeTable(merges)
        self._ranks = self.merges.ranks()
        self._word_cache = lru_cache(maxsize=65536)(self._encode_word)

    @classmethod
    def train(cls, corpus, target_vocab_size):
        return cls(*bpe_train(corpus, target_vocab_size))

    def __len__(self):
        return len(self.vocab)

    @property
    def vocab_size(self):
        return len(self.vocab)

    def _encode_word(self, word):
        t2i = self.vocab.token_to_id
        if word in self.vocab.added or word in SPECIAL_TOKENS:
            return (t2i[word],)
        return tuple(t2i.get(s, UNK_ID) for s in _apply_merges(_word_symbols(word), self._ranks))

    def encode(self, text, add_special=True):
        ids = [CLS_ID] if add_special else []
        for word in pretokenize(text):
            ids.extend(self._word_cache(word))
        if add_special:
            ids.append(SEP_ID)
        return ids

    def decode(self, ids):
        """Inverse of :meth:`encode` up to whitespace; PAD/CLS/SEP are dropped."""
        parts = []
        i2t = self.vocab.id_to_token
        for i in np.asarray(ids, dtype=np.int64).reshape(-1).tolist():
            if not 0 <= i < len(i2t):
                raise InputError(f"token id {i} out of range [0, {len(i2t)})")
            tok = i2t[i]
            if i in (PAD_ID, CLS_ID, SEP_ID):
                continue
            if i < N_SPECIAL or tok in self.vocab.added:
                parts.append(f" {tok} ")
            else:
                parts.append(tok.replace(EOW, " "))
        return " ".join("".join(parts).split())

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "vocab.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for i, tok in enumerate(self.vocab.id_to_token):
                fh.write(f"{i}\t{tok}\n")
        with open(os.path.join(directory, "merges.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for left, right in self.merges:
                fh.write(f"{left}\t{right}\n")
        with open(os.path.join(directory, "added_tokens.txt"), "w", encoding="utf-8",
                  newline="\n") as fh:
            for tok in self.vocab.id_to_token:
                if tok in self.vocab.added:
                    fh.write(tok + "\n")

    @classmethod
    def load(cls, directory):
        id_to_token = []
        with open(os.path.join(directory, "vocab.txt"), encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                idx, tok = line.rstrip("\n").split("\t", 1)
                if int(idx) != lineno - 1:
                    raise InputError(f"vocab.txt line {lineno}: id {idx} out of sequence")
                id_to_token.append(tok)
        merges = MergeTable()
        with open(os.path.join(directory, "merges.txt"), encoding="utf-8") as fh:
            for line in fh:
                left, right = line.rstrip("\n").split("\t")
                merges.append((left, right))
        added = set()
        added_path = os.path.join(directory, "added_tokens.txt")
        if os.path.exists(added_path):
            with open(added_path, encoding="utf-8") as fh:
                added = {line.rstrip("\n") for line in fh if line.strip()}
        return cls(Vocabulary(id_to_token, added), merges)


def augment_vocab(vocab, merges, new_tokens):
    """Append genuinely new whole-word tokens at the end of the vocabulary.

    Returns ``(vocab, new_vocab_size)``; the size is the directive for
    growing the embedding matrix. Existing ids are never touched.
    """
    id_to_token = list(vocab.id_to_token)
    added = set(vocab.added)
    for tok in new_tokens:
        if not tok or tok != tok.strip() or len(tok.split()) != 1:
            raise InputError(f"augmented token must be a non-empty single word, got {tok!r}")
        if tok in vocab.token_to_id or tok in added:
            continue
        added.add(tok)
        id_to_token.append(tok)
    new_vocab = Vocabulary(id_to_token, added)
    return new_vocab, len(new_vocab)


def augment_tokenizer(tokenizer, new_tokens):
    vocab, size = augment_vocab(tokenizer.vocab, tokenizer.merges, new_tokens)
    return Tokenizer(vocab, tokenizer.merges), size
