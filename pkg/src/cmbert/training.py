"""MLM pretraining: loss, StableAdamW, cosine schedule, curriculum, checkpoints."""
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .encoder import ModelConfig, ParameterStore, compute_gradients, mlm_forward
from .encoder.checkpoint import check_census, read_container, write_container
from .encoder.model import expected_census
from .errors import CheckpointError, ConfigurationError, InputError, NonFiniteGradientError, \
    TrainingAborted
from .metrics import TOPK, exclude_special, topk_hits
from .masking import MaskingSchedule, collate, masking_rate
from .seeding import derive_seed, rng_for
from .tokenizer import SEP_ID

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2000
    checkpoint_every: int = 500
    log_every: int = 10
    peak_lr: float = 5e-4
    warmup_steps: int = 100
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.98)
    eps: float = 1e-8
    batch_size: int = 16
    curriculum: tuple = ((0, 128),)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        object.__setattr__(self, "curriculum", tuple(tuple(p) for p in self.curriculum))
        if self.total_steps <= 0 or self.batch_size <= 0:
            raise ConfigurationError("total_steps and batch_size must be positive")
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ConfigurationError("warmup_steps must be < total_steps")
        starts = [s for s, _ in self.curriculum]
        if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("curriculum start steps must increase strictly from 0")
        if self.checkpoint_every <= 0 or self.log_every <= 0:
            raise ConfigurationError("checkpoint_every and log_every must be positive")

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["curriculum"] = [list(p) for p in self.curriculum]
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown train config keys {sorted(unknown)}")
        return cls(**d)


DESK_TRAIN = TrainConfig()
FULL_SCALE_TRAIN = TrainConfig(total_steps=150_000, checkpoint_every=10_000, log_every=10,
                                peak_lr=5e-4, warmup_steps=3000, batch_size=256,
                                curriculum=((0, 128), (100_000, 8192)))


@dataclass
class MetricsRecord:
    step: int
    mlm_loss: float
    top1: float
    top5: float
    top10: float
    top25: float
    learning_rate: float
    masking_rate: float
    wall_time: float
    n_masked: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    m: ParameterStore
    v: ParameterStore
    t: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(params.zeros_like(), params.zeros_like(), 0)


def mlm_loss(logits, labels):
    """Mean cross-entropy over masked positions; 0 when there are none."""
    return mlm_loss_and_grad(logits, labels)[0]


def mlm_loss_and_grad(logits, labels):
    logits = np.asarray(logits)
    n = len(logits)
    if n == 0:
        return 0.0, np.zeros_like(logits)
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    sums = expd.sum(axis=1, keepdims=True)
    logprob = shifted[np.arange(n), labels] - np.log(sums[:, 0])
    loss = float(-np.mean(logprob, dtype=np.float64))
    grad = expd / sums
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def cosine_lr(step, config):
    """Linear warmup to ``peak_lr``, then half-cosine decay to 0 at ``total_steps``."""
    peak, warm, total = config.peak_lr, config.warmup_steps, config.total_steps
    if warm and step < warm:
        return peak * step / warm
    progress = min((step - warm) / max(total - warm, 1), 1.0)
    return max(peak * 0.5 * (1.0 + np.cos(np.pi * progress)), 0.0)


def update_clip_factor(grad, v_hat, eps):
    """StableAdamW scale ``1 / max(1, sqrt(mean(g^2 / (v_hat + eps))))`` for one tensor."""
    rms = np.sqrt(np.mean(grad.astype(np.float64) ** 2 / (v_hat.astype(np.float64) + eps)))
    return 1.0 / max(1.0, float(rms))


def stable_adamw_step(params, grads, state, lr, config):
    """One in-place AdamW update with per-tensor update clipping.

    Weight decay is decoupled and applied to matrices only (norm scales are
    not decayed). Non-finite gradients raise before anything is modified.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in {name!r}; step rejected")
    b1, b2 = config.betas
    t = state.t + 1
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        c = update_clip_factor(g, v_hat, config.eps)
        if p.ndim >= 2 and config.weight_decay:
            p *= p.dtype.type(1.0 - lr * config.weight_decay)
        p -= (lr * c) * (m_hat / (np.sqrt(v_hat) + config.eps))
    state.t = t
    return params, state


def curriculum_seq_len(step, config, max_seq_len=None):
    length = config.curriculum[0][1]
    for start, seq_len in config.curriculum:
        if step >= start:
            length = seq_len
    return min(length, max_seq_len) if max_seq_len else length


def batch_indices(step, n_docs, config):
    """Document indices of a step's batch; the corpus cycles with a reshuffle per epoch."""
    b = config.batch_size
    out = []
    for g in range(step * b, (step + 1) * b):
        epoch, offset = divmod(g, n_docs)
        order = rng_for(config.seed, "epoch", epoch).permutation(n_docs)
        out.append(int(order[offset]))
    return out


def truncate(ids, seq_len):
    if len(ids) <= seq_len:
        return list(ids)
    return list(ids[:seq_len - 1]) + [SEP_ID]


def config_hash(*dicts):
    blob = json.dumps(dicts, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def checkpoint_path(out_dir, step):
    return os.path.join(out_dir, f"ckpt_{step:06d}.cmb")


def save_checkpoint(path, params, state, step, metadata=None):
    tensors = dict(params)
    for name in params:
        tensors[f"optim.m.{name}"] = state.m[name]
        tensors[f"optim.v.{name}"] = state.v[name]
    meta = dict(metadata or {})
    meta.update(step=int(step), optimizer_t=int(state.t))
    write_container(path, tensors, meta)


def load_checkpoint(path, model_config=None):
    """Return ``(params, optimizer_state, step, metadata)``.

    With ``model_config`` the parameter census must match it exactly.
    """
    tensors, meta = read_container(path)
    params = ParameterStore((k, v) for k, v in tensors.items() if not k.startswith("optim."))
    if model_config is not None:
        check_census(params, expected_census(model_config), path)
    try:
        m = ParameterStore((k, tensors[f"optim.m.{k}"]) for k in params)
        v = ParameterStore((k, tensors[f"optim.v.{k}"]) for k in params)
    except KeyError as exc:
        raise CheckpointError(f"{path}: optimizer section lacks {exc.args[0]!r}") from None
    if "step" not in meta:
        raise CheckpointError(f"{path}: metadata has no step counter")
    return params, OptimizerState(m, v, int(meta.get("optimizer_t", meta["step"]))), \
        int(meta["step"]), meta


@dataclass
class TrainResult:
    params: ParameterStore
    state: OptimizerState
    records: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    skipped_steps: list = field(default_factory=list)


def _write_records(path, records, mode):
    with open(path, mode, encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def train_loop(documents, tokenizer, params, model_config, train_config, schedule, priorities,
               out_dir=None, *, resume=None, stop_after=None, metadata=None, corpus_ids=None):
    """Run MLM pretraining and return a :class:`TrainResult`.

    Each step samples the batch for its index, truncates and pads it to the
    curriculum length, collates with the step's masking rate, and applies one
    StableAdamW update at the cosine learning rate. Every random draw is
    derived from ``(seed, purpose, step)``, so a run resumed from a checkpoint
    reproduces the uninterrupted one. ``stop_after`` ends the run early
    (after that many total steps) without changing any schedule.
    """
    if corpus_ids is None:
        if not documents:
            raise InputError("training corpus is empty")
        corpus_ids = [tokenizer.encode(d) for d in documents]
    if not corpus_ids:
        raise InputError("training corpus is empty")
    cfg = train_config
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(model_config.to_dict(), cfg.to_dict(), asdict(schedule))
    meta = {"seed": cfg.seed, "config_hash": chash, "model_config": model_config.to_dict(),
            "train_config": cfg.to_dict(), "masking_schedule": asdict(schedule),
            "rng": "splitmix64(seed, purpose, step)"}
    meta.update(metadata or {})

    if resume is not None:
        params, state, start, ck_meta = load_checkpoint(resume, model_config)
        if ck_meta.get("config_hash") not in (None, chash):
            log.warning("resuming %s written under config hash %s (now %s)", resume,
                        ck_meta.get("config_hash"), chash)
    else:
        params = params.copy()
        state = OptimizerState.zeros(params)
        start = 0
    result = TrainResult(params, state)
    metrics_path = os.path.join(out_dir, METRICS_FILE) if out_dir else None
    if metrics_path:
        kept = []
        if resume is not None and os.path.exists(metrics_path):
            with open(metrics_path, encoding="utf-8") as fh:
                kept = [MetricsRecord(**json.loads(line)) for line in fh if line.strip()]
            kept = [r for r in kept if r.step < start]
        _write_records(metrics_path, kept, "w")

    vocab_size = tokenizer.vocab_size if tokenizer is not None else model_config.vocab_size
    end = cfg.total_steps if stop_after is None else min(stop_after, cfg.total_steps)
    t0 = time.perf_counter()
    last_ckpt = resume
    for step in range(start, end):
        seq_len = curriculum_seq_len(step, cfg, model_config.max_seq_len)
        seqs = [truncate(corpus_ids[i], seq_len) for i in batch_indices(step, len(corpus_ids), cfg)]
        rate = masking_rate(schedule, step)
        batch = collate(seqs, step, schedule, priorities, vocab_size,
                        rng_for(cfg.seed, "mask", step), pad_to=seq_len)
        lr = cosine_lr(step, cfg)
        n = len(batch.mask_positions)
        if n == 0:
            result.skipped_steps.append(step)
            loss, hits = 0.0, {k: 0 for k in TOPK}
        else:
            logits, tape = mlm_forward(batch.input_ids, batch.padding_mask, batch.mask_positions,
                                       params, model_config)
            logits = exclude_special(logits)
            targets = batch.target_ids
            loss, dlogits = mlm_loss_and_grad(logits, targets)
            if not np.isfinite(loss):
                raise TrainingAborted(f"non-finite loss at step {step}", last_ckpt)
            hits = topk_hits(logits, targets, [k for k in TOPK if k <= logits.shape[1]])
            grads = compute_gradients(tape, dlogits)
            try:
                stable_adamw_step(params, grads, state, lr, cfg)
            except NonFiniteGradientError as exc:
                log.warning("step %d: %s", step, exc)
                result.skipped_steps.append(step)
        if step % cfg.log_every == 0 or step == end - 1:
            denom = max(n, 1)
            rec = MetricsRecord(step, loss, *(hits.get(k, n) / denom for k in TOPK),
                                learning_rate=float(lr), masking_rate=float(rate),
                                wall_time=time.perf_counter() - t0, n_masked=int(n))
            result.records.append(rec)
            if metrics_path:
                _write_records(metrics_path, [rec], "a")
        done = step + 1
        if out_dir and (done % cfg.checkpoint_every == 0 or done == end):
            last_ckpt = checkpoint_path(out_dir, done)
            save_checkpoint(last_ckpt, params, state, done, meta)
            result.checkpoints.append(last_ckpt)
    return result
