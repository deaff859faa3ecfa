"""Masking-strategy ablation: token-aware vs uniform selection vs a fixed 15% rate."""
from dataclasses import dataclass, field, replace

import numpy as np

from ..encoder import init_params
from ..masking import MaskingSchedule, TokenPriorityTable
from ..seeding import derive_seed
from ..training import train_loop
from ..metrics import TOPK
from .mlm import mlm_eval

VARIANTS = ("baseline", "uniform-masking", "fixed-15%")

# Full-scale reference numbers (percent), kept as annotations; not reproducible at desk scale.
REFERENCE_TOP1 = {"baseline": 63.31, "uniform-masking": 48.84, "fixed-15%": 58.22}
REFERENCE_TOPK = {
    "baseline": (63.31, 79.67, 83.33, 88.10),
    "uniform-masking": (48.84, 53.01, 56.10, 58.79),
    "fixed-15%": (58.22, 73.87, 76.90, 80.57),
}


@dataclass
class AblationTable:
    rows: dict = field(default_factory=dict)       # variant -> {"top1": mean, ...}
    per_seed: dict = field(default_factory=dict)   # variant -> list of per-seed dicts
    annotations: dict = field(default_factory=dict)

    def to_dict(self):
        return {"columns": [f"top{k}" for k in TOPK], "rows": self.rows,
                "per_seed": self.per_seed, "annotations": self.annotations}


def variant_setup(variant, schedule, priorities):
    if variant == "baseline":
        return schedule, priorities
    if variant == "uniform-masking":
        return schedule, TokenPriorityTable.uniform(len(priorities))
    if variant == "fixed-15%":
        return MaskingSchedule(0.15, 0.15, schedule.total_steps), priorities
    raise ValueError(f"unknown variant {variant!r}")


def ablation_harness(train_ids, heldout_ids, model_config, train_config, schedule, priorities,
                     *, seeds=(0, 1, 2), variants=VARIANTS, eval_priorities=None, eval_seed=1234,
                     tokenizer=None):
    """Train each variant once per seed and evaluate on a shared held-out split.

    All variants see the same initial weights, batch order and evaluation
    masks for a given seed; only the masking strategy differs. Evaluation
    uses ``eval_priorities`` (default: the token-aware table) at the
    schedule's end rate.
    """
    eval_priorities = eval_priorities or priorities
    table = AblationTable(annotations={
        "reference_topk_percent": {v: REFERENCE_TOPK[v] for v in variants},
        "note": "reference values come from full-scale pretraining and are not reproduced here",
        "eval_rate": schedule.end_rate, "seeds": list(seeds)})
    for variant in variants:
        sched, prios = variant_setup(variant, schedule, priorities)
        runs = []
        for seed in seeds:
            cfg = replace(train_config, seed=seed)
            params = init_params(model_config, derive_seed(seed, "init"))
            result = train_loop(None, tokenizer, params, model_config, cfg, sched, prios,
                                corpus_ids=train_ids)
            rep = mlm_eval(result.params, model_config, heldout_ids, priorities=eval_priorities,
                           rate=schedule.end_rate, seed=eval_seed)
            runs.append({f"top{k}": rep.accuracy[k] for k in rep.k_values} |
                        {"mean_loss": rep.mean_loss, "seed": seed})
        table.per_seed[variant] = runs
        table.rows[variant] = {key: float(np.mean([r[key] for r in runs]))
                               for key in runs[0] if key != "seed"}
    return table
