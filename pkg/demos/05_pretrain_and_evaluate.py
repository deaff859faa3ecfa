"""
Pretraining a small encoder
===========================

A short masked-language-model run on synthetic clinical text, followed by
top-k accuracy on held-out sentences. Takes about a minute on one core.
"""
from cmbert.encoder import ModelConfig, init_params
from cmbert.evaluation import mlm_eval
from cmbert.masking import MaskingSchedule, TokenPriorityTable
from cmbert.synthetic import clinical_sentences, clinical_tokens, priority_lexicon
from cmbert.tokenizer import Tokenizer, augment_tokenizer
from cmbert.training import TrainConfig, train_loop

sentences = clinical_sentences(600, seed=2)
tok, size = augment_tokenizer(Tokenizer.train(sentences, 600), clinical_tokens())
ids = [tok.encode(s) for s in sentences]
train_ids, heldout_ids = ids[:500], ids[500:]

model = ModelConfig(d_model=64, n_heads=4, n_layers=2, d_ff=128, vocab_size=size,
                    max_seq_len=64, attention_block_size=32)
train = TrainConfig(total_steps=600, warmup_steps=50, peak_lr=1e-3, batch_size=16,
                    curriculum=((0, 40),), log_every=100)
priorities = TokenPriorityTable.from_lexicon(priority_lexicon(), tok)

before = mlm_eval(init_params(model, seed=0), model, heldout_ids, priorities=priorities)
result = train_loop(None, tok, init_params(model, seed=0), model, train,
                    MaskingSchedule(0.30, 0.15, 600), priorities, corpus_ids=train_ids)
for rec in result.records:
    print(f"step {rec.step:4d}  loss {rec.mlm_loss:.3f}  rate {rec.masking_rate:.3f}  "
          f"lr {rec.learning_rate:.1e}")

after = mlm_eval(result.params, model, heldout_ids, priorities=priorities)
for k in after.k_values:
    print(f"top-{k:<2d} {before.accuracy[k]:.3f} -> {after.accuracy[k]:.3f}")
