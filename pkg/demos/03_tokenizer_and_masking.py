"""
Tokenizer and token-aware masking
=================================

A BPE tokenizer is trained on synthetic clinical sentences and extended with
whole-word codes. Masking then favours lexicon tokens such as drug names.
"""
import numpy as np

from cmbert.masking import MaskingSchedule, TokenPriorityTable, collate, masking_rate
from cmbert.synthetic import clinical_sentences, clinical_tokens, priority_lexicon
from cmbert.tokenizer import Tokenizer, augment_tokenizer

corpus = clinical_sentences(1000, seed=1)
tok = Tokenizer.train(corpus, 800)
tok, size = augment_tokenizer(tok, clinical_tokens())
print("vocabulary size", size)

text = corpus[0]
ids = tok.encode(text)
print(text)
print([tok.vocab.id_to_token[i] for i in ids])
assert tok.decode(ids) == text

schedule = MaskingSchedule(0.30, 0.15, 2000)
print("rate at steps 0/1000/2000:", [masking_rate(schedule, s) for s in (0, 1000, 2000)])

# how often lexicon tokens are chosen compared with ordinary tokens
lexicon = TokenPriorityTable.from_lexicon(priority_lexicon(), tok, weight=5.0)
seqs = [tok.encode(s) for s in corpus[:200]]
rng = np.random.default_rng(0)
for label, table in (("token-aware", lexicon), ("uniform", TokenPriorityTable.uniform(size))):
    batch = collate(seqs, 0, schedule, table, size, rng)
    share = np.mean(lexicon.weights[batch.target_ids] > 1)
    print(f"{label:12s} share of masked targets from the lexicon: {share:.2f}")

print(tok.decode(batch.input_ids[0]))
