"""
[CLS] embeddings in two dimensions
==================================

Sentences from several clinical templates are embedded with a small
encoder trained for a few hundred steps, then projected with t-SNE. 5-NN
purity by template summarises how well the layout separates them.
"""
import numpy as np

from cmbert.encoder import ModelConfig, init_params
from cmbert.evaluation import extract_cls_embeddings, knn_purity, pca_projection, tsne
from cmbert.masking import MaskingSchedule, TokenPriorityTable
from cmbert.synthetic import clinical_sentences
from cmbert.tokenizer import Tokenizer
from cmbert.training import TrainConfig, train_loop

docs = clinical_sentences(400, seed=3)
tok = Tokenizer.train(docs, 500)
model = ModelConfig(d_model=32, n_heads=2, n_layers=2, d_ff=64, vocab_size=tok.vocab_size,
                    max_seq_len=64, attention_block_size=32)
train = TrainConfig(total_steps=300, warmup_steps=30, peak_lr=1e-3, curriculum=((0, 48),))
priorities = TokenPriorityTable.uniform(tok.vocab_size)
untrained = init_params(model, seed=0)
trained = train_loop(docs, tok, untrained, model, train, MaskingSchedule(total_steps=300),
                     priorities).params

texts, kinds = clinical_sentences(150, seed=30, return_templates=True)
labels = np.array(kinds)
for name, params in (("untrained", untrained), ("trained", trained)):
    emb, _ = extract_cls_embeddings(params, model, tok, texts)
    proj = tsne(emb, perplexity=10, seed=0, labels=labels)
    print(f"{name:9s}  t-SNE purity {knn_purity(proj.coordinates, labels):.2f}  "
          f"PCA purity {knn_purity(pca_projection(emb).coordinates, labels):.2f}")

shuffled = np.random.default_rng(0).permutation(labels)
print(f"shuffled-label baseline {knn_purity(proj.coordinates, shuffled):.2f} "
      f"(1/L = {1 / len(set(kinds)):.2f})")
proj.write_csv("projection.csv")
