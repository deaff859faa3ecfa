"""
Forward-pass latency against batch volume
=========================================

Times the encoder forward pass, three repeats per volume, on randomly
initialised desk-size weights. Tokenization is outside the timed window.
"""
from cmbert.encoder import ModelConfig, init_params
from cmbert.evaluation import latency_bench

cfg = ModelConfig()  # desk size: d_model 128, 2 layers
report = latency_bench(init_params(cfg, seed=0), cfg, (4, 8, 16), seq_len=256)
for e in report.entries:
    print(f"{e.batch_volume:3d} sequences: mean {e.mean_time * 1e3:7.1f} ms "
          f"({', '.join(f'{t * 1e3:.1f}' for t in e.times)})")
for seq, row in report.memory.items():
    print(f"seq {seq}: attention buffers dense x{row['dense_ratio']:.0f}, "
          f"blockwise x{row['blockwise_ratio']:.1f}")
