import os
import pytest

# Use as decorator for full training runs
slow_test = pytest.mark.skipif(os.getenv('UMC_ENABLE_SLOW_TEST','').lower() not in ('y','yes','1'),
                               reason="Slow training run, set UMC_ENABLE_SLOW_TEST=yes")

# Small enough for oracle tests to run in a few seconds
SMALL_MODEL = dict(vocab_size=16, d_model=8, mlp_expansion=2, n_layers_und=3, n_layers_gen=3, n_heads=2,
                   gen_output_dim=4, gen_steps=2, gen_length=2, max_len=12, timestep_features=4)

SMALL_DATA = dict(n_pattern_classes=4, seq_length=10, motif_length=3, prompt_length=4, vocab_size=16,
                  gen_length=2, gen_output_dim=4, n_train=32, n_heldout=8)
