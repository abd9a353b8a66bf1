"""
Looking inside the attention blocks
===================================

Each transformer block attends along time (one sequence per frequency bin) and along
frequency (one sequence per frame), then mixes the two with learned weights. After the
last block, a softmax over all block outputs decides how much each depth contributes.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch

from dbtnet.attention import AIAT, fold
from dbtnet.blocks import init_weights

torch.manual_seed(0)
aiat = AIAT(channels=16, heads=2, ffn_dim=32, n_blocks=3)
init_weights(aiat)

x = torch.randn(1, 16, 40, 20)  # B x C x T x F'
seq_time = fold(x, "time")      # (B*F') x T x C
seq_freq = fold(x, "freq")      # (B*T) x F' x C
print("time-axis sequences:", tuple(seq_time.shape), " frequency-axis sequences:", tuple(seq_freq.shape))

block = aiat.blocks[0]
with torch.no_grad():
    _, attn_t = block.atab.mhsa(seq_time, return_attention=True)
    _, attn_f = block.afab.mhsa(seq_freq, return_attention=True)
print("every attention row sums to one:", torch.allclose(attn_t.sum(-1), torch.ones(1)))

# Hierarchical weights over the three block outputs, one row per batch item.
with torch.no_grad():
    out, mids = aiat(x)
    print("hierarchical weights:", aiat.aha.weights(mids).numpy().round(3))

fig, axes = plt.subplots(1, 2, figsize=(9, 4))
axes[0].imshow(attn_t[5, 0], cmap="viridis")
axes[0].set_title("time attention, bin 5, head 0")
axes[1].imshow(attn_f[10, 0], cmap="viridis")
axes[1].set_title("frequency attention, frame 10, head 0")
fig.savefig("attention_maps.png", dpi=100)
print("wrote attention_maps.png")
