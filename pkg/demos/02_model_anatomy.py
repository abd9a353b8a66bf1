"""
Anatomy of the dual-branch network
==================================

One branch predicts a bounded gain for the noisy magnitude; the other predicts a
complex residual that repairs what the gain cannot (mainly phase). This script builds
the default model, traces the tensor shapes of one forward pass, and shows how the
two estimates add up.
"""

import torch

from dbtnet.model import VARIANTS, DBTNet, ModelConfig, count_params

torch.manual_seed(0)
model = DBTNet(ModelConfig()).eval()
print(f"default model: {count_params(model) / 1e6:.2f} M parameters")

# Record the output shape of a few landmark modules.
landmarks = {
    "encoder (complex branch)": model.branch_b.encoder,
    "merge": model.branch_b.merge,
    "time attention input": model.branch_b.aiat.blocks[0].atab.mhsa,
    "frequency attention input": model.branch_b.aiat.blocks[0].afab.mhsa,
    "masking decoder": model.branch_a.mask_decoder,
    "real decoder": model.branch_b.real_decoder,
}
for name, module in landmarks.items():
    module.register_forward_hook(lambda m, i, o, name=name: print(f"  {name:<28}{tuple(i[0].shape)} -> {tuple(o.shape)}"))

noisy = torch.randn(1, 2, 101, 161)  # 1 s of compressed (real, imag) planes
with torch.no_grad():
    out = model(noisy)

# final = masked noisy magnitude with noisy phase + complex residual
print("mask range:", round(float(out.mask.min()), 3), "to", round(float(out.mask.max()), 3))
print("final == coarse + residual:", torch.equal(out.final_ri[0], out.meb_ri[0] + out.cpb_ri[0]))

# A probe with mask 1 and zero residual must hand back the input untouched.
with torch.no_grad():
    probe = model(noisy, force_mask=1.0, force_residual=(0.0, 0.0))
print("identity probe error:", float((probe.final - noisy).abs().max()))

# Ablation variants share the same building blocks.
with torch.device("meta"):
    for v in VARIANTS:
        print(f"  {v:<10}{count_params(DBTNet(ModelConfig(variant=v))) / 1e6:6.2f} M")
