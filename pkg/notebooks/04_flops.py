"""Analytic FLOP counts: how cost scales with the number of cascades."""

import numpy as np

from mcunet.flops import breakdown, count_flops
from mcunet.model import ModelConfig

shape, coils = (320, 320), 15
for variant in ("original", "addition", "no_correction"):
    cfg = ModelConfig(K=5, variant=variant, coils=coils, height=shape[0], width=shape[1])
    print(f"{variant:>14}: {count_flops(cfg):8.2f} GFLOPs")

b = breakdown(ModelConfig(K=5, coils=coils, height=shape[0], width=shape[1]))
print({k: v for k, v in b.items() if isinstance(v, int)})

# %% cost is affine in K
ks = np.arange(1, 11)
g = np.array([count_flops(ModelConfig(K=int(k), coils=coils, height=shape[0], width=shape[1])) for k in ks])
slope, icpt = np.polyfit(ks, g, 1)
resid = g - (slope * ks + icpt)
print(f"GFLOPs = {slope:.3f} K + {icpt:.3f}, max residual {np.abs(resid).max():.1e}")
