"""Forward model walkthrough.

Builds one simulated slice, pushes it through the multi-coil sampling
operator and checks the numerical identities the reconstruction relies on.
Run with ``python notebooks/01_operators.py``.
"""

import numpy as np
import torch

from mcunet.mri_ops import adjoint_A, expand, fft2c, forward_A, ifft2c, reduce, to_channels, to_complex
from mcunet.simdata import MaskSpec, make_csm, make_mask, make_phantom, random_phantom_spec, realized_acceleration

torch.set_default_dtype(torch.float64)
size = (64, 64)

# %% a phantom, eight coil maps and a 4x random Cartesian mask
x = make_phantom(random_phantom_spec(size, seed=0))
csm = make_csm(8, size, seed=1)
mask = make_mask(MaskSpec("cartesian_random", 4.0, seed=2), size)
print(f"phantom peak {np.abs(x).max():.3f}, realized acceleration {realized_acceleration(mask):.2f}")
print(f"sum of |S|^2 over coils: min {np.min((np.abs(csm) ** 2).sum(0)):.6f}, max {np.max((np.abs(csm) ** 2).sum(0)):.6f}")

img = to_channels(torch.from_numpy(x.astype(np.complex128)))[None]
S = torch.from_numpy(csm.astype(np.complex128))[None]
M = torch.from_numpy(mask.astype(np.float64))[None]

# %% the orthonormal FFT preserves energy and inverts exactly
coils = expand(img, S)
k = fft2c(coils)
print(f"Parseval gap {abs(k.norm() - coils.norm()).item():.2e}")
print(f"FFT round trip {(ifft2c(k) - coils).norm().item() / coils.norm().item():.2e}")
print(f"reduce(expand(x)) - x: {(reduce(coils, S) - img).norm().item():.2e}")

# %% A and its adjoint
y = forward_A(img, S, M)
g = torch.Generator().manual_seed(3)
kk = torch.complex(torch.randn(y.shape, generator=g), torch.randn(y.shape, generator=g))
lhs = torch.vdot(y.flatten(), kk.flatten())
rhs = torch.vdot(to_complex(img).flatten(), to_complex(adjoint_A(kk, S, M)).flatten())
print(f"<Ax, k> = {lhs.item():.6f}")
print(f"<x, A^H k> = {rhs.item():.6f}")

zf = adjoint_A(y, S, M)
err = (zf - img).norm() / img.norm()
print(f"zero-filled relative error {err.item():.3f}")
