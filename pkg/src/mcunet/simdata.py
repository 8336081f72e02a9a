"""Synthetic multi-coil data: phantoms, coil maps, masks, acquisitions, on-disk format.

Seeding
-------
Every random quantity comes from ``numpy.random.SeedSequence``. For slice
``i`` of split ``s`` under root seed ``r`` the generator state is
``SeedSequence([r, SPLIT_CODES[s], i])``; its four spawned children seed, in
order, the phantom, the coil maps, the mask and the measurement noise.

Dataset layout
--------------
One directory per split containing ``manifest.json`` and one raw binary file
per array. Complex arrays (``xgt.bin``, ``csm.bin``, ``y.bin``) are
little-endian float32 pairs ``(re, im)`` in C order; ``mask.bin`` is
little-endian float32 ``0.0``/``1.0``. Shapes are ``(N, H, W)`` for
``xgt``/``mask`` and ``(N, C, H, W)`` for ``csm``/``y``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ValidationError
from .mri_ops import forward_A, to_channels

FORMAT_NAME = "mcunet-dataset"
FORMAT_VERSION = 1
SPLIT_CODES = {"train": 0, "val": 1, "test": 2}
MASK_KINDS = ("cartesian_random", "cartesian_equispaced", "random_2d")

# largest finite-difference step of |S_i| between neighbouring pixels,
# in units of 1 / min(H, W)
CSM_GRADIENT_BOUND = 4.0


@dataclass
class Ellipse:
    center: tuple  # (row, col) in [-1, 1]
    axes: tuple  # (row semi-axis, col semi-axis) in (0, 2]
    angle: float  # radians
    intensity: complex

    def to_dict(self) -> dict:
        z = complex(self.intensity)
        return {"center": list(self.center), "axes": list(self.axes), "angle": self.angle, "intensity": [z.real, z.imag]}

    @classmethod
    def from_dict(cls, d: dict) -> "Ellipse":
        re, im = d["intensity"]
        return cls(tuple(d["center"]), tuple(d["axes"]), float(d["angle"]), complex(re, im))


@dataclass
class PhantomSpec:
    size: tuple
    ellipses: list = field(default_factory=list)
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be nonnegative")
        for e in self.ellipses:
            cy, cx = e.center
            ry, rx = e.axes
            if min(ry, rx) <= 0:
                raise ValidationError(f"ellipse axes must be positive: {e.axes}")
            if abs(cy) > 1 or abs(cx) > 1:
                raise ValidationError(f"ellipse centre out of bounds: {e.center}")


@dataclass
class MaskSpec:
    kind: str = "cartesian_random"
    acceleration: float = 4.0
    center_lines: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ValidationError(f"unknown mask kind {self.kind!r}; valid: {', '.join(MASK_KINDS)}")
        if self.acceleration < 1:
            raise ValidationError(f"acceleration must be >= 1, got {self.acceleration}")


def _grid(size) -> tuple[np.ndarray, np.ndarray]:
    H, W = size
    v = (np.arange(H) + 0.5) / H * 2 - 1
    u = (np.arange(W) + 0.5) / W * 2 - 1
    return np.meshgrid(v, u, indexing="ij")


def ellipse_mask(e: Ellipse, size) -> np.ndarray:
    """Boolean point-in-ellipse test at pixel centres."""
    vv, uu = _grid(size)
    dy, dx = vv - e.center[0], uu - e.center[1]
    c, s = math.cos(e.angle), math.sin(e.angle)
    yr = c * dy - s * dx
    xr = s * dy + c * dx
    return (yr / e.axes[0]) ** 2 + (xr / e.axes[1]) ** 2 <= 1


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Sum of constant-intensity ellipses, scaled to peak magnitude 1."""
    if not spec.ellipses:
        raise ValidationError("phantom needs at least one ellipse")
    x = np.zeros(tuple(spec.size), dtype=np.complex128)
    for e in spec.ellipses:
        x[ellipse_mask(e, spec.size)] += complex(e.intensity)
    peak = np.abs(x).max()
    if peak == 0:
        raise ValidationError("phantom has zero magnitude everywhere")
    return x / peak


def random_phantom_spec(size, seed, n_inner: int = 6) -> PhantomSpec:
    """An outer body ellipse with ``n_inner`` smaller structures inside it."""
    rng = np.random.default_rng(seed)
    outer = Ellipse(
        center=tuple(rng.uniform(-0.05, 0.05, 2)),
        axes=tuple(rng.uniform(0.65, 0.85, 2)),
        angle=float(rng.uniform(-0.3, 0.3)),
        intensity=complex(np.exp(1j * rng.uniform(-np.pi, np.pi)) * rng.uniform(0.6, 1.0)),
    )
    ellipses = [outer]
    for _ in range(n_inner):
        r = rng.uniform(0, 0.4)
        t = rng.uniform(0, 2 * np.pi)
        ellipses.append(
            Ellipse(
                center=(r * math.sin(t), r * math.cos(t)),
                axes=tuple(rng.uniform(0.06, 0.3, 2)),
                angle=float(rng.uniform(0, np.pi)),
                intensity=complex(rng.uniform(-0.5, 0.5) * np.exp(1j * rng.uniform(-0.5, 0.5))),
            )
        )
    return PhantomSpec(tuple(size), ellipses)


def make_csm(C: int, size, seed) -> np.ndarray:
    """Smooth, pixelwise-normalized complex coil maps of shape ``(C, H, W)``.

    Coil ``i`` has magnitude ``(1.5 + cos(t_i) u + sin(t_i) v) ** 2`` for coil
    angle ``t_i`` and a linear phase ramp plus offset; the maps are then
    divided by their root sum of squares.
    """
    if C < 1:
        raise ValidationError(f"coil count must be >= 1, got {C}")
    rng = np.random.default_rng(seed)
    vv, uu = _grid(size)
    base = rng.uniform(0, 2 * np.pi)
    maps = []
    for i in range(C):
        t = base + 2 * np.pi * i / C
        mag = (1.5 + math.cos(t) * uu + math.sin(t) * vv) ** 2
        a, b = rng.uniform(-1, 1, 2)
        phase = rng.uniform(-np.pi, np.pi) + 0.5 * np.pi * (a * uu + b * vv)
        maps.append(mag * np.exp(1j * phase))
    S = np.stack(maps)
    return S / np.sqrt((np.abs(S) ** 2).sum(axis=0))


def default_center_lines(width: int) -> int:
    """24 of 368 lines, scaled to ``width`` and rounded to an even count (at least 2)."""
    return max(2, 2 * round(width * 24 / 368 / 2))


def make_mask(spec: MaskSpec, size) -> np.ndarray:
    """Binary sampling mask of shape ``(H, W)``.

    Cartesian kinds sample whole columns. The line budget is
    ``round(W / R)``; a centred block of ``center_lines`` columns is always
    sampled and the remaining budget goes to outer columns. The equispaced
    kind takes every ``len(outer) / needed``-th outer column starting at the
    first one; the random kind draws outer columns without replacement.
    ``random_2d`` applies the same rule to individual points with a centred
    ``center_lines x center_lines`` block.
    """
    H, W = size
    c = spec.center_lines if spec.center_lines is not None else default_center_lines(W)
    if c < 0:
        raise ValidationError("center_lines must be nonnegative")
    rng = np.random.default_rng(spec.seed)
    mask = np.zeros((H, W), dtype=np.float32)

    if spec.kind == "random_2d":
        budget = max(1, round(H * W / spec.acceleration))
        if c * c > budget or c > min(H, W):
            raise ValidationError(f"center block {c}x{c} exceeds the budget of {budget} points")
        r0, c0 = H // 2 - c // 2, W // 2 - c // 2
        mask[r0 : r0 + c, c0 : c0 + c] = 1
        outer = np.flatnonzero(mask.ravel() == 0)
        pick = rng.choice(outer, budget - c * c, replace=False)
        mask.ravel()[pick] = 1
        return mask

    budget = max(1, round(W / spec.acceleration))
    if c > budget:
        raise ValidationError(f"{c} center lines exceed the budget of {budget} lines at R={spec.acceleration}")
    cols = np.zeros(W, dtype=bool)
    c0 = W // 2 - c // 2
    cols[c0 : c0 + c] = True
    outer = np.flatnonzero(~cols)
    needed = budget - c
    if needed:
        if spec.kind == "cartesian_equispaced":
            pick = outer[(np.arange(needed) * len(outer)) // needed]
        else:
            pick = rng.choice(outer, needed, replace=False)
        cols[pick] = True
    mask[:, cols] = 1
    return mask


def realized_acceleration(mask: np.ndarray) -> float:
    return mask.size / float(np.count_nonzero(mask))


def simulate_acquisition(x_g: np.ndarray, csm: np.ndarray, mask: np.ndarray, noise_sigma: float, seed) -> np.ndarray:
    """``forward_A(x_g)`` plus circular complex Gaussian noise on sampled positions.

    The noise has ``E|n|^2 = noise_sigma^2``.
    """
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be nonnegative")
    img = to_channels(torch.as_tensor(np.asarray(x_g, dtype=np.complex128)))
    y = forward_A(img, torch.as_tensor(np.asarray(csm, dtype=np.complex128)), torch.as_tensor(mask)).numpy()
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        n = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + (noise_sigma / math.sqrt(2)) * n * (mask != 0)
    return y


def slice_seeds(root_seed: int, split: str, index: int) -> dict:
    children = np.random.SeedSequence([int(root_seed), SPLIT_CODES[split], int(index)]).spawn(4)
    return {k: int(s.generate_state(1)[0]) for k, s in zip(("phantom", "csm", "mask", "noise"), children)}


def generate_split(
    count: int,
    size,
    coils: int,
    mask_spec: MaskSpec,
    noise_sigma: float,
    root_seed: int,
    split: str = "train",
) -> dict:
    """Generate ``count`` slices; returns stacked arrays plus per-slice metadata."""
    if count < 1:
        raise ValidationError("count must be positive")
    xs, ss, ms, ys, meta = [], [], [], [], []
    for i in range(count):
        sd = slice_seeds(root_seed, split, i)
        x = make_phantom(random_phantom_spec(size, sd["phantom"]))
        S = make_csm(coils, size, sd["csm"])
        m = make_mask(MaskSpec(mask_spec.kind, mask_spec.acceleration, mask_spec.center_lines, sd["mask"]), size)
        # stored precision is complex64; simulate from the stored values
        x, S = x.astype(np.complex64), S.astype(np.complex64)
        y = simulate_acquisition(x, S, m, noise_sigma, sd["noise"]).astype(np.complex64)
        xs.append(x), ss.append(S), ms.append(m), ys.append(y)
        meta.append({"index": i, "seeds": sd, "acceleration": realized_acceleration(m)})
    return {
        "xgt": np.stack(xs),
        "csm": np.stack(ss),
        "mask": np.stack(ms),
        "y": np.stack(ys),
        "slices": meta,
    }


_ARRAYS = {"xgt": "<c8", "csm": "<c8", "mask": "<f4", "y": "<c8"}


def write_split(out_dir, data: dict, info: dict | None = None) -> Path:
    """Write arrays ``xgt, csm, mask, y`` and a manifest into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    N, H, W = data["xgt"].shape
    C = data["csm"].shape[1]
    expected = {"xgt": (N, H, W), "csm": (N, C, H, W), "mask": (N, H, W), "y": (N, C, H, W)}
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "count": N,
        "height": H,
        "width": W,
        "coils": C,
        "arrays": {},
        "slices": data.get("slices", []),
        "info": info or {},
    }
    for name, dtype in _ARRAYS.items():
        arr = np.asarray(data[name])
        if arr.shape != expected[name]:
            raise ValidationError(f"{name} has shape {arr.shape}, expected {expected[name]}")
        if not np.isfinite(arr).all():
            raise ValidationError(f"{name} contains non-finite values")
        fname = f"{name}.bin"
        np.ascontiguousarray(arr, dtype=dtype).tofile(out / fname)
        manifest["arrays"][name] = {"file": fname, "dtype": dtype, "shape": list(arr.shape)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def import_arrays(out_dir, xgt, csm, mask, y=None, noise_sigma: float = 0.0, seed: int = 0, info: dict | None = None) -> Path:
    """Write externally supplied arrays in the dataset format.

    ``y`` is simulated from the other arrays when omitted.
    """
    xgt = np.asarray(xgt, dtype=np.complex64)
    csm = np.asarray(csm, dtype=np.complex64)
    mask = np.asarray(mask, dtype=np.float32)
    if y is None:
        y = np.stack([simulate_acquisition(x, S, m, noise_sigma, seed + i) for i, (x, S, m) in enumerate(zip(xgt, csm, mask))])
    return write_split(out_dir, {"xgt": xgt, "csm": csm, "mask": mask, "y": np.asarray(y, dtype=np.complex64)}, info)


def read_split(path) -> dict:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.exists():
        raise FileNotFoundError(f"no dataset manifest at {mf}")
    manifest = json.loads(mf.read_text())
    if manifest.get("format") != FORMAT_NAME:
        raise ValidationError(f"{mf} is not a {FORMAT_NAME} manifest")
    if manifest.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported dataset version {manifest.get('version')}")
    out = {"manifest": manifest}
    for name, entry in manifest["arrays"].items():
        shape = tuple(entry["shape"])
        arr = np.fromfile(path / entry["file"], dtype=entry["dtype"])
        if arr.size != int(np.prod(shape)):
            raise ValidationError(f"{entry['file']} holds {arr.size} values, manifest says {shape}")
        out[name] = arr.reshape(shape)
    return out


def split_counts(count: int, ratio: Sequence[int] = (3, 1, 1)) -> tuple[int, int, int]:
    """Floor allocation by ``ratio``; the remainder goes to the training split."""
    total = sum(ratio)
    counts = [count * r // total for r in ratio]
    counts[0] += count - sum(counts)
    return tuple(counts)


def to_tensors(data: dict, index, dtype=torch.float32) -> tuple:
    """Batch ``(x_g, y, csm, mask)`` tensors for the given slice index or slice."""
    cdtype = torch.complex64 if dtype == torch.float32 else torch.complex128
    idx = [index] if isinstance(index, int) else index
    x_g = to_channels(torch.as_tensor(data["xgt"][idx]).to(cdtype))
    y = torch.as_tensor(data["y"][idx]).to(cdtype)
    csm = torch.as_tensor(data["csm"][idx]).to(cdtype)
    mask = torch.as_tensor(data["mask"][idx]).to(dtype)
    return x_g, y, csm, mask
