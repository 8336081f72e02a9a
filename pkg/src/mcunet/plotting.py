"""Figures: reconstruction grids and PSNR curves."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def error_map(recon_mag: np.ndarray, ref_mag: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(recon_mag, dtype=np.float64) - np.asarray(ref_mag, dtype=np.float64))


def recon_grid(ref_mag, zf_mag, recon_mag, path, title: str = "") -> Path:
    """Ground truth, zero-filled, reconstruction and error map side by side."""
    err = error_map(recon_mag, ref_mag)
    vmax = float(np.max(ref_mag)) or 1.0
    fig, axes = plt.subplots(1, 4, figsize=(10, 2.8))
    panels = [(ref_mag, "ground truth"), (zf_mag, "zero-filled"), (recon_mag, "reconstruction"), (err, "|error|")]
    for ax, (img, name) in zip(axes, panels):
        ax.imshow(img, cmap="gray" if name != "|error|" else "magma", vmin=0, vmax=vmax if name != "|error|" else None)
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def curve_points(records: list, key: str = "psnr") -> tuple[np.ndarray, np.ndarray]:
    xs = np.array([r["epoch"] for r in records if r.get(key) is not None], dtype=np.float64)
    ys = np.array([r[key] for r in records if r.get(key) is not None], dtype=np.float64)
    return xs, ys


def psnr_curve(records: list, path, baseline_key: str = "zf_psnr") -> Path:
    xs, ys = curve_points(records, "psnr")
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(xs, ys, marker="o", label="model")
    bx, by = curve_points(records, baseline_key)
    if by.size:
        ax.plot(bx, by, linestyle="--", color="gray", label="zero-filled")
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation PSNR (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
