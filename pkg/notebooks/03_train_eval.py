"""Train a small network on simulated data and compare with zero filling.

Uses the ``desk`` profile shrunk to a few minutes of CPU time. Outputs land
in ``notebook_run/`` under the current directory.
"""

from pathlib import Path

from mcunet import cli
from mcunet.checkpoint import load_checkpoint
from mcunet.config import resolve
from mcunet.simdata import read_split
from mcunet.train import evaluate, summarize

out = Path("notebook_run")
cfg = resolve("desk", overrides={"data": {"count": 30}, "train": {"epochs": 3}})

# %% dataset
info = cli.generate_dataset(cfg, out / "dataset")
print(info)

# %% training
_, result, _ = cli.train_run(cfg, out / "dataset", out / "run")
for rec in result.records:
    print(f"epoch {rec['epoch']}: loss {rec['loss']:.4f}, val PSNR {rec['psnr']:.2f} dB (zero-filled {rec['zf_psnr']:.2f})")

# %% held-out evaluation of the best checkpoint
model, _, _ = load_checkpoint(result.best_checkpoint)
summary = summarize(evaluate(model, read_split(out / "dataset" / "test")))
print(cli.summary_table([("zero-filled", {"psnr": summary["zf_psnr"], "ssim": summary["zf_ssim"]}), ("network", summary)]))
