"""Command-line entry point: ``python -m mcunet <command>``.

Exit codes: 0 success, 1 validation or configuration error, 2 runtime failure.
Relative output paths are resolved against ``$MCUNET_OUTPUT_ROOT`` (default:
the current directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as cfgmod
from .checkpoint import load_checkpoint, read_checkpoint
from .errors import ValidationError
from .flops import breakdown, count_flops, total_flops
from .metrics import magnitude
from .model import VARIANTS, MCUNet, count_parameters
from .simdata import generate_split, read_split, split_counts, write_split
from .train import evaluate, reconstruct, summarize, train, zero_filled

log = logging.getLogger("mcunet")

ENV_ROOT = "MCUNET_OUTPUT_ROOT"
ABLATIONS = VARIANTS + ("no_intermediate",)
SPLITS = ("train", "val", "test")


def _root() -> Path:
    return Path(os.environ.get(ENV_ROOT, "."))


def _out(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else _root() / p


def _overrides(args) -> dict:
    ov: dict = {}
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        if args.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {args.variant!r}; valid: {', '.join(VARIANTS)}")
        ov.setdefault("model", {})["variant"] = args.variant
    return ov


def _resolve(args) -> dict:
    return cfgmod.resolve(args.profile, args.config, _overrides(args))


def _dataset_geometry(cfg: dict, split_dir: Path) -> dict:
    mf = split_dir / "manifest.json"
    if not mf.exists():
        raise ValidationError(f"dataset not found: {mf}")
    manifest = json.loads(mf.read_text())
    for key in ("height", "width", "coils"):
        cfg["data"][key] = manifest[key]
    return manifest


def _write_jsonl(path: Path, records: list) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


# ---------------------------------------------------------------- generate


def generate_dataset(cfg: dict, out: Path) -> dict:
    d = cfg["data"]
    seed = cfgmod.derived_seeds(cfg["seed"])["data"]
    counts = split_counts(d["count"], d["split"])
    spec = cfgmod.mask_spec(cfg)
    report = {}
    for split, n in zip(SPLITS, counts):
        if n == 0:
            continue
        data = generate_split(n, (d["height"], d["width"]), d["coils"], spec, d["noise_sigma"], seed, split)
        write_split(out / split, data, {"split": split, "root_seed": seed, "config": cfg["data"]})
        report[split] = {"count": n, "acceleration": float(np.mean([s["acceleration"] for s in data["slices"]]))}
    cfgmod.dump(cfg, out / "config.yaml")
    return report


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    out = _out(args.out or cfg["output"]["dataset"])
    report = generate_dataset(cfg, out)
    for split, r in report.items():
        print(f"{split}: {r['count']} slices, realized acceleration {r['acceleration']:.3f}")
    return 0


# ---------------------------------------------------------------- train


def build_model(cfg: dict) -> MCUNet:
    torch.manual_seed(cfgmod.derived_seeds(cfg["seed"])["init"])
    # initial weights must not depend on the caller's default dtype
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float32)
    try:
        return MCUNet(cfgmod.model_config(cfg))
    finally:
        torch.set_default_dtype(prev)


def train_run(cfg: dict, data_dir: Path, out: Path):
    _dataset_geometry(cfg, data_dir / "train")
    train_data = read_split(data_dir / "train")
    val_dir = data_dir / "val"
    val_data = read_split(val_dir) if (val_dir / "manifest.json").exists() else None
    model = build_model(cfg)
    out.mkdir(parents=True, exist_ok=True)
    log_file = out / "metrics.jsonl"
    if log_file.exists():
        log_file.unlink()
    cfgmod.dump(cfg, out / "config.yaml")
    result = train(model, train_data, cfgmod.train_config(cfg), cfgmod.loss_weights(cfg), val_data, out)
    summary = {
        "final_loss": result.step_losses[-1],
        "steps": len(result.step_losses),
        "best_val_psnr": result.best_psnr,
        "parameters": count_parameters(model),
        "variant": cfg["model"]["variant"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return model, result, summary


def cmd_train(args) -> int:
    cfg = _resolve(args)
    data_dir = _out(args.data or cfg["output"]["dataset"])
    out = _out(args.out or cfg["output"]["run"])
    _, _, summary = train_run(cfg, data_dir, out)
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------- eval


def _fmt(stat: dict, digits: int) -> str:
    if stat["mean"] is None:
        return "n/a"
    if math.isinf(stat["mean"]):
        return "inf"
    return f"{stat['mean']:.{digits}f} ± {stat['std']:.{digits}f}"


def summary_table(rows: list) -> str:
    lines = ["| method | PSNR (dB) | SSIM |", "|---|---|---|"]
    for name, s in rows:
        lines.append(f"| {name} | {_fmt(s['psnr'], 4)} | {_fmt(s['ssim'], 4)} |")
    return "\n".join(lines) + "\n"


def _load_model(path: Path) -> MCUNet:
    model, _, _ = load_checkpoint(path)
    return model


def cmd_eval(args) -> int:
    ckpt = _out(args.checkpoint)
    data_dir = _out(args.data)
    out = _out(args.out)
    model = _load_model(ckpt)
    data = read_split(data_dir)
    mf = data["manifest"]
    c = model.config
    if (mf["height"], mf["width"], mf["coils"]) != (c.height, c.width, c.coils):
        raise ValidationError(
            f"checkpoint geometry {(c.height, c.width, c.coils)} does not match dataset {(mf['height'], mf['width'], mf['coils'])}"
        )
    records = evaluate(model, data)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "records.jsonl", records)
    s = summarize(records)
    zf = {"psnr": s["zf_psnr"], "ssim": s["zf_ssim"]}
    table = summary_table([("zero-filled", zf), (c.variant, {"psnr": s["psnr"], "ssim": s["ssim"]})])
    (out / "summary.md").write_text(table)
    (out / "summary.json").write_text(json.dumps(s, indent=2) + "\n")
    cfgmod.dump({"checkpoint": str(ckpt), "data": str(data_dir), "model": c.to_dict()}, out / "config.yaml")
    print(table, end="")
    return 0


# ---------------------------------------------------------------- reconstruct


def cmd_reconstruct(args) -> int:
    model = _load_model(_out(args.checkpoint))
    data = read_split(_out(args.data))
    out = _out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = data["xgt"].shape[0]
    idx = args.slices if args.slices else list(range(n))
    recs = np.stack([reconstruct(model, data, i) for i in idx])
    z = (recs[:, 0] + 1j * recs[:, 1]).astype(np.complex64)
    np.save(out / "recon.npy", z)
    cfgmod.dump({"checkpoint": str(args.checkpoint), "data": str(args.data), "slices": list(map(int, idx))}, out / "config.yaml")
    print(f"wrote {len(idx)} reconstructions to {out / 'recon.npy'}")
    return 0


# ---------------------------------------------------------------- ablate


def ablation_config(cfg: dict, name: str) -> dict:
    if name not in ABLATIONS:
        raise ValidationError(f"unknown variant {name!r}; valid: {', '.join(ABLATIONS)}")
    c = cfgmod._merge(cfg, {})
    if name == "no_intermediate":
        c["model"]["variant"] = "original"
        c["loss"]["intermediate"] = False
    else:
        c["model"]["variant"] = name
    return c


def run_ablation(cfg: dict, variants: list, data_dir: Path, out: Path) -> list:
    if len(variants) < 2:
        raise ValidationError("ablation needs at least two variants")
    for v in variants:
        ablation_config(cfg, v)
    if not (data_dir / "train" / "manifest.json").exists():
        generate_dataset(cfg, data_dir)
    eval_dir = data_dir / "test" if (data_dir / "test" / "manifest.json").exists() else data_dir / "val"
    test = read_split(eval_dir)
    rows = []
    for i, v in enumerate(variants):
        c = ablation_config(cfg, v)
        model, _, summary = train_run(c, data_dir, out / f"{i:02d}_{v}")
        best = _load_model(out / f"{i:02d}_{v}" / "best")
        s = summarize(evaluate(best, test))
        mc = best.config
        rows.append(
            {
                "variant": v,
                "psnr": s["psnr"]["mean"],
                "psnr_std": s["psnr"]["std"],
                "ssim": s["ssim"]["mean"],
                "ssim_std": s["ssim"]["std"],
                "gflops": count_flops(mc),
                "parameters": summary["parameters"],
                "zf_psnr": s["zf_psnr"]["mean"],
            }
        )
    return rows


def ablation_table(rows: list) -> str:
    lines = ["| variant | PSNR (dB) | SSIM | GFLOPs | parameters |", "|---|---|---|---|---|"]
    for r in rows:
        ssim = "n/a" if r["ssim"] is None else f"{r['ssim']:.4f}"
        lines.append(f"| {r['variant']} | {r['psnr']:.4f} | {ssim} | {r['gflops']:.6f} | {r['parameters']} |")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    out = _out(args.out or "ablation")
    data_dir = _out(args.data) if args.data else out / "dataset"
    rows = run_ablation(cfg, args.variants, data_dir, out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    table = ablation_table(rows)
    (out / "ablation.md").write_text(table)
    cfgmod.dump(cfg, out / "config.yaml")
    print(table, end="")
    return 0


# ---------------------------------------------------------------- flops


def flops_report(cfg: dict, ks=(2, 4, 6, 8, 10)) -> dict:
    mc = cfgmod.model_config(cfg)
    b = breakdown(mc)
    sweep = []
    for k in ks:
        kc = cfgmod.model_config(cfgmod._merge(cfg, {"model": {"K": k}}))
        sweep.append({"K": k, "flops": total_flops(kc), "gflops": count_flops(kc)})
    xs = np.array([s["K"] for s in sweep], dtype=np.float64)
    ys = np.array([s["flops"] for s in sweep], dtype=np.float64)
    fit = np.polyfit(xs, ys, 1)
    resid = ys - np.polyval(fit, xs)
    r2 = 1 - resid @ resid / ((ys - ys.mean()) @ (ys - ys.mean())) if len(ks) > 1 else 1.0
    return {
        "geometry": {"height": mc.height, "width": mc.width, "coils": mc.coils, "K": mc.K, "variant": mc.variant},
        "per_module_gflops": {k: v / 1e9 for k, v in b.items()},
        "per_coca_gflops": b["per_coca"] / 1e9,
        "total_gflops": count_flops(mc),
        "sweep": sweep,
        "r_squared": float(r2),
        "reference": reference_geometry(cfg),
    }


def reference_geometry(cfg: dict) -> dict:
    """Totals at a knee-scale geometry (640x368, 15 coils) for K=4 and K=10."""
    out = {}
    for k in (4, 10):
        c = cfgmod._merge(cfg, {"data": {"height": 640, "width": 368, "coils": 15}, "model": {"K": k}})
        out[f"K{k}_gflops"] = count_flops(cfgmod.model_config(c))
    out["ratio"] = out["K10_gflops"] / out["K4_gflops"]
    return out


def cmd_flops(args) -> int:
    ov = _overrides(args)
    geo = {k: v for k, v in (("height", args.height), ("width", args.width), ("coils", args.coils)) if v is not None}
    if geo:
        ov.setdefault("data", {}).update(geo)
    if args.K is not None:
        ov.setdefault("model", {})["K"] = args.K
    cfg = cfgmod.resolve(args.profile, args.config, ov)
    rep = flops_report(cfg)
    lines = [f"geometry: {rep['geometry']}"]
    for k, v in rep["per_module_gflops"].items():
        lines.append(f"  {k:<11s} {v:14.6f} GFLOPs")
    lines.append(f"total: {rep['total_gflops']:.6f} GFLOPs (per-COCA marginal {rep['per_coca_gflops']:.6f})")
    for s in rep["sweep"]:
        lines.append(f"  K={s['K']:<3d} {s['gflops']:.6f} GFLOPs")
    lines.append(f"K-sweep linear fit R^2 = {rep['r_squared']:.9f}")
    ref = rep["reference"]
    lines.append(f"640x368, 15 coils: K=4 {ref['K4_gflops']:.2f}, K=10 {ref['K10_gflops']:.2f} GFLOPs (ratio {ref['ratio']:.4f})")
    print("\n".join(lines))
    if args.out:
        out = _out(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "flops.json").write_text(json.dumps(rep, indent=2) + "\n")
        cfgmod.dump(cfg, out / "config.yaml")
    return 0


# ---------------------------------------------------------------- plot


def read_records(path: Path) -> list:
    if not path.exists():
        raise ValidationError(f"no metric log at {path}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def cmd_plot(args) -> int:
    from .plotting import curve_points, psnr_curve, recon_grid

    run = _out(args.run)
    records = read_records(run / "metrics.jsonl")
    if not records:
        raise ValidationError(f"{run / 'metrics.jsonl'} is empty")
    out = _out(args.out or run / "plots")
    out.mkdir(parents=True, exist_ok=True)
    psnr_curve(records, out / "psnr_curve.png")
    xs, ys = curve_points(records)
    (out / "psnr_curve.json").write_text(json.dumps({"epoch": xs.tolist(), "psnr": ys.tolist()}) + "\n")
    written = [out / "psnr_curve.png"]
    if args.data:
        model = _load_model(_out(args.checkpoint) if args.checkpoint else run / "best")
        data = read_split(_out(args.data))
        for i in args.slices or [0]:
            ref = np.abs(data["xgt"][i].astype(np.complex128))
            rec = reconstruct(model, data, i)
            rec_mag = np.hypot(rec[0], rec[1])
            written.append(recon_grid(ref, zero_filled(data, i), rec_mag, out / f"recon_slice{i:03d}.png", f"slice {i}"))
    cfgmod.dump({"run": str(run), "data": str(args.data), "slices": args.slices}, out / "config.yaml")
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcunet", description="Multi-prior collaborative unfolding network for multi-coil MRI")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, variant=True):
        sp.add_argument("--config", type=Path, help="YAML run configuration")
        sp.add_argument("--profile", choices=sorted(cfgmod.PROFILES))
        sp.add_argument("--seed", type=int)
        if variant:
            sp.add_argument("--variant")

    sp = sub.add_parser("generate", help="write a synthetic dataset")
    common(sp, variant=False)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train a model on a generated dataset")
    common(sp)
    sp.add_argument("--data")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on one dataset split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True, help="split directory, e.g. dataset/test")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("reconstruct", help="reconstruct slices with a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--slices", type=int, nargs="*")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("ablate", help="train and compare ablation variants")
    common(sp, variant=False)
    sp.add_argument("--variants", nargs="+", required=True, help=f"any of: {', '.join(ABLATIONS)}")
    sp.add_argument("--data")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("flops", help="analytic FLOP report")
    common(sp)
    sp.add_argument("--K", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--width", type=int)
    sp.add_argument("--coils", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_flops)

    sp = sub.add_parser("plot", help="PSNR curves and reconstruction grids")
    sp.add_argument("--run", required=True, help="training run directory holding metrics.jsonl")
    sp.add_argument("--data", help="split directory for reconstruction grids")
    sp.add_argument("--checkpoint", help="defaults to <run>/best")
    sp.add_argument("--slices", type=int, nargs="*")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 2
