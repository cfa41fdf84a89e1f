"""Command-line driver: ``xmvae <command> [--config FILE] [--set key=value ...]``.

Every command writes its outputs and the fully resolved ``config.txt`` into
the run directory named by ``out``. Rerunning with that file reproduces the
outputs byte for byte.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as C
from .errors import ConfigError, FormatError, NumericalError, ShapeError
from .hand import Camera, GeneratorConfig, default_skeleton, generate_dataset, mask_labels, read_dataset, write_dataset
from .latent import export_embeddings, interpolate, max_step_delta, walk_svg, write_walk
from .metrics import mean_epe, median_epe, pcf, pck, threshold_grid, write_curve, write_table
from .models import ModelSet, lipschitz_bound
from .training import (
    SemiSupConfig,
    TrainConfig,
    VariantConfig,
    evaluate,
    prepare,
    train,
    write_history,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_NUMERICAL = 5

logger = logging.getLogger("xmvae")


class UsageError(Exception):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise UsageError(msg)


def _train_config(cfg: dict) -> TrainConfig:
    try:
        hidden = tuple(int(h) for h in cfg["hidden"].split(",") if h.strip())
        return TrainConfig(
            epochs=cfg["epochs"], batch_size=cfg["batch"], lr=cfg["lr"], seed=cfg["seed"], beta=cfg["beta"],
            samples=cfg["samples"], latent_dim=cfg["latent_dim"], hidden=hidden, beta1=cfg["adam_beta1"],
            beta2=cfg["adam_beta2"], eps=cfg["adam_eps"], recon_mode=cfg["recon_mode"],
            handedness_mode=cfg["handedness_mode"], one_batch_per_pair=cfg["one_batch_per_pair"],
            mm_per_unit=cfg["mm_per_unit"], recon_units=cfg["recon_units"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _variant(cfg: dict, number: int | None = None) -> VariantConfig:
    _require(cfg["input"] in ("2d", "3d") and cfg["target"] in ("2d", "3d"), "input/target must be 2d or 3d")
    v = cfg["variant"] if number is None else number
    _require(v in (1, 2, 3, 4), f"variant must be 1-4, got {v}")
    return VariantConfig(v, cfg["input"], cfg["target"])


def _load_split(cfg: dict):
    """Training samples and held-out samples (the last ``holdout`` records of the dataset)."""
    _require(bool(cfg["dataset"]), "dataset path is required")
    samples = read_dataset(cfg["dataset"])
    h = cfg["holdout"]
    _require(0 <= h < len(samples), f"holdout {h} must be smaller than the dataset ({len(samples)} records)")
    return samples[: len(samples) - h], samples[len(samples) - h :]


def _run_dir(cfg: dict, command: str) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    C.write_config(out / "config.txt", command, cfg)
    return out


def cmd_generate(cfg: dict) -> None:
    _require(cfg["n"] >= 1, "n must be >= 1")
    _require(0.0 < cfg["label_fraction"] <= 1.0, "label_fraction must lie in (0, 1]")
    _require(0.0 <= cfg["dip_coupling"] <= 1.0, "dip_coupling must lie in [0, 1]")
    try:
        gen = GeneratorConfig(
            max_tilt=math.radians(cfg["max_tilt_deg"]),
            dip_coupling=cfg["dip_coupling"],
            left_fraction=cfg["left_fraction"],
            camera=Camera(focal=cfg["focal"], hand_distance=cfg["hand_distance"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    samples = generate_dataset(cfg["n"], cfg["seed"], cfg["label_fraction"], gen)
    out = _run_dir(cfg, "generate")
    write_dataset(out / "dataset.jsonl", samples)
    labeled = sum(s.labeled for s in samples)
    left = sum(s.handedness == "L" for s in samples)
    print(f"wrote {len(samples)} samples ({labeled} labeled, {left} left hands) to {out / 'dataset.jsonl'}")


def _fit(cfg: dict, v: VariantConfig, train_samples, held_samples, semi_fraction=None):
    tc = _train_config(cfg)
    if semi_fraction is not None:
        train_samples = mask_labels(train_samples, semi_fraction, cfg["seed"])
    data = prepare(train_samples, tc.handedness_mode)
    held = prepare(held_samples, tc.handedness_mode) if held_samples else None
    semi = SemiSupConfig(float(data.labeled.mean())) if not data.labeled.all() else None
    _require(data.labeled.any(), "no labeled training samples")
    return train(v, data, tc, semi=semi, heldout=held), held


def cmd_train(cfg: dict) -> None:
    v = _variant(cfg)
    tr, held = _load_split(cfg)
    out = _run_dir(cfg, "train")
    result, held_data = _fit(cfg, v, tr, held)
    result.models.save(out / "model.ckpt")
    write_history(out / "history.tsv", result.history)
    if held_data is not None:
        errs = evaluate(result.models, held_data, v.input, v.target, cfg["mm_per_unit"])
        print(f"held-out {v.input}->{v.target}: mean EPE {mean_epe(errs):.3f} mm, median {median_epe(errs):.3f} mm")
    print(f"wrote {out / 'model.ckpt'} and {out / 'history.tsv'}")


def cmd_eval(cfg: dict) -> None:
    _require(bool(cfg["checkpoint"]), "checkpoint path is required")
    _require(cfg["split"] in ("heldout", "train", "all"), "split must be heldout, train or all")
    models = ModelSet.load(cfg["checkpoint"])
    tr, held = _load_split(cfg)
    samples = {"heldout": held, "train": tr, "all": tr + held}[cfg["split"]]
    _require(len(samples) > 0, f"split {cfg['split']} is empty")
    src, dst = cfg["input"], cfg["target"]
    if src not in models.encoders or dst not in models.decoders:
        raise FormatError(f"checkpoint has no {src} encoder or no {dst} decoder")
    data = prepare(samples, cfg["handedness_mode"])
    errs = evaluate(models, data, src, dst, cfg["mm_per_unit"])
    try:
        grid = threshold_grid(cfg["thresholds"])
    except ValueError as exc:
        raise UsageError(f"bad thresholds: {exc}") from exc
    out = _run_dir(cfg, "eval")
    write_curve(out / "pck.csv", grid, pck(errs, grid), ("threshold_mm", "pck"))
    write_curve(out / "pcf.csv", grid, pcf(errs, grid), ("threshold_mm", "pcf"))
    mean_e, median_e = mean_epe(errs), median_epe(errs)
    (out / "metrics.txt").write_text(f"mean_epe={mean_e!r}\nmedian_epe={median_e!r}\nframes={len(errs)}\n")
    if cfg["embed_count"] > 0:
        sub = data.subset(np.arange(min(cfg["embed_count"], len(data))))
        export_embeddings(out / "embeddings.csv", models.encoders, sub.features, sub.handedness)
    print(f"{src}->{dst} on {cfg['split']} ({len(errs)} frames): mean EPE {mean_e:.3f} mm, median {median_e:.3f} mm")


def _variant_job(args):
    cfg, number, tr, held = args
    v = _variant(cfg, number)
    result, held_data = _fit(cfg, v, tr, held)
    row = {"variant": number}
    for src, label in (("2d", "2d_to_3d"), ("3d", "3d_to_3d")):
        if src in result.models.encoders and "3d" in result.models.decoders:
            e = evaluate(result.models, held_data, src, "3d", cfg["mm_per_unit"])
            row[f"{label}_mean"] = mean_epe(e)
            row[f"{label}_median"] = median_epe(e)
    return row, result


def _map(fn, jobs, n_workers):
    if n_workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_variants(cfg: dict) -> None:
    _require(cfg["jobs"] >= 1, "jobs must be >= 1")
    _variant(cfg)
    tr, held = _load_split(cfg)
    _require(len(held) > 0, "variants needs a held-out split (holdout > 0)")
    out = _run_dir(cfg, "variants")
    results = _map(_variant_job, [(cfg, k, tr, held) for k in (1, 2, 3, 4)], cfg["jobs"])
    rows = []
    for row, result in results:
        k = row["variant"]
        result.models.save(out / f"var{k}.ckpt")
        write_history(out / f"var{k}_history.tsv", result.history)
        rows.append(row)
    cols = ["variant", "2d_to_3d_mean", "2d_to_3d_median", "3d_to_3d_mean", "3d_to_3d_median"]
    write_table(out / "variants.csv", rows, cols)
    for r in rows:
        print(f"Var.{r['variant']}: 2D->3D mean {r['2d_to_3d_mean']:.3f} mm, median {r['2d_to_3d_median']:.3f} mm")


def _semisup_job(args):
    cfg, fraction, number, tr, held = args
    v = _variant(cfg, number)
    result, held_data = _fit(cfg, v, tr, held, semi_fraction=fraction)
    e = evaluate(result.models, held_data, v.input, v.target, cfg["mm_per_unit"])
    return median_epe(e)


def cmd_semisup(cfg: dict) -> None:
    _require(cfg["jobs"] >= 1, "jobs must be >= 1")
    try:
        fractions = [float(f) for f in cfg["fractions"].split(",") if f.strip()]
    except ValueError as exc:
        raise UsageError(f"bad fractions: {exc}") from exc
    _require(bool(fractions) and all(0.0 < f <= 1.0 for f in fractions), "fractions must lie in (0, 1]")
    tr, held = _load_split(cfg)
    _require(len(held) > 0, "semisup needs a held-out split (holdout > 0)")
    _require(all(s.labeled for s in tr), "semisup expects a fully labeled dataset; it masks labels itself")
    out = _run_dir(cfg, "semisup")
    jobs = [(cfg, f, k, tr, held) for f in fractions for k in (1, 3)]
    medians = _map(_semisup_job, jobs, cfg["jobs"])
    rows = []
    for n, f in enumerate(fractions):
        m1, m3 = medians[2 * n], medians[2 * n + 1]
        rows.append({"fraction": f, "var1_median_epe": m1, "var3_median_epe": m3, "improvement_ratio": m1 / m3})
        print(f"fraction {f}: Var.1 median {m1:.3f} mm, Var.3 semi-supervised {m3:.3f} mm")
    write_table(out / "semisup.csv", rows, ["fraction", "var1_median_epe", "var3_median_epe", "improvement_ratio"])


def cmd_walk(cfg: dict) -> None:
    _require(bool(cfg["checkpoint"]), "checkpoint path is required")
    _require(bool(cfg["dataset"]), "dataset path is required")
    _require(cfg["steps"] >= 2, "steps must be >= 2")
    models = ModelSet.load(cfg["checkpoint"])
    samples = read_dataset(cfg["dataset"])
    for key in ("index1", "index2"):
        _require(0 <= cfg[key] < len(samples), f"{key}={cfg[key]} out of range for {len(samples)} samples")
    if cfg["src"] not in models.encoders:
        raise FormatError(f"checkpoint has no {cfg['src']} encoder")
    data = prepare([samples[cfg["index1"]], samples[cfg["index2"]]], cfg["handedness_mode"])
    enc = models.encoders[cfg["src"]]
    walk = interpolate(
        enc, models.decoders, data.features[cfg["src"]][0], data.features[cfg["src"]][1], cfg["steps"],
        handedness=data.handedness, spherical=cfg["spherical"],
    )
    out = _run_dir(cfg, "walk")
    write_walk(out / "walk.csv", walk)
    step = float(np.linalg.norm(walk.z[1] - walk.z[0]))
    lines = [f"latent_step={step!r}"]
    for name, dec in sorted(models.decoders.items()):
        lines.append(f"{name}_lipschitz_bound={lipschitz_bound(dec)!r}")
        lines.append(f"{name}_max_step_delta={max_step_delta(walk, name)!r}")
    (out / "walk_report.txt").write_text("\n".join(lines) + "\n")
    if cfg["plot"] and "2d" in walk.decoded:
        (out / "walk.svg").write_text(walk_svg(walk, default_skeleton().bones()))
    print(f"wrote {len(walk)} walk steps to {out / 'walk.csv'}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "variants": cmd_variants,
    "semisup": cmd_semisup,
    "walk": cmd_walk,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xmvae", description="Cross-modal VAE for 2D->3D hand keypoint lifting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = C.resolve(args.command, args.config, args.set)
        COMMANDS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"xmvae: invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FormatError, ShapeError) as exc:
        print(f"xmvae: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as exc:
        print(f"xmvae: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"xmvae: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
