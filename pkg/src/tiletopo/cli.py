"""Command-line benchmark harness.

Subcommands cover metric evaluation between directories of tiles, model
comparison and ablation tables, paired-ratio sweeps, dataset splitting,
tiling and stitching of large images, toy training, an analytic-gradient
self-check, and serving the perceptual study.

Exit codes: 0 success, 1 invalid input or failed check, 2 internal error.
"""

import csv
import functools
import json
import random
import re
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from . import losses as lo
from . import metrics as me
from . import trainer as tr
from .image import read_png, stitch, write_png, TileGrid
from .validation import ConfigError

METRIC_ORDER = ("mse", "ssim", "essi")
ABLATION_LABELS = (
    "Full", "L1", "L1&GraStr", "L1&GraL1", "GraStr", "GraL1", "GraStr&GraL1",
)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1)
        except SystemExit:
            raise
        except Exception as exc:
            click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
            raise SystemExit(2)
    return wrapper


@click.group()
def main():
    """Quality assessment and training tools for generated map tiles."""


def _pair_metrics(gen_dir, truth_dir, cfg):
    pairs = ds.scan_pairs(gen_dir, truth_dir)
    loaded = [(rs.stem, read_png(rs), read_png(mp)) for rs, mp in pairs]
    return me.evaluate_pair_set(loaded, cfg)


@main.command("metrics")
@click.option("--generated", "generated_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--truth", "truth_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--mode", type=click.Choice(["luminance", "rgbmean", "both"]),
              default="both", show_default=True)
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@_guarded
def cmd_metrics(generated_dir, truth_dir, mode, out_csv):
    """Score generated tiles against ground truth, matched by filename."""
    report = _pair_metrics(generated_dir, truth_dir, me.MetricConfig())
    modes = ("luminance", "rgbmean") if mode == "both" else (mode,)
    rows = []
    for rec in report.per_tile:
        if rec.mode not in modes:
            continue
        for metric in METRIC_ORDER:
            rows.append((rec.tile_id, metric, rec.mode, getattr(rec, metric)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    for m in modes:
        for metric in METRIC_ORDER:
            rows.append(("aggregate", metric, m, report.aggregates[m][metric]))
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "metric", "mode", "value"])
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} rows to {out_csv}")


def _load_config(path):
    try:
        return json.loads(Path(path).read_text()), Path(path).parent
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path}: invalid JSON ({exc})") from exc


@main.command("compare")
@click.option("--config", "config_json", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@_guarded
def cmd_compare(config_json, out_csv):
    """Tabulate metrics for several models against one truth directory.

    Config schema: {"dataset": name, "truth_dir": path, "models":
    [{"name": ..., "dir": ...}]}; paths are relative to the config file.
    """
    doc, base = _load_config(config_json)
    for key in ("truth_dir", "models"):
        if key not in doc:
            raise ValueError(f"config {config_json}: missing key {key!r}")
    dataset_name = doc.get("dataset", "dataset")
    truth_dir = base / doc["truth_dir"]
    for model in doc["models"]:
        if "name" not in model or "dir" not in model:
            raise ValueError(
                f"config {config_json}: every model entry needs 'name' and 'dir'")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "dataset", "metric", "rgbmean", "luminance"])
        for model in doc["models"]:
            report = _pair_metrics(base / model["dir"], truth_dir, me.MetricConfig())
            for metric in METRIC_ORDER:
                writer.writerow([
                    model["name"], dataset_name, metric,
                    report.aggregates["rgbmean"][metric],
                    report.aggregates["luminance"][metric],
                ])
    click.echo(f"wrote comparison table to {out_csv}")


@main.command("ablation")
@click.option("--config", "config_json", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@_guarded
def cmd_ablation(config_json, out_csv):
    """Tabulate metrics per loss-combination output directory.

    Config schema: {"truth_dir": path, "combos": [{"label": one of the
    canonical loss combinations, "dir": path}]}. Rows appear in canonical
    order: Full, L1, L1&GraStr, L1&GraL1, GraStr, GraL1, GraStr&GraL1.
    """
    doc, base = _load_config(config_json)
    for key in ("truth_dir", "combos"):
        if key not in doc:
            raise ValueError(f"config {config_json}: missing key {key!r}")
    by_label = {}
    for combo in doc["combos"]:
        label = combo.get("label")
        if label not in ABLATION_LABELS:
            raise ValueError(
                f"unknown loss combination {label!r}; expected one of "
                f"{', '.join(ABLATION_LABELS)}"
            )
        if "dir" not in combo:
            raise ValueError(f"config {config_json}: combo {label!r} needs a 'dir'")
        by_label[label] = combo["dir"]
    truth_dir = base / doc["truth_dir"]
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["losses", "metric", "rgbmean", "luminance"])
        for label in ABLATION_LABELS:
            if label not in by_label:
                continue
            report = _pair_metrics(base / by_label[label], truth_dir, me.MetricConfig())
            for metric in METRIC_ORDER:
                writer.writerow([
                    label, metric,
                    report.aggregates["rgbmean"][metric],
                    report.aggregates["luminance"][metric],
                ])
    click.echo(f"wrote ablation table to {out_csv}")


@main.command("split")
@click.option("--rs-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--map-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--ratio", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--test-fraction", type=float, default=0.2, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_guarded
def cmd_split(rs_dir, map_dir, ratio, seed, test_fraction, out_path):
    """Build a train/test manifest from two directories of paired tiles."""
    pairs = ds.scan_pairs(rs_dir, map_dir)
    out = Path(out_path)
    rel = [(
        Path(rs).resolve().relative_to(out.resolve().parent).as_posix()
        if Path(rs).resolve().is_relative_to(out.resolve().parent) else str(rs),
        Path(mp).resolve().relative_to(out.resolve().parent).as_posix()
        if Path(mp).resolve().is_relative_to(out.resolve().parent) else str(mp),
    ) for rs, mp in pairs]
    cfg = ds.SplitConfig(paired_ratio=ratio, seed=seed, test_fraction=test_fraction)
    manifest = ds.split(rel, cfg)
    ds.save_manifest(manifest, out)
    train = manifest.by_subset("train")
    counts = {g: len([r for r in train if r.group == g]) for g in ds.GROUPS}
    click.echo(
        f"wrote {out_path}: {counts['paired']} paired, "
        f"{counts['unpaired_rs']} unpaired_rs, {counts['unpaired_map']} unpaired_map "
        f"train records; {len(manifest.by_subset('test'))} test"
    )


@main.command("tile")
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, required=True)
@click.option("--work-size", type=int, default=256, show_default=True,
              help="Per-side tile resolution after resize; 0 keeps native size.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@_guarded
def cmd_tile(image_path, k, work_size, out_dir):
    """Cut a large image into a k-by-k grid of PNG tiles."""
    grid = ds.tile_pipeline(image_path, k, work_size or None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(grid.rows):
        for j in range(grid.cols):
            write_png(grid.tile(i, j), out / f"tile_r{i:02d}_c{j:02d}.png")
    click.echo(f"wrote {grid.rows * grid.cols} tiles to {out_dir}")


_TILE_NAME = re.compile(r"^tile_r(\d+)_c(\d+)\.png$")


@main.command("stitch")
@click.option("--in-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_guarded
def cmd_stitch(in_dir, out_path):
    """Reassemble tiles written by the tile command into one PNG."""
    found = {}
    for p in sorted(Path(in_dir).glob("*.png")):
        m = _TILE_NAME.match(p.name)
        if m:
            found[(int(m.group(1)), int(m.group(2)))] = p
    if not found:
        raise ValueError(f"no tile_rXX_cXX.png files in {in_dir}")
    rows = 1 + max(r for r, _ in found)
    cols = 1 + max(c for _, c in found)
    missing = [(r, c) for r in range(rows) for c in range(cols) if (r, c) not in found]
    if missing:
        raise ValueError(f"incomplete {rows}x{cols} grid; missing tiles: {missing}")
    tiles = [read_png(found[(r, c)]) for r in range(rows) for c in range(cols)]
    write_png(stitch(TileGrid(rows, cols, tiles)), out_path)
    click.echo(f"stitched {rows}x{cols} tiles into {out_path}")


@main.command("train")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--freeze-epoch", type=int, default=None,
              help="Epoch index from which cycle updates to first-step generators stop; defaults to 3/4 of epochs.")
@click.option("--lr", "base_lr", type=float, default=2e-4, show_default=True)
@click.option("--decay-start", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda-ctn", type=float, default=10.0, show_default=True)
@click.option("--lambda-adv", type=float, default=1.0, show_default=True)
@click.option("--lambda-idt", type=float, default=0.1, show_default=True)
@click.option("--lambda-l1u", type=float, default=1.0, show_default=True)
@click.option("--lambda-l1", type=float, default=10.0, show_default=True)
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None)
@click.option("--checkpoint", "ckpt_path", type=click.Path(dir_okay=False), default=None)
@_guarded
def cmd_train(manifest_path, epochs, freeze_epoch, base_lr, decay_start, seed,
              lambda_ctn, lambda_adv, lambda_idt, lambda_l1u, lambda_l1,
              log_path, ckpt_path):
    """Train the toy model bundle on a manifest of PNG tiles."""
    if freeze_epoch is None:
        freeze_epoch = max(1, (3 * epochs) // 4)
    sched = tr.TrainingSchedule(
        epochs=epochs, freeze_epoch=freeze_epoch, base_lr=base_lr,
        decay_start=decay_start)
    weights = lo.LossWeights(
        lambda_ctn=lambda_ctn, lambda_adv=lambda_adv, lambda_idt=lambda_idt,
        lambda_l1u=lambda_l1u, lambda_l1=lambda_l1)
    models = tr.ModelBundle.toy()
    log = tr.train(manifest_path, models, weights, sched, seed, log_path=log_path)
    if ckpt_path:
        tr.save_checkpoint(models, ckpt_path)
    first = [e["total"] for e in log if e["epoch"] == 0]
    last = [e["total"] for e in log if e["epoch"] == epochs - 1]
    click.echo(
        f"trained {epochs} epochs, {len(log)} steps; mean total "
        f"{np.mean(first):.6g} -> {np.mean(last):.6g}"
    )


@main.command("ratio-sweep")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Fully paired source manifest (e.g. produced with --ratio 1.0).")
@click.option("--ratios", required=True,
              help="Comma-separated paired ratios, e.g. 0.1,0.5,1.0.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--test-fraction", type=float, default=0.2, show_default=True)
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@_guarded
def cmd_ratio_sweep(manifest_path, ratios, seed, test_fraction, epochs, out_csv):
    """Re-split, retrain and evaluate at several paired ratios.

    Emits one row per ratio with metric values on the test subset and
    each metric's rate of change relative to the first ratio.
    """
    try:
        ratio_values = [float(r) for r in ratios.split(",") if r.strip()]
    except ValueError as exc:
        raise ValueError(f"bad --ratios value {ratios!r}") from exc
    if not ratio_values:
        raise ValueError("no ratios given")
    source = ds.load_manifest(manifest_path)
    unpaired = [r.id for r in source.records if r.group != "paired"]
    if unpaired:
        raise ValueError(
            f"ratio sweep needs a fully paired source manifest; "
            f"unpaired records: {unpaired[:5]}"
        )
    pairs = [(r.rs_path, r.map_path) for r in source.records]
    loader = tr.manifest_image_loader(manifest_path)

    results = []
    for ratio in ratio_values:
        cfg = ds.SplitConfig(paired_ratio=ratio, seed=seed, test_fraction=test_fraction)
        manifest = ds.split(pairs, cfg)
        model = tr.MapTileTranslator(epochs=epochs, seed=seed)
        model.fit(manifest, image_loader=loader)
        test_pairs = []
        for rec in manifest.by_subset("test"):
            rs, mp = loader(rec)
            gen = model.transform([rs])[0]
            test_pairs.append((rec.id, gen, mp))
        report = me.evaluate_pair_set(test_pairs)
        agg = report.aggregates["luminance"]
        results.append((ratio, agg["mse"], agg["ssim"], agg["essi"]))

    base = results[0]
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "ratio", "mse", "ssim", "essi", "mse_rate", "ssim_rate", "essi_rate",
        ])
        for ratio, v_mse, v_ssim, v_essi in results:
            rates = [
                (v - b) / abs(b) if b else 0.0
                for v, b in ((v_mse, base[1]), (v_ssim, base[2]), (v_essi, base[3]))
            ]
            writer.writerow([ratio, v_mse, v_ssim, v_essi, *rates])
    click.echo(f"wrote ratio sweep over {len(results)} ratios to {out_csv}")


@main.command("gradcheck")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--pairs", "n_pairs", type=int, default=20, show_default=True)
@click.option("--size", type=int, default=8, show_default=True)
@click.option("--h", "h", type=float, default=1e-3, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@_guarded
def cmd_gradcheck(seed, n_pairs, size, h, tolerance):
    """Verify analytic loss gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    weights = lo.LossWeights()
    worst = {}
    for loss_id in lo.LOSS_IDS:
        worst[loss_id] = 0.0
        for _ in range(n_pairs):
            gen, truth = lo.sample_smooth_pair(rng, (size, size), h=h)
            err = lo.finite_difference_check(loss_id, gen, truth, weights, h=h)
            worst[loss_id] = max(worst[loss_id], err)
    failed = {k: v for k, v in worst.items() if v >= tolerance}
    for loss_id in lo.LOSS_IDS:
        click.echo(f"{loss_id}: max relative error {worst[loss_id]:.3e}")
    if failed:
        click.echo(f"gradient check FAILED for: {', '.join(sorted(failed))}", err=True)
        raise SystemExit(1)
    click.echo(f"all gradients within {tolerance:g}")


@main.command("serve")
@click.option("--study", "study_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--votes", "votes_path", required=True, type=click.Path(dir_okay=False))
@click.option("--frontend", "frontend_dir", type=click.Path(file_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@_guarded
def cmd_serve(study_path, votes_path, frontend_dir, host, port):
    """Serve the perceptual study API (and optionally the built UI)."""
    import uvicorn

    from .service import create_app, load_study

    study = load_study(study_path)
    app = create_app(
        study, votes_path, frontend_dir=frontend_dir,
        images_dir=Path(study_path).parent)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
