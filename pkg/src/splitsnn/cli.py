"""Batch experiment CLI.

Subcommands: ``generate-dataset``, ``train``, ``eval-sweep``, ``ber``,
``energy``. Every command takes ``--config`` (JSON), an optional
``--seed`` override, and ``--out``; outputs are CSV (comma separator,
header row, '.' decimal, LF line endings) and JSON summaries. Identical
config + seed reproduces byte-identical CSVs. On failure the command
prints a machine-readable error JSON to stderr and exits nonzero.
"""

import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import channel as ch
from . import energy as en
from . import events
from .config import load_config
from .pipeline import (SplitPipeline, evaluate_accuracy, evaluate_logits,
                       train_pipeline)
from .rng import derive_rng


def _fmt(value) -> str:
    """Stable scalar formatting for CSV cells."""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fail(exc):
    error = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(error), err=True)
    sys.exit(1)


def _build_pipeline(cfg) -> SplitPipeline:
    return SplitPipeline(cfg.encoder, cfg.decoder, cfg.lif, cfg.surrogate,
                         derive_rng(cfg.seed, "init"))


def _sweep_link(cfg, sigma2g: float):
    base = cfg.channel_eval
    variance = sigma2g / base.pointing_sensitivity
    return replace(base, pointing_variance=variance)


_config_opt = click.option(
    "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="experiment config JSON")
_seed_opt = click.option("--seed", type=int, default=None,
                         help="override the config master seed")
_out_opt = click.option("--out", "out_dir", default="runs",
                        type=click.Path(file_okay=False),
                        help="output directory")


@click.group()
def main():
    """Spiking split computing over an optical link: experiment harness."""


@main.command("generate-dataset")
@_config_opt
@_seed_opt
@_out_opt
def cmd_generate_dataset(config_path, seed, out_dir):
    """Synthesize the labeled event dataset with a deterministic split."""
    try:
        cfg = load_config(config_path, seed)
        dataset = events.make_dataset(cfg.classes, cfg.per_class, cfg.dvs,
                                      cfg.seed)
        out = Path(out_dir) / "dataset"
        index_path = events.save_dataset(dataset, out)
        click.echo(f"wrote {dataset.events.shape[0]} sequences to {out} "
                   f"(index: {index_path})")
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _fail(exc)


@main.command("train")
@_config_opt
@_seed_opt
@_out_opt
@click.option("--data", "data_dir", default=None,
              type=click.Path(file_okay=False),
              help="dataset directory (default: <out>/dataset)")
def cmd_train(config_path, seed, out_dir, data_dir):
    """Train the pipeline end-to-end across the randomized channel."""
    try:
        cfg = load_config(config_path, seed)
        data_dir = Path(data_dir) if data_dir else Path(out_dir) / "dataset"
        if not (data_dir / "index.json").exists():
            raise FileNotFoundError(
                f"dataset not found at {data_dir}; run generate-dataset first")
        dataset = events.load_dataset(data_dir)
        train_x, train_y = dataset.subset("train")
        eval_x, eval_y = dataset.subset("eval")
        pipeline = _build_pipeline(cfg)
        history = train_pipeline(
            pipeline, train_x.astype(np.float64), train_y,
            eval_x.astype(np.float64), eval_y,
            cfg.training, cfg.channel_train, cfg.channel_eval, cfg.seed,
            log=click.echo)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pipeline.save(out / "checkpoint", meta={"config_hash": cfg.hash,
                                                "seed": cfg.seed})
        _write_csv(out / "history.csv",
                   ["epoch", "train_loss", "train_accuracy", "eval_accuracy"],
                   [(e, history.epoch_losses[e],
                     history.epoch_train_accuracy[e],
                     history.epoch_eval_accuracy[e])
                    for e in range(len(history.epoch_losses))])
        _write_json(out / "record.json", {
            "config_hash": cfg.hash,
            "seed": cfg.seed,
            "best_epoch": history.best_epoch,
            "best_eval_accuracy": history.best_eval_accuracy,
            "epoch_losses": history.epoch_losses,
            "epoch_eval_accuracy": history.epoch_eval_accuracy,
            "wall_clock_seconds": history.wall_clock_seconds,
        })
        click.echo(f"best eval accuracy {history.best_eval_accuracy:.3f} "
                   f"(epoch {history.best_epoch}); checkpoint in {out}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("eval-sweep")
@_config_opt
@_seed_opt
@_out_opt
@click.option("--checkpoint", "checkpoint_stem", required=True,
              help="checkpoint stem (path without .bin/.json)")
def cmd_eval_sweep(config_path, seed, out_dir, checkpoint_stem):
    """Accuracy vs normalized pointing-error variance, over seeds."""
    try:
        cfg = load_config(config_path, seed)
        pipeline = _build_pipeline(cfg)
        pipeline.load(checkpoint_stem)
        dataset = events.make_dataset(cfg.classes, cfg.per_class, cfg.dvs,
                                      cfg.seed)
        eval_x, eval_y = dataset.subset("eval")
        eval_x = eval_x.astype(np.float64)
        rows = []
        for gi, sigma2g in enumerate(cfg.sigma2g_grid):
            link = _sweep_link(cfg, sigma2g)
            for trial in range(cfg.eval_seeds):
                rng = derive_rng(cfg.seed, "eval-sweep", gi, trial)
                acc = evaluate_accuracy(
                    pipeline, eval_x, eval_y, link, rng,
                    receive_mode=cfg.eval_mode,
                    batch_size=cfg.training.batch_size)
                rows.append((sigma2g, trial, cfg.eval_mode, acc,
                             eval_x.shape[0]))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "eval_sweep.csv",
                   ["sigma2g", "seed", "mode", "accuracy", "n_samples"],
                   rows)
        click.echo(f"wrote {len(rows)} rows to {out / 'eval_sweep.csv'}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("ber")
@_config_opt
@_seed_opt
@_out_opt
def cmd_ber(config_path, seed, out_dir):
    """Monte-Carlo bit error rate over the configured grids."""
    try:
        cfg = load_config(config_path, seed)
        rows = []
        for gi, sigma2g in enumerate(cfg.ber_sigma2g_grid):
            link = _sweep_link(cfg, sigma2g)
            rate = ch.estimate_ber(link, cfg.ber_n_bits,
                                   derive_rng(cfg.seed, "ber", "fading", gi))
            rows.append(("sigma2g", sigma2g, rate, cfg.ber_n_bits))
        for gi, floor in enumerate(cfg.ber_noise_floor_grid):
            link = replace(cfg.channel_eval, noise_floor=floor)
            rate = ch.estimate_ber(link, cfg.ber_n_bits,
                                   derive_rng(cfg.seed, "ber", "noise", gi))
            rows.append(("noise_floor", floor, rate, cfg.ber_n_bits))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "ber.csv", ["sweep", "value", "ber", "n_bits"],
                   rows)
        click.echo(f"wrote {len(rows)} rows to {out / 'ber.csv'}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("energy")
@_config_opt
@_seed_opt
@_out_opt
@click.option("--checkpoint", "checkpoint_stem", required=True,
              help="checkpoint stem (path without .bin/.json)")
def cmd_energy(config_path, seed, out_dir, checkpoint_stem):
    """Event-driven operation counts and energy over the eval set."""
    try:
        cfg = load_config(config_path, seed)
        pipeline = _build_pipeline(cfg)
        pipeline.load(checkpoint_stem)
        dataset = events.make_dataset(cfg.classes, cfg.per_class, cfg.dvs,
                                      cfg.seed)
        eval_x, _ = dataset.subset("eval")
        recorder = en.SpikeRecorder()
        rng = derive_rng(cfg.seed, "energy")
        import splitsnn.autodiff as ad
        with ad.no_grad():
            for start in range(0, eval_x.shape[0], cfg.training.batch_size):
                frames = eval_x[start: start + cfg.training.batch_size]
                pipeline.forward_logits(
                    frames.astype(np.float64), cfg.channel_eval, rng,
                    receive_mode="hard", training=False, recorder=recorder)
        report = en.EnergyReport()
        specs = pipeline.dense_layer_specs()
        report.add_stage("encoder", recorder, specs, recorder.n_inferences)
        report.add_stage("decoder", recorder, specs, recorder.n_inferences)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for st in report.stages:
            for category, count in st.spiking.scaled(1.0).items():
                per_op = getattr(report.table, _TABLE_FIELD[category])
                rows.append((st.name, category, count, per_op,
                             count * per_op))
        _write_csv(out / "energy.csv",
                   ["stage", "op_category", "count", "pj_per_op", "total_pj"],
                   rows)
        _write_json(out / "energy.json", report.as_dict())
        for st in report.stages:
            click.echo(
                f"{st.name}: spiking "
                f"{en.format_energy(st.spiking_pj_per_inference)} per "
                f"inference vs dense "
                f"{en.format_energy(st.dense_pj_per_inference)} "
                f"(mean spike rate {st.mean_spike_rate:.3f})")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


_TABLE_FIELD = {
    "accumulates": "accumulate",
    "macs": "mac",
    "comparisons": "comparison",
    "random_draws": "random_draw",
    "memory_reads": "memory_read",
    "memory_writes": "memory_write",
}


if __name__ == "__main__":
    main()
