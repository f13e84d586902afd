"""Command-line pipeline: train, sample, eval, and the budget sweep.

Configuration lives in a line-oriented INI file (key = value under
[sections]); every output artifact carries the master seed, a hash of the
config file, and the format version so runs can be traced and reproduced.
"""

import argparse
import configparser
import hashlib
import os
import sys

import numpy as np

from . import data_io, metrics, samplers, trainer
from .data_io import derived_rng
from .predictor import init_predictor
from .samplers import SAMPLER_TAGS, SamplerKind, TrainedModel, RegimeMismatchError

__all__ = ["main", "ConfigError", "load_config", "config_hash"]

_REQUIRED = object()


class ConfigError(ValueError):
    """Bad or missing configuration; message carries section and field."""


def load_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    return cfg


def config_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _get(cfg, section, key, cast=str, default=_REQUIRED):
    try:
        raw = cfg.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        if default is _REQUIRED:
            raise ConfigError(f"[{section}] {key}: required key is missing")
        return default
    try:
        return cast(raw.strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from exc


def _int_list(raw: str) -> list:
    return [int(x) for x in raw.split(",") if x.strip()]


def _str_list(raw: str) -> list:
    return [x.strip() for x in raw.split(",") if x.strip()]


def _int_pair(raw: str) -> tuple:
    parts = _int_list(raw)
    if len(parts) != 2:
        raise ValueError("expected two comma-separated integers")
    return tuple(parts)


def _optional_float(raw: str):
    return None if raw.lower() in ("none", "off") else float(raw)


def _build_dataset(cfg, seed: int, purpose: str, n_override=None) -> data_io.Dataset:
    kind = _get(cfg, "dataset", "kind")
    rng = derived_rng(seed, "dataset", purpose)
    if kind == "idx":
        images = _get(cfg, "dataset", "images")
        labels = _get(cfg, "dataset", "labels", default=None)
        ds = data_io.read_idx(images, labels, downsample=_get(cfg, "dataset", "downsample", int, 1))
        if n_override is not None and n_override < ds.n:
            idx = rng.choice(ds.n, size=n_override, replace=False)
            ds = data_io.Dataset(
                samples=ds.samples[idx],
                scaling=ds.scaling,
                labels=None if ds.labels is None else ds.labels[idx],
                image_shape=ds.image_shape,
            )
        return ds
    n = n_override if n_override is not None else _get(cfg, "dataset", "n", int, 4096)
    return data_io.gen_synthetic(kind, n, rng)


def _train_config(cfg, seed: int) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        regime=_get(cfg, "train", "regime", str, trainer.REGIME_GPFN),
        T=_get(cfg, "train", "t", int, 20),
        shift=_get(cfg, "train", "shift", float, 0.008),
        sigma1=_get(cfg, "train", "sigma1", float, 0.001),
        epochs=_get(cfg, "train", "epochs", int, 30),
        batch_size=_get(cfg, "train", "batch_size", int, 128),
        lr=_get(cfg, "train", "lr", float, 2e-4),
        weight_decay=_get(cfg, "train", "weight_decay", float, 0.01),
        ema_decay=_get(cfg, "train", "ema_decay", float, 0.999),
        clip_norm=_get(cfg, "train", "clip_norm", _optional_float, 1.0),
        seed=seed,
    )


def _model_from_checkpoint(path) -> TrainedModel:
    ckpt = data_io.read_checkpoint(path)
    return TrainedModel(
        net=ckpt.to_net(use_ema=True),
        regime=ckpt.regime,
        shift=ckpt.shift,
        sigma1=ckpt.sigma1,
    )


def _train_extractor(cfg, dataset: data_io.Dataset, seed: int) -> metrics.FeatureExtractor:
    if dataset.labels is None:
        raise ConfigError("[dataset] kind: labeled data is required to train the extractor")
    default_width = 256 if dataset.image_shape else 32
    return metrics.train_feature_extractor(
        dataset.samples,
        dataset.labels,
        feat_width=_get(cfg, "eval", "feature_width", int, default_width),
        hidden=(_get(cfg, "eval", "extractor_hidden", int, 64),),
        epochs=_get(cfg, "eval", "extractor_epochs", int, 120),
        lr=_get(cfg, "eval", "extractor_lr", float, 3e-3),
        min_accuracy=_get(cfg, "eval", "min_accuracy", float, 0.90),
        rng=derived_rng(seed, "extractor"),
    )


def _eval_report(cfg, real, gen, extractor, nfe, sampler, seed) -> metrics.MetricsReport:
    return metrics.compute_report(
        real,
        gen,
        extractor,
        nfe=nfe,
        sampler=sampler,
        rng=derived_rng(seed, "eval"),
        n_proj=_get(cfg, "eval", "n_proj", int, 128),
        k_pr=_get(cfg, "eval", "k_precision_recall", int, 3),
        k_dc=_get(cfg, "eval", "k_density_coverage", int, 5),
        n_pairs=_get(cfg, "eval", "n_pairs", int, 500),
    )


def _provenance(seed: int, digest: str) -> list:
    return [f"# seed={seed}", f"# config_hash={digest}", f"# format_version={data_io.FORMAT_VERSION}"]


def _read_metrics_csv(path) -> tuple:
    """Returns (comment lines, header row or None, data rows)."""
    if not os.path.exists(path):
        return [], None, []
    comments, header, rows = [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line)
            elif header is None:
                header = line
            else:
                rows.append(line)
    return comments, header, rows


def _write_metrics_csv(path, comments, rows) -> None:
    text = "\n".join([*comments, ",".join(metrics.METRICS_CSV_HEADER), *rows]) + "\n"
    data_io._atomic_write(path, text.encode())


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else _get(cfg, "run", "seed", int, 0)
    digest = config_hash(args.config)
    tc = _train_config(cfg, seed)
    if tc.epochs < 1:
        raise ConfigError("[train] epochs: must be >= 1 for a training run")
    dataset = _build_dataset(cfg, seed, "train")
    hidden = tuple(_get(cfg, "model", "hidden", _int_list, [128, 128]))
    time_dim = _get(cfg, "model", "time_dim", int, 16)
    net = init_predictor(dataset.dim, hidden=hidden, time_dim=time_dim, rng=derived_rng(seed, "init"))
    result = trainer.train(tc, dataset.samples, net, rng=derived_rng(seed, "train"))

    os.makedirs(args.out, exist_ok=True)
    ckpt = data_io.Checkpoint.from_nets(
        result.net, result.ema, tc.regime, tc.T, tc.shift, tc.sigma1, result.steps, seed
    )
    ckpt_path = os.path.join(args.out, f"checkpoint_{tc.regime}.bin")
    data_io.write_checkpoint(ckpt_path, ckpt)
    loss_path = os.path.join(args.out, f"loss_{tc.regime}.csv")
    lines = [*_provenance(seed, digest), "epoch,mean_loss"]
    lines += [f"{e},{l:.10g}" for e, l in enumerate(result.epoch_losses)]
    data_io._atomic_write(loss_path, ("\n".join(lines) + "\n").encode())
    print(
        f"trained regime={tc.regime} steps={result.steps} "
        f"final_loss={result.epoch_losses[-1]:.6g} -> {ckpt_path}"
    )
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else _get(cfg, "run", "seed", int, 0)
    digest = config_hash(args.config)
    sampler = args.sampler or _get(cfg, "sample", "sampler")
    nfe = args.nfe or _get(cfg, "sample", "nfe", int)
    n_samples = _get(cfg, "sample", "n_samples", int, 2000)
    model = _model_from_checkpoint(args.checkpoint)
    kind = SamplerKind(tag=sampler, nfe=nfe)
    out = samplers.generate(kind, model, n_samples, derived_rng(seed, "sample", sampler, nfe))

    shape = _get(cfg, "sample", "image_shape", _int_pair, None)
    if shape is not None:
        out = metrics.SampleSet(data=out.data, image_shape=shape)
    os.makedirs(args.out, exist_ok=True)
    base = os.path.join(args.out, f"samples_{sampler}_nfe{nfe}")
    data_io.write_samples(base + ".bin", out, seed, digest, sampler=sampler, nfe=nfe)
    written = [base + ".bin"]
    grid = _get(cfg, "sample", "grid", _int_pair, None)
    if shape is not None and grid is not None:
        data_io.write_sample_grid(out, base + ".pgm", grid)
        written.append(base + ".pgm")
    print(f"sampled {out.n}x{out.dim} with {sampler} at nfe={nfe} -> {', '.join(written)}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else _get(cfg, "run", "seed", int, 0)
    digest = config_hash(args.config)
    gen, meta = data_io.read_samples(args.samples)
    sampler = args.sampler or meta["sampler"]
    nfe = args.nfe or meta["nfe"]
    if sampler is None or not nfe:
        raise ConfigError("samples file carries no sampler/nfe; pass --sampler and --nfe")

    train_ds = _build_dataset(cfg, seed, "train")
    extractor = _train_extractor(cfg, train_ds, seed)
    n_real = _get(cfg, "eval", "n_real", int, 2000)
    real = _build_dataset(cfg, seed, "real", n_override=n_real).sample_set()
    report = _eval_report(cfg, real, gen, extractor, nfe, sampler, seed)

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    comments, _, rows = _read_metrics_csv(csv_path)
    if not comments:
        comments = _provenance(seed, digest)
    rows.append(",".join(report.to_row()))
    _write_metrics_csv(csv_path, comments, rows)
    print(",".join(metrics.METRICS_CSV_HEADER))
    print(",".join(report.to_row()))
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else _get(cfg, "run", "seed", int, 0)
    digest = config_hash(args.config)
    nfe_list = _get(cfg, "sweep", "nfe", _int_list)
    sampler_list = _get(cfg, "sweep", "samplers", _str_list, list(SAMPLER_TAGS))
    if not nfe_list:
        raise ConfigError("[sweep] nfe: need at least one budget")
    for tag in sampler_list:
        if tag not in SAMPLER_TAGS:
            raise ConfigError(f"[sweep] samplers: unknown sampler {tag!r}")
    n_samples = _get(cfg, "sweep", "n_samples", int, 2000)

    ckpt_paths = {
        trainer.REGIME_GPFN: _get(cfg, "sweep", "gpfn_checkpoint", str, None),
        trainer.REGIME_BFN: _get(cfg, "sweep", "bfn_checkpoint", str, None),
    }
    models = {}
    for regime, path in ckpt_paths.items():
        if path and os.path.exists(path):
            models[regime] = _model_from_checkpoint(path)

    train_ds = _build_dataset(cfg, seed, "train")
    extractor = _train_extractor(cfg, train_ds, seed)
    n_real = _get(cfg, "eval", "n_real", int, 2000)
    real = _build_dataset(cfg, seed, "real", n_override=n_real).sample_set()

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    comments, _, rows = _read_metrics_csv(csv_path)
    if args.force:
        rows = []
    if not comments:
        comments = _provenance(seed, digest)
    done = {tuple(r.split(",")[:2]) for r in rows}

    failures = []
    for sampler in sampler_list:
        regime = samplers.regime_for_sampler(sampler)
        for nfe in nfe_list:
            if (str(nfe), sampler) in done:
                print(f"skip {sampler} nfe={nfe} (already in {csv_path})")
                continue
            model = models.get(regime)
            if model is None:
                failures.append(
                    f"{sampler} nfe={nfe}: missing {regime} checkpoint "
                    f"({ckpt_paths[regime] or 'not configured'})"
                )
                continue
            kind = SamplerKind(tag=sampler, nfe=nfe)
            gen = samplers.generate(kind, model, n_samples, derived_rng(seed, "sweep", sampler, nfe))
            data_io.write_samples(
                os.path.join(args.out, f"samples_{sampler}_nfe{nfe}.bin"),
                gen, seed, digest, sampler=sampler, nfe=nfe,
            )
            report = _eval_report(cfg, real, gen, extractor, nfe, sampler, seed)
            rows.append(",".join(report.to_row()))
            _write_metrics_csv(csv_path, comments, rows)
            print(",".join(report.to_row()))

    _write_metrics_csv(csv_path, comments, rows)
    _print_sweep_summary(rows)
    for failure in failures:
        print(f"FAILED cell: {failure}", file=sys.stderr)
    return 2 if failures else 0


def _print_sweep_summary(rows) -> None:
    by_sampler = {}
    for row in rows:
        parts = row.split(",")
        by_sampler.setdefault(parts[1], []).append((int(parts[0]), float(parts[2])))
    for sampler, cells in sorted(by_sampler.items()):
        cells.sort()
        best_nfe, best_swd = min(cells, key=lambda c: c[1])
        trend = " ".join(f"nfe{n}:{s:.4g}" for n, s in cells)
        print(f"{sampler}: swd by budget [{trend}]; best {best_swd:.4g} at nfe={best_nfe}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="proxflow",
        description="Train, sample, and evaluate proximal belief-refinement generators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI config file")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--out", default="out", help="output directory")

    sub.add_parser("train", parents=[common], help="train a model and write a checkpoint")
    p_sample = sub.add_parser("sample", parents=[common], help="generate samples from a checkpoint")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--sampler", choices=SAMPLER_TAGS, default=None)
    p_sample.add_argument("--nfe", type=int, default=None)
    p_eval = sub.add_parser("eval", parents=[common], help="score a samples file against real data")
    p_eval.add_argument("--samples", required=True)
    p_eval.add_argument("--sampler", choices=SAMPLER_TAGS, default=None)
    p_eval.add_argument("--nfe", type=int, default=None)
    p_sweep = sub.add_parser("sweep", parents=[common], help="full sampler x budget metric sweep")
    p_sweep.add_argument("--force", action="store_true", help="recompute existing rows")

    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "sample": cmd_sample, "eval": cmd_eval, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except (ConfigError, RegimeMismatchError, data_io.CheckpointFormatError,
            data_io.IdxFormatError, metrics.ExtractorAccuracyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
