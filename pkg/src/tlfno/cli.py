"""Command-line front end: gen-data, train, finetune, infer, eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from . import fno
from .encodings import VARIANTS, EncodingError, assemble_input
from .fno import Hyperparams, ModelError, predict
from .grid import BATHY_FAMILIES, PROFILE_FAMILIES, GridError, Scenario, SoundSpeedField, SynthConfig, build_grid, synth_environment
from .metrics import MetricError, aggregate, evaluate
from .optim import OptimError, TrainConfig, TrainingDiverged, finetune, split_indices, train
from .pe import PEConfig, PEError, solve_tl
from .persist import (Dataset, PersistError, atomic_write, dataset_from_scenarios, load_checkpoint,
                      load_dataset, save_checkpoint, save_dataset)

log = logging.getLogger("tlfno")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers

def _grid_spec(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        nr, nd = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RANGExDEPTH, e.g. 64x48, got {text!r}") from None
    if nr < 2 or nd < 2:
        raise argparse.ArgumentTypeError("grid needs at least 2 points per axis")
    return nr, nd


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _fraction(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1)")
    return v


def _add_generator_flags(p, required: bool):
    p.add_argument("--n", type=_positive(int), required=required, help="number of samples")
    p.add_argument("--grid", type=_grid_spec, required=required, help="RANGExDEPTH points, e.g. 128x64")
    p.add_argument("--range-km", type=_positive(float), required=required)
    p.add_argument("--depth-km", type=_positive(float), required=required)
    p.add_argument("--freq-hz", type=_positive(float), default=200.0)
    p.add_argument("--source-depth-m", type=_positive(float), default=50.0)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--profile", choices=PROFILE_FAMILIES, default="munk-perturbed")
    p.add_argument("--bathy", choices=BATHY_FAMILIES, default="smooth-random")
    p.add_argument("--perturbation", type=float, default=5.0, help="SSF perturbation scale, m/s")


def _synth_config(a) -> SynthConfig:
    nr, nd = a.grid
    grid = build_grid(nr, nd, a.range_km * 1000.0, a.depth_km * 1000.0)
    return SynthConfig(seed=a.seed, n_samples=a.n, grid=grid, profile_family=a.profile,
                       bathy_family=a.bathy, perturbation_scale=a.perturbation,
                       source_depth=a.source_depth_m, source_freq=a.freq_hz)


def _solve(job):
    cfg_dict, index = job
    scn = synth_environment(SynthConfig.from_dict(cfg_dict), index)
    return solve_tl(scn, PEConfig()).tl


def _model_flags(p):
    p.add_argument("--epochs", type=_nonneg_int)
    p.add_argument("--batch-size", type=_positive(int), default=8)
    p.add_argument("--lr", type=_positive(float), default=1e-3)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--sobolev-order", type=int, choices=(0, 1, 2), default=1)
    p.add_argument("--val-frac", type=_fraction, default=0.1)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--report", help="CSV training report (default: OUT.csv)")
    p.add_argument("--threads", type=_positive(int), default=1)


def _write_report(path, report):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["epoch", "train", "val", "secs"], lineterminator="\r\n")
    w.writeheader()
    for r in report.rows():
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    atomic_write(path, buf.getvalue().encode())


def _split(ds: Dataset, val_frac: float, seed: int):
    tr, va = split_indices(len(ds), val_frac, seed)
    return ds.subset(tr), (ds.subset(va) if len(va) else None)


def _train_config(a, epochs):
    return TrainConfig(epochs=epochs, batch_size=a.batch_size, lr=a.lr, weight_decay=a.wd,
                       sobolev_order=a.sobolev_order, seed=a.seed)


def _progress(epoch, tr, va, secs):
    print(f"epoch {epoch}: train {tr:.6g} val {va:.6g} ({secs:.2f} s)", flush=True)


def write_pgm(path, tl: np.ndarray, vmax: float = 120.0) -> None:
    """Plain (P2) 8-bit greymap; 0 dB is black, ``vmax`` and beyond white."""
    img = np.rint(255.0 * np.clip(tl, 0.0, vmax) / vmax).astype(int)
    lines = [f"P2\n{img.shape[1]} {img.shape[0]}\n255\n"]
    lines += [" ".join(map(str, row)) + "\n" for row in img]
    atomic_write(path, "".join(lines).encode("ascii"))


def _resample(ds: Dataset, factor: int) -> list[Scenario]:
    """Scenarios on a grid refined by ``factor``.

    Synthetic datasets are regenerated from their generator settings, which
    samples the same continuous fields more densely. Other datasets are
    resampled with cubic interpolation.
    """
    fine = ds.grid.refined(factor)
    cfg = ds.synth_config()
    if cfg is not None and ds.indices is not None:
        return [synth_environment(cfg, i, fine) for i in ds.indices]
    g = ds.grid
    rr = np.clip((fine.ranges - g.r0) / g.dr, 0, g.n_range - 1)
    zz = np.clip(fine.depths / g.dz, 0, g.n_depth - 1)
    Z, Rr = np.meshgrid(zz, rr, indexing="ij")
    out = []
    for i in range(len(ds)):
        c = map_coordinates(ds.c[i], [Z, Rr], order=3, mode="nearest")
        b = map_coordinates(ds.bathy[i], [rr], order=1, mode="nearest")
        sd, f, cref, vsed = (float(v) for v in ds.scalars[i])
        out.append(Scenario(SoundSpeedField(fine, c, b, vsed), sd, f, cref))
    return out


# ----------------------------------------------------------------- commands

def cmd_gen_data(a) -> int:
    cfg = _synth_config(a)
    jobs = [(cfg.to_dict(), i) for i in range(cfg.n_samples)]
    if a.threads > 1:
        with ProcessPoolExecutor(max_workers=a.threads) as ex:
            tls = []
            for i, tl in enumerate(ex.map(_solve, jobs)):
                tls.append(tl)
                print(f"sample {i + 1}/{cfg.n_samples}", flush=True)
    else:
        tls = []
        for i, job in enumerate(jobs):
            tls.append(_solve(job))
            print(f"sample {i + 1}/{cfg.n_samples}", flush=True)
    scns = [synth_environment(cfg, i) for i in range(cfg.n_samples)]
    inputs = None
    if a.store_inputs:
        inputs = np.stack([assemble_input(s, a.store_inputs).channels for s in scns])
    ds = dataset_from_scenarios(scns, np.stack(tls), inputs, a.store_inputs, cfg.to_dict(),
                                range(cfg.n_samples))
    save_dataset(ds, a.out)
    print(f"wrote {cfg.n_samples} samples to {a.out}")
    return EXIT_OK


def cmd_train(a) -> int:
    ds = load_dataset(a.data)
    tr, va = _split(ds, a.val_frac, a.seed)
    hp = Hyperparams(a.layers, a.width, a.modes_z or a.modes, a.modes_r or a.modes)
    epochs = 1000 if a.epochs is None else a.epochs
    params, report = train(hp, _train_config(a, epochs), tr.pairs(a.encodings),
                           va.pairs(a.encodings) if va else None, variant=a.encodings, on_epoch=_progress)
    meta = {"epochs": epochs, "best_epoch": report.best_epoch, "train_grid": ds.grid.to_dict(),
            "train_freq_hz": float(ds.scalars[0, 1])}
    save_checkpoint(params, params.hp, a.out, meta)
    _write_report(a.report or f"{a.out}.csv", report)
    print(f"wrote {a.out}")
    return EXIT_OK


def cmd_finetune(a) -> int:
    init, _ = load_checkpoint(a.init)
    ds = load_dataset(a.data)
    tr, va = _split(ds, a.val_frac, a.seed)
    epochs = 100 if a.epochs is None else a.epochs
    variant = init.variant
    params, report = finetune(init, _train_config(a, epochs), tr.pairs(variant),
                              va.pairs(variant) if va else None, on_epoch=_progress)
    meta = {"epochs": epochs, "best_epoch": report.best_epoch, "finetuned_from": str(a.init),
            "train_grid": ds.grid.to_dict(), "train_freq_hz": float(ds.scalars[0, 1])}
    save_checkpoint(params, params.hp, a.out, meta)
    _write_report(a.report or f"{a.out}.csv", report)
    print(f"wrote {a.out}")
    return EXIT_OK


def cmd_infer(a) -> int:
    params, _ = load_checkpoint(a.ckpt)
    if a.data:
        ds = load_dataset(a.data)
    else:
        missing = [f for f in ("n", "grid", "range_km", "depth_km") if getattr(a, f) is None]
        if missing:
            raise UsageError("infer needs --data or the scenario flags (--n --grid --range-km --depth-km); "
                             f"missing {', '.join('--' + m.replace('_', '-') for m in missing)}")
        cfg = _synth_config(a)
        scns = [synth_environment(cfg, i) for i in range(cfg.n_samples)]
        ds = dataset_from_scenarios(scns, np.zeros((cfg.n_samples, *cfg.grid.shape)), None, None,
                                    cfg.to_dict(), range(cfg.n_samples))
    scns = _resample(ds, a.upsample) if a.upsample > 1 else [ds.scenario(i) for i in range(len(ds))]
    x = np.stack([assemble_input(s, params.variant).channels for s in scns])
    tl = predict(params, x)
    if not np.all(np.isfinite(tl)):
        raise FloatingPointError("non-finite prediction")
    out = dataset_from_scenarios(scns, tl, None, None, ds.config, ds.indices,
                                 {"kind": "prediction", "upsample": a.upsample})
    save_dataset(out, a.out)
    if a.pgm_dir:
        d = Path(a.pgm_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(tl):
            write_pgm(d / f"pred_{i:04d}.pgm", t)
    print(f"wrote {len(out)} predictions on a {out.grid.n_range}x{out.grid.n_depth} grid to {a.out}")
    return EXIT_OK


def cmd_eval(a) -> int:
    truth = load_dataset(a.data)
    if a.pred:
        pred = load_dataset(a.pred).targets
    else:
        params, _ = load_checkpoint(a.ckpt)
        pred = predict(params, truth.encoded(params.variant))
    if pred.shape != truth.targets.shape:
        raise MetricError(f"prediction shape {pred.shape} does not match targets {truth.targets.shape}")
    reports = [evaluate(p, t) for p, t in zip(pred, truth.targets)]
    agg = aggregate(reports)
    doc = {"samples": [{"index": i, "rmse": r.rmse, "h1": r.h1, "ssim": r.ssim} for i, r in enumerate(reports)],
           "aggregate": {"rmse": agg.rmse, "h1": agg.h1, "ssim": agg.ssim, "n": len(reports)}}
    text = json.dumps(doc, indent=1)
    if a.out:
        atomic_write(a.out, text.encode())
    print(agg.to_json(n=len(reports)))
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tlfno", description="Transmission-loss surrogate: data, training and inference.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="synthesise environments and solve TL targets")
    _add_generator_flags(g, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--store-inputs", choices=VARIANTS, help="also store encoded inputs for this variant")
    g.add_argument("--threads", type=_positive(int), default=1)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="pretrain a model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--encodings", choices=VARIANTS, default="bty+hf")
    t.add_argument("--layers", type=_positive(int), default=4)
    t.add_argument("--width", type=_positive(int), default=64)
    t.add_argument("--modes", type=_positive(int), default=64, help="retained modes per axis")
    t.add_argument("--modes-z", type=_positive(int))
    t.add_argument("--modes-r", type=_positive(int))
    _model_flags(t)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("finetune", help="adapt a pretrained model to a small dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--init", required=True)
    f.add_argument("--out", required=True)
    _model_flags(f)
    f.set_defaults(func=cmd_finetune)

    i = sub.add_parser("infer", help="predict TL for a dataset or synthetic scenarios")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--data")
    i.add_argument("--out", required=True)
    i.add_argument("--upsample", type=_positive(int), default=1)
    i.add_argument("--pgm-dir")
    i.add_argument("--threads", type=_positive(int), default=1)
    _add_generator_flags(i, required=False)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score predictions against a dataset's targets")
    e.add_argument("--data", required=True)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--ckpt")
    src.add_argument("--pred")
    e.add_argument("--out")
    e.add_argument("--threads", type=_positive(int), default=1)
    e.set_defaults(func=cmd_eval)
    return p


def _setup_logging():
    level = os.environ.get("HFNO_LOG", "quiet").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fno.set_threads(getattr(a, "threads", 1))
    try:
        return a.func(a)
    except UsageError as exc:
        print(f"tlfno: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PersistError, FileNotFoundError, IsADirectoryError, PermissionError, MetricError,
            EncodingError, GridError, ModelError) as exc:
        print(f"tlfno: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PEError, TrainingDiverged, OptimError, FloatingPointError) as exc:
        print(f"tlfno: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
