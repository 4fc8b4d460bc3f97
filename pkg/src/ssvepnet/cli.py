"""``ssvep`` command-line interface.

Subcommands: synth, preprocess, train, evaluate, compare, analyze, validate.
Exit status is 0 on success, 1 on a runtime failure and 2 on invalid input
or configuration. Every run writes a manifest with the resolved config, its
hash, seeds, library versions and wall time.

Heavy imports happen inside the command functions so that ``--threads`` can
set the BLAS thread count before numpy loads.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

log = logging.getLogger("ssvepnet")

DATA_DIR_ENV = "SSVEP_DATA_DIR"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class InputError(Exception):
    """Invalid input for the requested command (exit status 2)."""


def _data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "."))


def _input_path(p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and not path.exists() and (_data_dir() / path).exists():
        path = _data_dir() / path
    if not path.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return path


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(args):
    from .config import RunConfig
    return RunConfig.load(args.config) if args.config else RunConfig()


def _with_seed(cfg, seed: int | None, *targets: str):
    from dataclasses import replace
    if seed is None:
        return cfg
    for t in targets:
        if t == "synth":
            cfg = replace(cfg, synth=replace(cfg.synth, rng_seed=seed))
        elif t == "train":
            cfg = replace(cfg, train=replace(cfg.train, seed=seed))
        elif t == "analysis":
            cfg = replace(cfg, analysis=replace(cfg.analysis, seed=seed))
    return cfg


def _write_manifest(path: Path, args, cfg, inputs, outputs, wall: float, extra=None) -> None:
    import numpy
    import scipy

    from . import __version__
    resolved = cfg.resolved()
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": resolved,
        "config_sha256": hashlib.sha256(
            json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()).hexdigest(),
        "seeds": {"synth": cfg.synth.rng_seed, "train": cfg.train.seed,
                  "shuffle": cfg.shuffle_seed, "analysis": cfg.analysis.seed},
        "threads": args.threads,
        "versions": {"ssvepnet": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "inputs": {str(p): _file_sha256(Path(p)) for p in inputs},
        "outputs": {str(p): _file_sha256(Path(p)) for p in outputs if Path(p).is_file()},
        "wall_seconds": wall,
        **(extra or {}),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg):
    from .datastore import save_dataset
    from .pipeline import synthesize_preprocessed
    from .synthgen import generate_dataset
    cfg = _with_seed(cfg, args.seed, "synth")
    out = Path(args.out) if args.out else _data_dir() / "synthetic.ssvepds"
    ds = synthesize_preprocessed(cfg.synth, cfg.signal) if args.preprocessed else generate_dataset(cfg.synth)
    digest = save_dataset(ds, out)
    print(f"wrote {len(ds)} trials to {out} (payload sha256 {digest[:12]})")
    return cfg, [], [out], Path(str(out) + ".manifest.json")


def cmd_preprocess(args, cfg):
    from .datastore import load_dataset, save_dataset
    from .pipeline import is_preprocessed, preprocess_dataset
    src = _input_path(args.input)
    ds = load_dataset(src)
    if len(ds) == 0:
        print("warning: input dataset is empty; writing an empty dataset", file=sys.stderr)
    elif is_preprocessed(ds, cfg.signal) and not args.force:
        raise InputError(f"{src} is already preprocessed "
                         f"({ds.sample_rate_hz:g} Hz, {ds.n_samples} samples); use --force to redo")
    out = Path(args.out) if args.out else src.with_name(src.stem + "_pre" + src.suffix)
    pre = preprocess_dataset(ds, cfg.signal)
    save_dataset(pre, out)
    print(f"wrote {len(pre)} segments ({pre.n_channels}x{pre.n_samples} at "
          f"{pre.sample_rate_hz:g} Hz) to {out}")
    return cfg, [src], [out], Path(str(out) + ".manifest.json")


def _load_segments(path, cfg, force: bool):
    from .datastore import load_dataset
    from .pipeline import is_preprocessed
    ds = load_dataset(path)
    if len(ds) == 0:
        raise InputError(f"{path} contains no segments")
    if not is_preprocessed(ds, cfg.signal) and not force:
        raise InputError(f"{path} is not preprocessed ({ds.sample_rate_hz:g} Hz, {ds.n_samples} "
                         f"samples); run `ssvep preprocess` first or pass --force")
    return ds


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if args.out else _data_dir() / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args, cfg):
    from dataclasses import replace

    import numpy as np

    from .nnet.checkpoint import save_checkpoint
    from .nnet.train import train
    cfg = _with_seed(cfg, args.seed, "train")
    src = _input_path(args.input)
    ds = _load_segments(src, cfg, args.force)
    if args.exclude_subject is not None:
        keep = np.flatnonzero(ds.subject != args.exclude_subject)
        if keep.size == 0:
            raise InputError(f"excluding subject {args.exclude_subject} leaves no data")
        ds = ds.subset(keep)
    model_cfg = replace(cfg.model, n_channels=ds.n_channels, n_samples=ds.n_samples,
                        n_classes=ds.stimulus.n_classes)
    cfg = replace(cfg, model=model_cfg)
    out = _out_dir(args, "train")
    result = train(model_cfg, ds.data, ds.class_id, cfg.train,
                   callback=lambda e, loss: log.info("epoch %d loss %.5f", e + 1, loss))
    ckpt = out / "model.ckpt"
    save_checkpoint(result.model, ckpt, {"excluded_subject": args.exclude_subject,
                                         "train_seed": cfg.train.seed})
    curve = out / "loss_curve.csv"
    lines = ["epoch,train_loss,val_loss"]
    for e, loss in enumerate(result.loss_curve):
        val = result.val_curve[e] if e < len(result.val_curve) else ""
        lines.append(f"{e + 1},{loss!r},{val!r}" if val != "" else f"{e + 1},{loss!r},")
    curve.write_text("\n".join(lines) + "\n")
    print(f"trained {len(result.loss_curve)} epochs on {len(ds)} segments; "
          f"final loss {result.loss_curve[-1] if result.loss_curve else float('nan'):.4f}; wrote {ckpt}")
    return cfg, [src], [ckpt, curve], out / "manifest.json"


def cmd_evaluate(args, cfg):
    from dataclasses import replace

    from .harness import compare_reports, run_loso, write_reports
    cfg = _with_seed(cfg, args.seed, "train")
    if args.methods:
        cfg = replace(cfg, methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()))
        try:
            cfg.harness()
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    src = _input_path(args.input)
    ds = _load_segments(src, cfg, args.force)
    if len(ds.subjects) < 2:
        raise InputError(f"leave-one-subject-out needs at least 2 subjects; {src} has "
                         f"{len(ds.subjects)}")
    out = _out_dir(args, "evaluate")
    model_dir = None
    if args.save_models:
        model_dir = out / "models"
        model_dir.mkdir(exist_ok=True)
    reports = run_loso(ds, cfg.harness(), model_dir=model_dir,
                       progress=lambda m, f: log.info("%s subject %d: %.3f", m, f.test_subject, f.accuracy))
    paths = write_reports(reports, out)
    print(compare_reports(reports).to_text())
    outputs = [p for k, p in paths.items() if k != "manifest"]
    return cfg, [src], outputs, out / "manifest.json"


def cmd_compare(args, cfg):
    from .harness import compare_reports, load_report
    srcs = [_input_path(p) for p in args.reports]
    try:
        reports = [load_report(p) for p in srcs]
    except (KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"unreadable report: {exc}") from exc
    try:
        cmp_ = compare_reports(reports)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args, "compare")
    csv_path, txt_path = out / "comparison.csv", out / "comparison.txt"
    csv_path.write_text(cmp_.to_csv())
    txt_path.write_text(cmp_.to_text() + "\n")
    print(cmp_.to_text())
    return cfg, srcs, [csv_path, txt_path], out / "manifest.json"


def cmd_analyze(args, cfg):
    from dataclasses import replace

    import numpy as np

    from . import analysis
    from .nnet.checkpoint import load_checkpoint
    cfg = _with_seed(cfg, args.seed, "analysis")
    if args.what:
        try:
            cfg = replace(cfg, analysis=replace(cfg.analysis, what=tuple(args.what.split(","))))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    acfg = cfg.analysis
    src = _input_path(args.input)
    ds = _load_segments(src, cfg, args.force)
    inputs, outputs = [src], []
    out = _out_dir(args, "analyze")
    model = None
    if {"spectra", "tsne"} & set(acfg.what):
        if not args.checkpoint:
            raise InputError("spectra and tsne need --checkpoint")
        ckpt = _input_path(args.checkpoint)
        model, _ = load_checkpoint(ckpt)
        inputs.append(ckpt)
    if "spectra" in acfg.what:
        freqs, power = analysis.model_kernel_spectra(model, ds.sample_rate_hz)
        outputs.append(analysis.write_kernel_spectra(out / "kernels_spectrum.csv", freqs, power))
    if "tsne" in acfg.what:
        rng = np.random.default_rng(acfg.seed)
        idx = np.arange(len(ds))
        if len(idx) > acfg.max_points:
            idx = np.sort(rng.choice(idx, acfg.max_points, replace=False))
        feats = model.activations(ds.data[idx], acfg.layer)
        labels = {"class_id": ds.class_id[idx], "subject": ds.subject[idx],
                  "block": ds.block[idx], "segment": ds.segment[idx]}
        try:
            emb = analysis.tsne(feats, acfg.perplexity, acfg.n_iter, acfg.seed, acfg.early_exaggeration,
                                acfg.exaggeration_iters, labels=labels)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        outputs.append(analysis.write_tsne_points(out / "tsne_points.csv", emb))
        print(f"t-SNE of layer {acfg.layer} ({len(idx)} points): final KL {emb.kl_divergence:.4f}")
    if "phase" in acfg.what:
        rows = analysis.segment_phase_report(ds)
        outputs.append(analysis.write_phase_amp(out / "phase_amp.csv", rows))
    print("wrote " + ", ".join(str(p) for p in outputs))
    return cfg, inputs, outputs, out / "manifest.json"


def cmd_validate(args, cfg):
    from .datastore import MAGIC as DS_MAGIC
    from .datastore import validate_dataset
    from .nnet.checkpoint import MAGIC as NN_MAGIC
    from .nnet.checkpoint import load_checkpoint
    src = _input_path(args.input)
    with open(src, "rb") as fh:
        magic = fh.read(8)
    if magic == NN_MAGIC:
        model, meta = load_checkpoint(src)
        summary = {"kind": "checkpoint", "parameters": model.n_params(), "config": model.config.to_json(),
                   "metadata": meta}
    else:
        if magic != DS_MAGIC:
            raise InputError(f"{src}: unrecognised magic {magic!r}")
        summary = {"kind": "dataset", **validate_dataset(src)}
    summary["sha256"] = _file_sha256(src)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return cfg, [src], [], None


COMMANDS = {
    "synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
    "evaluate": cmd_evaluate, "compare": cmd_compare, "analyze": cmd_analyze,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the seed the command uses")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread count (recorded in the manifest)")
    common.add_argument("--out", help="output file (synth, preprocess) or directory (other commands)")
    common.add_argument("--methods", help="comma-separated subset of cnn,cca,combined_cca")
    common.add_argument("--force", action="store_true",
                        help="accept inputs that look already processed / unprocessed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ssvep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--preprocessed", action="store_true",
                   help="write filtered, decimated 1 s segments instead of raw trials")
    p = sub.add_parser("preprocess", parents=[common], help="band-pass, decimate and segment")
    p.add_argument("input")
    p = sub.add_parser("train", parents=[common], help="train a Compact-CNN on a dataset")
    p.add_argument("input")
    p.add_argument("--exclude-subject", type=int, help="leave this subject out of training")
    p = sub.add_parser("evaluate", parents=[common], help="leave-one-subject-out comparison")
    p.add_argument("input")
    p.add_argument("--save-models", action="store_true", help="checkpoint each fold's CNN")
    p = sub.add_parser("compare", parents=[common], help="tabulate report_<method>.json files")
    p.add_argument("reports", nargs="+")
    p = sub.add_parser("analyze", parents=[common], help="kernel spectra, t-SNE and phase analysis")
    p.add_argument("input")
    p.add_argument("--checkpoint", help="trained model for spectra/tsne")
    p.add_argument("--what", help="comma-separated subset of spectra,tsne,phase")
    p = sub.add_parser("validate", parents=[common], help="check a dataset or checkpoint file")
    p.add_argument("input")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    from .config import ConfigError
    from .datastore import DatasetFormatError
    from .nnet.checkpoint import CheckpointError
    start = time.perf_counter()
    try:
        cfg = _load_config(args)
        cfg, inputs, outputs, manifest = COMMANDS[args.command](args, cfg)
        if manifest is not None:
            _write_manifest(manifest, args, cfg, inputs, outputs, time.perf_counter() - start)
    except (InputError, ConfigError, DatasetFormatError, CheckpointError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
