"""Leave-one-subject-out comparison of Compact-CNN, CCA and Combined-CCA.

Every method sees the same folds. CCA uses no training data. Combined-CCA
builds its prototypes from the training subjects only. The CNN is trained
from scratch on each fold's training segments. A leakage guard checks that
no test-subject segment can reach a training routine.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .cca import build_reference_bank, cca_scores
from .combined_cca import FUSIONS, build_prototypes, combined_cca_scores
from .datastore import Dataset, LosoFold, check_fold, loso_folds, payload_sha256
from .nnet.checkpoint import save_checkpoint
from .nnet.model import ModelConfig
from .nnet.train import TrainConfig, train as train_cnn

METHODS = ("cnn", "cca", "combined_cca")


class LeakageError(RuntimeError):
    """A test-subject segment was reachable by a training routine."""


@dataclass(frozen=True)
class HarnessConfig:
    methods: tuple[str, ...] = METHODS
    n_harmonics: int = 2
    fusion: str = "signed_square"
    prototype_segments: tuple[int, ...] | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    majority_vote: bool = False
    shuffle_labels: bool = False
    shuffle_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if self.fusion not in FUSIONS:
            raise ValueError(f"fusion must be one of {FUSIONS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        if self.prototype_segments is not None:
            d["prototype_segments"] = list(self.prototype_segments)
        return d

    def method_json(self, method: str) -> dict:
        """Only the settings that influence ``method``."""
        common = {"majority_vote": self.majority_vote, "shuffle_labels": self.shuffle_labels,
                  "shuffle_seed": self.shuffle_seed}
        if method == "cca":
            return {**common, "n_harmonics": self.n_harmonics}
        if method == "combined_cca":
            return {**common, "n_harmonics": self.n_harmonics, "fusion": self.fusion,
                    "prototype_segments": self.to_json()["prototype_segments"]}
        return {**common, "model": self.model.to_json(), "train": self.train.to_json()}


def config_hash(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass(frozen=True)
class FoldResult:
    test_subject: int
    n_test: int
    accuracy: float
    confusion: np.ndarray  # (N, N) counts, rows = true class

    def to_json(self) -> dict:
        return {"test_subject": self.test_subject, "n_test": self.n_test,
                "accuracy": self.accuracy, "confusion": self.confusion.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "FoldResult":
        return cls(int(d["test_subject"]), int(d["n_test"]), float(d["accuracy"]),
                   np.asarray(d["confusion"], np.int64))


@dataclass
class ClassifierReport:
    """Per-fold results for one method. ``timing`` is kept out of :meth:`to_json`
    so that reruns with the same manifest produce byte-identical reports."""

    method: str
    folds: list[FoldResult]
    manifest: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.accuracy for f in self.folds])

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def sem(self) -> float:
        a = self.accuracies
        return float(a.std(ddof=1) / np.sqrt(len(a))) if len(a) > 1 else 0.0

    @property
    def subjects(self) -> list[int]:
        return [f.test_subject for f in self.folds]

    def to_json(self) -> dict:
        return {"method": self.method, "mean_accuracy": self.mean_accuracy, "sem": self.sem,
                "folds": [f.to_json() for f in self.folds], "manifest": self.manifest}

    @classmethod
    def from_json(cls, d: dict) -> "ClassifierReport":
        return cls(d["method"], [FoldResult.from_json(f) for f in d["folds"]], d.get("manifest", {}))


def fold_seed(seed: int, test_subject: int) -> int:
    return int(np.random.SeedSequence([seed, test_subject]).generate_state(1)[0])


def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), np.int64)
    np.add.at(cm, (np.asarray(true), np.asarray(pred)), 1)
    return cm


def _verify_fold(ds: Dataset, fold: LosoFold) -> None:
    try:
        check_fold(ds, fold)
    except ValueError as exc:
        raise LeakageError(str(exc)) from exc


def _training_view(ds: Dataset, fold: LosoFold) -> Dataset:
    """The only data a training routine may see; raises :class:`LeakageError` otherwise."""
    _verify_fold(ds, fold)
    train = ds.subset(fold.train_indices)
    if np.any(train.subject == fold.test_subject):
        raise LeakageError(f"subject {fold.test_subject} present in training data")
    return train


def _vote(ds: Dataset, idx: np.ndarray, pred: np.ndarray, n_classes: int):
    """Trial-level majority vote over segments; ties go to the lowest class id."""
    keys = np.stack([ds.block[idx], ds.class_id[idx]], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    counts = np.zeros((len(uniq), n_classes), np.int64)
    np.add.at(counts, (inv, pred), 1)
    true = np.zeros(len(uniq), np.int64)
    true[inv] = ds.class_id[idx]
    return true, counts.argmax(axis=1)


def _predict(method: str, ds: Dataset, fold: LosoFold, cfg: HarnessConfig, bank, model_dir):
    test = ds.data[fold.test_indices]
    if method == "cca":
        return cca_scores(test, bank).argmax(axis=1)
    train = _training_view(ds, fold)
    if method == "combined_cca":
        protos = build_prototypes(train, cfg.prototype_segments)
        return combined_cca_scores(test, protos, bank, cfg.fusion).argmax(axis=1)
    tcfg = replace(cfg.train, seed=fold_seed(cfg.train.seed, fold.test_subject))
    result = train_cnn(cfg.model, train.data, train.class_id, tcfg)
    if model_dir is not None:
        save_checkpoint(result.model, Path(model_dir) / f"cnn_subject{fold.test_subject}.ckpt",
                        {"test_subject": fold.test_subject, "train_seed": tcfg.seed,
                         "loss_curve": result.loss_curve})
    return result.model.predict(test)[0]


def _run_fold(args):
    method, ds, fold, cfg, model_dir = args
    start = time.perf_counter()
    n_classes = ds.stimulus.n_classes
    bank = build_reference_bank(ds.stimulus, cfg.n_harmonics, ds.n_samples, ds.sample_rate_hz)
    pred = _predict(method, ds, fold, cfg, bank, model_dir)
    true = ds.class_id[fold.test_indices]
    if cfg.majority_vote:
        true, pred = _vote(ds, fold.test_indices, pred, n_classes)
    cm = confusion_matrix(true, pred, n_classes)
    res = FoldResult(fold.test_subject, int(cm.sum()), float(np.trace(cm) / cm.sum()), cm)
    return res, time.perf_counter() - start


def prepare(ds: Dataset, cfg: HarnessConfig) -> tuple[Dataset, HarnessConfig]:
    """Apply label shuffling and fit the model config to the data shape."""
    if cfg.shuffle_labels:
        rng = np.random.default_rng(cfg.shuffle_seed)
        ds = ds.with_labels(rng.permutation(ds.class_id))
    model = replace(cfg.model, n_channels=ds.n_channels, n_samples=ds.n_samples,
                    n_classes=ds.stimulus.n_classes)
    return ds, replace(cfg, model=model)


def run_loso(ds: Dataset, config: HarnessConfig = HarnessConfig(), model_dir=None,
             progress=None) -> list[ClassifierReport]:
    """One :class:`ClassifierReport` per method, folds ordered by subject.

    Args:
        ds: preprocessed, segmented dataset.
        model_dir: if given, each fold's trained CNN is checkpointed there.
        progress: optional ``callback(method, FoldResult)``.
    """
    ds, cfg = prepare(ds, config)
    folds = loso_folds(ds)
    for fold in folds:
        _verify_fold(ds, fold)
    digest = payload_sha256(ds)
    reports = []
    for method in cfg.methods:
        jobs = [(method, ds, f, cfg, model_dir) for f in folds]
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                outcomes = list(pool.map(_run_fold, jobs))
        else:
            outcomes = []
            for job in jobs:
                outcomes.append(_run_fold(job))
                if progress is not None:
                    progress(method, outcomes[-1][0])
        mjson = cfg.method_json(method)
        manifest = {
            "dataset_sha256": digest,
            "n_segments": len(ds),
            "config": mjson,
            "config_sha256": config_hash(mjson),
            "fold_seeds": ({str(f.test_subject): fold_seed(cfg.train.seed, f.test_subject)
                            for f in folds} if method == "cnn" else {}),
        }
        reports.append(ClassifierReport(
            method, [o[0] for o in outcomes], manifest,
            {"fold_seconds": [o[1] for o in outcomes], "workers": cfg.workers,
             "threads": os.environ.get("OMP_NUM_THREADS", "default")}))
    return reports


@dataclass
class Comparison:
    methods: list[str]
    subjects: list[int]
    accuracy: np.ndarray  # (n_subjects, n_methods)
    means: np.ndarray
    sems: np.ndarray

    def differences(self) -> dict[tuple[str, str], np.ndarray]:
        """Per-subject accuracy difference for every ordered method pair ``(a, b)``, a before b."""
        out = {}
        for i, a in enumerate(self.methods):
            for j in range(i + 1, len(self.methods)):
                out[(a, self.methods[j])] = self.accuracy[:, i] - self.accuracy[:, j]
        return out

    def to_csv(self) -> str:
        diffs = self.differences()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject", *self.methods, *(f"{a}_minus_{b}" for a, b in diffs)])
        for r, s in enumerate(self.subjects):
            w.writerow([s, *(repr(float(v)) for v in self.accuracy[r]),
                        *(repr(float(d[r])) for d in diffs.values())])
        mean_diffs = [float(np.mean(d)) for d in diffs.values()]
        w.writerow(["mean", *(repr(float(m)) for m in self.means), *map(repr, mean_diffs)])
        w.writerow(["sem", *(repr(float(s)) for s in self.sems), *([""] * len(diffs))])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'subject':>8} " + " ".join(f"{m:>13}" for m in self.methods)
        lines = [head, "-" * len(head)]
        for r, s in enumerate(self.subjects):
            lines.append(f"{s:>8} " + " ".join(f"{100 * v:12.1f}%" for v in self.accuracy[r]))
        lines.append("-" * len(head))
        lines.append(f"{'mean':>8} " + " ".join(f"{100 * v:12.1f}%" for v in self.means))
        lines.append(f"{'sem':>8} " + " ".join(f"{100 * v:12.1f}%" for v in self.sems))
        for (a, b), d in self.differences().items():
            lines.append(f"{a} - {b}: mean {100 * d.mean():+.1f} pp, per subject "
                         + " ".join(f"{100 * x:+.1f}" for x in d))
        return "\n".join(lines)


def compare_reports(reports: list[ClassifierReport]) -> Comparison:
    if not reports:
        raise ValueError("no reports to compare")
    subjects = reports[0].subjects
    for r in reports[1:]:
        if r.subjects != subjects:
            raise ValueError(f"fold structure of {r.method} {r.subjects} differs from "
                             f"{reports[0].method} {subjects}")
        if [f.n_test for f in r.folds] != [f.n_test for f in reports[0].folds]:
            raise ValueError(f"test-set sizes of {r.method} differ from {reports[0].method}")
    acc = np.stack([r.accuracies for r in reports], axis=1)
    return Comparison([r.method for r in reports], list(subjects), acc,
                      np.array([r.mean_accuracy for r in reports]),
                      np.array([r.sem for r in reports]))


def write_reports(reports: list[ClassifierReport], out_dir) -> dict[str, Path]:
    """``report_<method>.json``, ``comparison.csv``/``.txt`` and ``run_manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for r in reports:
        p = out / f"report_{r.method}.json"
        p.write_text(json.dumps(r.to_json(), indent=2, sort_keys=True) + "\n")
        paths[r.method] = p
    cmp_ = compare_reports(reports)
    (out / "comparison.csv").write_text(cmp_.to_csv())
    (out / "comparison.txt").write_text(cmp_.to_text() + "\n")
    paths["comparison"] = out / "comparison.csv"
    manifest = {r.method: {**r.manifest, "timing": r.timing} for r in reports}
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths["manifest"] = out / "run_manifest.json"
    return paths


def load_report(path) -> ClassifierReport:
    return ClassifierReport.from_json(json.loads(Path(path).read_text()))
