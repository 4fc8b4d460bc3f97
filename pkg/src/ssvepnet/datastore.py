"""In-memory dataset container, the ``SSVEPDS1`` file format and LOSO folds.

File layout (all integers little-endian)::

    8 bytes   magic  b"SSVEPDS1"
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header
    payload   float32 tensor (n_trials, C, T), C-order, little-endian

The header carries the format version, channel names, stimulus table, one
metadata record per trial, dtype/shape/endianness tags and the SHA-256 of
the payload.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .stimulus import StimulusTable

MAGIC = b"SSVEPDS1"
VERSION = 1
_LEN = struct.Struct("<Q")
_META_FIELDS = ("subject", "class_id", "block", "segment")


class DatasetFormatError(Exception):
    """Base class for unreadable or inconsistent dataset files."""


class BadMagicError(DatasetFormatError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class HeaderError(DatasetFormatError):
    pass


class ChecksumMismatchError(DatasetFormatError):
    pass


@dataclass(frozen=True)
class Trial:
    data: np.ndarray
    subject: int
    class_id: int
    block: int
    segment: int
    sample_rate_hz: float


class Dataset:
    """Ordered trials sharing one shape and sample rate.

    Trial data live in a single ``(n, C, T)`` float32 array; the per-trial
    labels are parallel integer arrays. Indexing returns :class:`Trial`.
    """

    def __init__(
        self,
        data,
        subject,
        class_id,
        block,
        segment,
        sample_rate_hz: float,
        channel_names: Sequence[str],
        stimulus: StimulusTable,
        provenance: str = "",
    ):
        data = np.asarray(data)
        if data.ndim != 3:
            raise ValueError(f"data must be (n_trials, C, T), got shape {data.shape}")
        data = np.ascontiguousarray(data, dtype=np.float32)
        if not np.isfinite(data).all():
            raise ValueError("trial data contain NaN or Inf")
        n = data.shape[0]
        meta = {}
        for name, arr in zip(_META_FIELDS, (subject, class_id, block, segment)):
            arr = np.asarray(arr, dtype=np.int64).reshape(-1)
            if arr.shape != (n,):
                raise ValueError(f"{name} has {arr.size} entries for {n} trials")
            if n and arr.min() < 0:
                raise ValueError(f"{name} indices must be non-negative")
            arr.setflags(write=False)
            meta[name] = arr
        if n and meta["class_id"].max() >= stimulus.n_classes:
            raise ValueError("class ids outside the stimulus table")
        if len(channel_names) != data.shape[1]:
            raise ValueError(f"{len(channel_names)} channel names for {data.shape[1]} channels")
        data.setflags(write=False)
        self.data = data
        self.subject = meta["subject"]
        self.class_id = meta["class_id"]
        self.block = meta["block"]
        self.segment = meta["segment"]
        self.sample_rate_hz = float(sample_rate_hz)
        self.channel_names = [str(c) for c in channel_names]
        self.stimulus = stimulus
        self.provenance = str(provenance)

    @classmethod
    def from_trials(cls, trials: Iterable[Trial], channel_names, stimulus, provenance="",
                    n_channels: int | None = None, n_samples: int | None = None,
                    sample_rate_hz: float | None = None) -> "Dataset":
        trials = list(trials)
        if trials:
            rates = {t.sample_rate_hz for t in trials}
            if len(rates) != 1:
                raise ValueError(f"mixed sample rates {sorted(rates)}")
            shapes = {np.shape(t.data) for t in trials}
            if len(shapes) != 1:
                raise ValueError(f"mixed trial shapes {sorted(shapes)}")
            data = np.stack([t.data for t in trials])
            sample_rate_hz = rates.pop()
        else:
            data = np.zeros((0, n_channels or len(channel_names), n_samples or 0), np.float32)
        return cls(
            data,
            [t.subject for t in trials],
            [t.class_id for t in trials],
            [t.block for t in trials],
            [t.segment for t in trials],
            sample_rate_hz if sample_rate_hz is not None else 0.0,
            channel_names,
            stimulus,
            provenance,
        )

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> Trial:
        return Trial(self.data[i], int(self.subject[i]), int(self.class_id[i]),
                     int(self.block[i]), int(self.segment[i]), self.sample_rate_hz)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def trials(self) -> list[Trial]:
        return list(self)

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def subjects(self) -> np.ndarray:
        return np.unique(self.subject)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.data[idx], self.subject[idx], self.class_id[idx], self.block[idx],
                       self.segment[idx], self.sample_rate_hz, self.channel_names,
                       self.stimulus, self.provenance)

    def with_labels(self, class_id) -> "Dataset":
        return Dataset(self.data, self.subject, class_id, self.block, self.segment,
                       self.sample_rate_hz, self.channel_names, self.stimulus, self.provenance)

    def equals(self, other: "Dataset") -> bool:
        """Bit-level equality of data, labels and metadata."""
        return (
            self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _META_FIELDS)
            and self.sample_rate_hz == other.sample_rate_hz
            and self.channel_names == other.channel_names
            and self.stimulus == other.stimulus
            and self.provenance == other.provenance
        )

    def __repr__(self):
        return (f"Dataset(n={len(self)}, C={self.n_channels}, T={self.n_samples}, "
                f"fs={self.sample_rate_hz:g}, subjects={self.subjects.tolist()})")


def _payload(ds: Dataset) -> bytes:
    return ds.data.astype("<f4", copy=False).tobytes(order="C")


def _header(ds: Dataset, digest: str) -> dict:
    return {
        "format": "SSVEPDS1",
        "version": VERSION,
        "dtype": "float32",
        "endianness": "little",
        "shape": list(ds.data.shape),
        "sample_rate_hz": ds.sample_rate_hz,
        "channel_names": ds.channel_names,
        "stimulus": ds.stimulus.to_json(),
        "provenance": ds.provenance,
        "trials": [
            {f: int(getattr(ds, f)[i]) for f in _META_FIELDS} for i in range(len(ds))
        ],
        "payload_sha256": digest,
    }


def save_dataset(ds: Dataset, path) -> str:
    """Write ``ds`` atomically; returns the payload SHA-256 hex digest."""
    path = Path(path)
    payload = _payload(ds)
    digest = hashlib.sha256(payload).hexdigest()
    header = json.dumps(_header(ds, digest), sort_keys=True, separators=(",", ":")).encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".ssvepds-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_LEN.pack(len(header)))
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return digest


def _read(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not an SSVEPDS1 file")
    if len(raw) < len(MAGIC) + _LEN.size:
        raise TruncatedFileError(f"{path}: header length missing")
    (hlen,) = _LEN.unpack_from(raw, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if len(raw) < start + hlen:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"{path}: header is not valid JSON ({exc})") from None
    if not isinstance(header, dict):
        raise HeaderError(f"{path}: header must be a JSON object")
    if header.get("version") != VERSION:
        raise UnsupportedVersionError(f"{path}: version {header.get('version')!r}, expected {VERSION}")
    return header, raw[start + hlen:]


def _check_header(header: dict, payload: bytes, path) -> tuple[int, int, int]:
    try:
        if header["dtype"] != "float32" or header["endianness"] != "little":
            raise HeaderError(f"{path}: unsupported dtype/endianness")
        n, c, t = (int(v) for v in header["shape"])
        if len(header["trials"]) != n:
            raise HeaderError(f"{path}: {len(header['trials'])} trial records for shape {n}")
        expected = header["payload_sha256"]
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"{path}: malformed header ({exc!r})") from None
    nbytes = n * c * t * 4
    if len(payload) < nbytes:
        raise TruncatedFileError(f"{path}: payload has {len(payload)} of {nbytes} bytes")
    if len(payload) > nbytes:
        raise HeaderError(f"{path}: {len(payload) - nbytes} trailing bytes after payload")
    if hashlib.sha256(payload).hexdigest() != expected:
        raise ChecksumMismatchError(f"{path}: payload checksum mismatch")
    return n, c, t


def load_dataset(path) -> Dataset:
    header, payload = _read(path)
    n, c, t = _check_header(header, payload, path)
    data = np.frombuffer(payload, dtype="<f4").reshape(n, c, t).astype(np.float32)
    recs = header["trials"]
    try:
        meta = [[r[f] for r in recs] for f in _META_FIELDS]
        return Dataset(data, *meta, sample_rate_hz=header["sample_rate_hz"],
                       channel_names=header["channel_names"],
                       stimulus=StimulusTable.from_json(header["stimulus"]),
                       provenance=header.get("provenance", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"{path}: inconsistent header ({exc})") from None


def validate_dataset(path) -> dict:
    """Full structural check of a dataset file; returns a short summary."""
    ds = load_dataset(path)
    return {
        "n_trials": len(ds),
        "channels": ds.n_channels,
        "samples": ds.n_samples,
        "sample_rate_hz": ds.sample_rate_hz,
        "subjects": ds.subjects.tolist(),
        "classes": ds.stimulus.n_classes,
    }


def payload_sha256(ds: Dataset) -> str:
    return hashlib.sha256(_payload(ds)).hexdigest()


@dataclass(frozen=True)
class LosoFold:
    test_subject: int
    train_indices: np.ndarray
    test_indices: np.ndarray


def loso_folds(ds: Dataset) -> list[LosoFold]:
    """One fold per subject, ordered by subject index."""
    subjects = ds.subjects
    if len(subjects) < 2:
        raise ValueError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")
    folds = []
    for s in subjects:
        test = np.flatnonzero(ds.subject == s)
        train = np.flatnonzero(ds.subject != s)
        folds.append(LosoFold(int(s), train, test))
    return folds


def check_fold(ds: Dataset, fold: LosoFold) -> None:
    """Raise if ``fold`` is not a valid leave-one-subject-out partition of ``ds``."""
    train, test = set(fold.train_indices.tolist()), set(fold.test_indices.tolist())
    if train & test:
        raise ValueError("train and test indices overlap")
    if train | test != set(range(len(ds))):
        raise ValueError("fold does not cover every trial")
    if np.any(ds.subject[fold.train_indices] == fold.test_subject):
        raise ValueError(f"subject {fold.test_subject} appears in the training indices")
    if np.any(ds.subject[fold.test_indices] != fold.test_subject):
        raise ValueError("test indices contain other subjects")
