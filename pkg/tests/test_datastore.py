"""On-disk format, the Dataset container and leave-one-subject-out folds."""
import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from helpers import make_dataset
from ssvepnet.datastore import (
    MAGIC,
    BadMagicError,
    ChecksumMismatchError,
    Dataset,
    DatasetFormatError,
    HeaderError,
    TruncatedFileError,
    UnsupportedVersionError,
    check_fold,
    load_dataset,
    loso_folds,
    payload_sha256,
    save_dataset,
    validate_dataset,
)
from ssvepnet.stimulus import StimulusTable


@st.composite
def datasets(draw):
    n = draw(st.integers(0, 6))
    C = draw(st.integers(1, 3))
    T = draw(st.integers(1, 8))
    K = draw(st.integers(1, 4))
    data = draw(hnp.arrays(np.float32, (n, C, T),
                           elements=st.floats(-1e6, 1e6, width=32, allow_subnormal=True)))
    ints = lambda hi: st.lists(st.integers(0, hi), min_size=n, max_size=n)  # noqa: E731
    stim = StimulusTable(tuple(5.0 + 1.5 * k for k in range(K)),
                         tuple(draw(st.floats(0, 6.28)) for _ in range(K)))
    names = [draw(st.text(min_size=1, max_size=5)) for _ in range(C)]
    return Dataset(data, draw(ints(20)), draw(ints(K - 1)), draw(ints(20)), draw(ints(3)),
                   draw(st.sampled_from([256.0, 2048.0, 100.5])), names, stim,
                   draw(st.text(max_size=20)))


class TestDatasetContainer:
    def test_rejects_nan(self):
        rng = np.random.default_rng(0)
        ds = make_dataset(rng)
        bad = ds.data.copy()
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ds.__class__(bad, ds.subject, ds.class_id, ds.block, ds.segment, 256.0,
                         ds.channel_names, ds.stimulus)

    def test_rejects_unknown_class(self):
        rng = np.random.default_rng(0)
        ds = make_dataset(rng, K=3)
        with pytest.raises(ValueError):
            ds.with_labels(np.full(len(ds), 3))

    def test_trial_view(self):
        ds = make_dataset(np.random.default_rng(0))
        t = ds[2]
        assert (t.subject, t.class_id) == (int(ds.subject[2]), int(ds.class_id[2]))
        np.testing.assert_array_equal(t.data, ds.data[2])

    def test_immutable(self):
        ds = make_dataset(np.random.default_rng(0))
        with pytest.raises(ValueError):
            ds.data[0, 0, 0] = 1.0


class TestFileFormat:
    def test_two_trial_round_trip(self, tmp_path):
        ds = make_dataset(np.random.default_rng(3), n=2)
        digest = save_dataset(ds, tmp_path / "a.ssvep")
        back = load_dataset(tmp_path / "a.ssvep")
        assert back.equals(ds)
        assert digest == payload_sha256(back)

    @settings(max_examples=40, deadline=None)
    @given(ds=datasets())
    def test_round_trip_bit_exact(self, tmp_path_factory, ds):
        path = tmp_path_factory.mktemp("rt") / "d.ssvep"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.equals(ds)
        assert back.data.tobytes() == ds.data.tobytes()

    def test_layout(self, tmp_path):
        ds = make_dataset(np.random.default_rng(4), n=3, C=2, T=5)
        save_dataset(ds, tmp_path / "x")
        raw = (tmp_path / "x").read_bytes()
        assert raw[:8] == MAGIC == b"SSVEPDS1"
        (hlen,) = struct.unpack_from("<Q", raw, 8)
        header = json.loads(raw[16:16 + hlen])
        payload = raw[16 + hlen:]
        assert header["shape"] == [3, 2, 5] and header["endianness"] == "little"
        assert header["payload_sha256"] == hashlib.sha256(payload).hexdigest()
        np.testing.assert_array_equal(np.frombuffer(payload, "<f4").reshape(3, 2, 5), ds.data)

    @pytest.fixture
    def saved(self, tmp_path):
        path = tmp_path / "d.ssvep"
        save_dataset(make_dataset(np.random.default_rng(5)), path)
        return path

    def test_bad_magic(self, saved):
        raw = bytearray(saved.read_bytes())
        raw[0:4] = b"XXXX"
        saved.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            load_dataset(saved)

    def test_truncated_payload(self, saved):
        saved.write_bytes(saved.read_bytes()[:-3])
        with pytest.raises(TruncatedFileError):
            load_dataset(saved)

    def test_truncated_header(self, saved):
        saved.write_bytes(saved.read_bytes()[:20])
        with pytest.raises(TruncatedFileError):
            load_dataset(saved)

    def test_version_mismatch(self, saved):
        raw = saved.read_bytes()
        (hlen,) = struct.unpack_from("<Q", raw, 8)
        header = json.loads(raw[16:16 + hlen])
        header["version"] = 99
        h = json.dumps(header).encode()
        saved.write_bytes(raw[:8] + struct.pack("<Q", len(h)) + h + raw[16 + hlen:])
        with pytest.raises(UnsupportedVersionError):
            load_dataset(saved)

    def test_corrupt_payload(self, saved):
        raw = bytearray(saved.read_bytes())
        raw[-1] ^= 0xFF
        saved.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatchError):
            load_dataset(saved)

    def test_garbage_header(self, saved):
        raw = saved.read_bytes()
        saved.write_bytes(raw[:16] + b"\xff" * 10 + raw[26:])
        with pytest.raises(HeaderError):
            load_dataset(saved)

    def test_errors_are_distinct(self):
        kinds = {BadMagicError, UnsupportedVersionError, TruncatedFileError}
        assert len(kinds) == 3 and all(issubclass(k, DatasetFormatError) for k in kinds)

    def test_validate_summary(self, saved):
        info = validate_dataset(saved)
        assert info["n_trials"] == 6 and info["subjects"] == [0, 1, 2]

    def test_empty_file(self, tmp_path):
        (tmp_path / "e").write_bytes(b"")
        with pytest.raises(BadMagicError):
            load_dataset(tmp_path / "e")


class TestFolds:
    def test_two_subjects_one_trial(self):
        ds = make_dataset(np.random.default_rng(0), n=2, subjects=(0, 1))
        folds = loso_folds(ds)
        assert [f.test_subject for f in folds] == [0, 1]
        assert folds[0].train_indices.tolist() == [1] and folds[0].test_indices.tolist() == [0]
        assert folds[1].train_indices.tolist() == [0] and folds[1].test_indices.tolist() == [1]

    def test_single_subject(self):
        ds = make_dataset(np.random.default_rng(0), n=3, subjects=(4,))
        with pytest.raises(ValueError):
            loso_folds(ds)

    @settings(max_examples=50, deadline=None)
    @given(subjects=st.lists(st.integers(0, 9), min_size=2, max_size=40))
    def test_partition_invariants(self, subjects):
        if len(set(subjects)) < 2:
            subjects = subjects + [max(subjects) + 1]
        ds = make_dataset(np.random.default_rng(0), n=len(subjects), T=2, subjects=subjects)
        folds = loso_folds(ds)
        assert [f.test_subject for f in folds] == sorted(set(subjects))
        seen = np.concatenate([f.test_indices for f in folds])
        np.testing.assert_array_equal(np.sort(seen), np.arange(len(ds)))
        for f in folds:
            check_fold(ds, f)

    def test_check_fold_detects_leak(self):
        ds = make_dataset(np.random.default_rng(0), n=6)
        f = loso_folds(ds)[0]
        leaky = type(f)(f.test_subject, np.append(f.train_indices, f.test_indices[0]), f.test_indices)
        with pytest.raises(ValueError):
            check_fold(ds, leaky)

    def test_ten_subject_test_size(self, stimulus):
        # 180 trials x 4 segments per held-out subject at the standard protocol
        n_per = 15 * 12 * 4
        subj = np.repeat(np.arange(10), n_per)
        ds = Dataset(np.zeros((subj.size, 1, 1), np.float32), subj, np.zeros(subj.size, int),
                     np.zeros(subj.size, int), np.zeros(subj.size, int), 256.0, ["c"], stimulus)
        assert all(len(f.test_indices) == 720 for f in loso_folds(ds))
