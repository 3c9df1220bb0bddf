import struct

import numpy as np
import numpy.testing as npt
import pytest

from lehi.data import (
    Dataset,
    ParseError,
    Standardizer,
    load_csv,
    load_idx,
    minibatches,
    one_hot,
    split,
    synthetic_regression,
)
from lehi.numcore import SeededRng


def write_csv(path, rows, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def write_idx_pair(tmp_path, images, labels):
    img_path = tmp_path / "imgs.idx"
    lab_path = tmp_path / "labs.idx"
    n, rows, cols = images.shape
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())
    with open(lab_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(labels.astype(np.uint8).tobytes())
    return str(img_path), str(lab_path)


class TestLoadCsv:
    def test_toy_file(self, tmp_path):
        path = str(tmp_path / "toy.csv")
        write_csv(path, [[1, 2, 3], [4, 5, 6], [7, 8, 9]], header="a,b,c")
        ds = load_csv(path, feature_columns=[0, 1], target_columns=[2])
        assert ds.n == 3
        npt.assert_array_equal(ds.features, [[1, 4, 7], [2, 5, 8]])
        npt.assert_array_equal(ds.targets, [[3, 6, 9]])

    def test_protein_layout(self, tmp_path):
        # target-first layout with 9 feature columns, as in the benchmark's
        # tertiary-structure regression file
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(50, 10)).round(4).tolist()
        path = str(tmp_path / "casp.csv")
        write_csv(path, rows, header="RMSD,F1,F2,F3,F4,F5,F6,F7,F8,F9")
        ds = load_csv(path, feature_columns=list(range(1, 10)), target_columns=[0])
        assert ds.features.shape == (9, 50)
        assert ds.targets.shape == (1, 50)

    def test_row_order_preserved(self, tmp_path):
        path = str(tmp_path / "ordered.csv")
        write_csv(path, [[i, i * 10] for i in range(20)], header=None)
        ds = load_csv(path, feature_columns=[0], target_columns=[1], header=False)
        npt.assert_array_equal(ds.features[0], np.arange(20))

    def test_malformed_row_names_index(self, tmp_path):
        path = str(tmp_path / "bad.csv")
        write_csv(path, [[1, 2], ["x", 4]], header="a,b")
        with pytest.raises(ParseError, match="row 2"):
            load_csv(path, feature_columns=[0], target_columns=[1])

    def test_ragged_row_rejected(self, tmp_path):
        path = str(tmp_path / "ragged.csv")
        with open(path, "w") as fh:
            fh.write("1,2\n3,4,5\n")
        with pytest.raises(ParseError, match="expected 2 fields"):
            load_csv(path, feature_columns=[0], target_columns=[1], header=False)

    def test_classification_one_hot(self, tmp_path):
        path = str(tmp_path / "cls.csv")
        write_csv(path, [[0.5, 0], [0.7, 2], [0.1, 1]], header=None)
        ds = load_csv(
            path, feature_columns=[0], target_columns=[1], header=False,
            task="classification",
        )
        assert ds.class_count == 3
        npt.assert_array_equal(ds.targets.sum(axis=0), np.ones(3))


class TestIdx:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, size=(12, 4, 3))
        labels = rng.integers(0, 10, size=12)
        img_path, lab_path = write_idx_pair(tmp_path, images, labels)
        ds = load_idx(img_path, lab_path)
        assert ds.features.shape == (12, 12)
        assert ds.targets.shape == (10, 12)
        npt.assert_allclose(
            ds.features[:, 0], images[0].ravel() / 255.0, atol=1e-12
        )
        npt.assert_array_equal(ds.targets.argmax(axis=0), labels)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">IIII", 0x12345678, 1, 1, 1))
        with pytest.raises(ParseError, match="magic"):
            load_idx(str(path), str(path))


class TestSplit:
    def make(self, n=10):
        return Dataset(np.arange(n, dtype=float).reshape(1, n) , np.zeros((1, n)))

    def test_sizes(self):
        train, test = split(self.make(10), 0.8, SeededRng(0))
        assert (train.n, test.n) == (8, 2)

    def test_deterministic(self):
        a_train, a_test = split(self.make(50), 0.8, SeededRng(3))
        b_train, b_test = split(self.make(50), 0.8, SeededRng(3))
        npt.assert_array_equal(a_train.features, b_train.features)
        npt.assert_array_equal(a_test.features, b_test.features)

    def test_disjoint_exhaustive(self):
        train, test = split(self.make(37), 0.8, SeededRng(5))
        combined = sorted(train.features.ravel().tolist() + test.features.ravel().tolist())
        assert combined == list(range(37))

    def test_fraction_validated(self):
        with pytest.raises(ValueError):
            split(self.make(), 1.0, SeededRng(0))


class TestSyntheticRegression:
    def test_noise_free_is_deterministic_function(self):
        ds1 = synthetic_regression(SeededRng(0), 100, 5, noise_std=0.0)
        ds2 = synthetic_regression(SeededRng(0), 100, 5, noise_std=0.0)
        npt.assert_array_equal(ds1.targets, ds2.targets)
        assert np.abs(ds1.targets).max() <= 1.0  # sine range

    def test_fingerprint_reproducible(self):
        a = synthetic_regression(SeededRng(7), 200, 9, noise_std=0.1)
        b = synthetic_regression(SeededRng(7), 200, 9, noise_std=0.1)
        c = synthetic_regression(SeededRng(8), 200, 9, noise_std=0.1)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()

    def test_shapes(self):
        ds = synthetic_regression(SeededRng(1), 64, 9, noise_std=0.1)
        assert ds.features.shape == (9, 64)
        assert ds.targets.shape == (1, 64)


class TestStandardizer:
    def test_train_statistics(self):
        rng = SeededRng(2)
        values = rng.normal(6, 500) * 3.0 + 2.0
        std = Standardizer.fit(values)
        transformed = std.transform(values)
        assert np.abs(transformed.mean(axis=1)).max() < 1e-10
        assert np.abs(transformed.std(axis=1) - 1.0).max() < 1e-10

    def test_test_transform_uses_train_stats(self):
        train = SeededRng(3).normal(2, 100) * 4.0
        test = SeededRng(4).normal(2, 50) * 4.0 + 10.0
        std = Standardizer.fit(train)
        expected = (test - train.mean(axis=1, keepdims=True)) / train.std(
            axis=1, keepdims=True
        )
        npt.assert_allclose(std.transform(test), expected)

    def test_constant_feature_flagged(self):
        values = np.vstack([np.ones(10), np.arange(10.0)])
        std = Standardizer.fit(values)
        assert std.constant_features == [0]
        assert std.std[0, 0] == 1.0
        assert np.isfinite(std.transform(values)).all()


class TestMinibatches:
    def make(self, n):
        return Dataset(np.zeros((2, n)), np.zeros((1, n)))

    def test_sizes_with_partial_tail(self):
        batches = minibatches(self.make(10), 4, SeededRng(0), epoch=0)
        assert [len(b) for b in batches] == [4, 4, 2]

    def test_pure_function_of_seed_and_epoch(self):
        rng = SeededRng(6)
        rng.normal(3, 3)  # consumed state must not matter
        a = minibatches(self.make(20), 6, rng, epoch=3)
        b = minibatches(self.make(20), 6, SeededRng(6), epoch=3)
        for x, y in zip(a, b):
            npt.assert_array_equal(x, y)

    def test_epochs_differ(self):
        a = np.concatenate(minibatches(self.make(30), 7, SeededRng(1), epoch=0))
        b = np.concatenate(minibatches(self.make(30), 7, SeededRng(1), epoch=1))
        assert not np.array_equal(a, b)

    def test_concatenation_is_permutation(self):
        flat = np.concatenate(minibatches(self.make(53), 8, SeededRng(2), epoch=5))
        assert sorted(flat.tolist()) == list(range(53))

    def test_batch_size_validated(self):
        with pytest.raises(ValueError):
            minibatches(self.make(5), 0, SeededRng(0), epoch=0)


class TestOneHot:
    def test_basic(self):
        out = one_hot(np.array([0, 2, 1]), 3)
        npt.assert_array_equal(out, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            one_hot(np.array([3]), 3)
