import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from evogan.autodiff import DomainError
from evogan.data import (
    ConsistencyError,
    Dataset,
    FormatError,
    gen_gaussian_mixture,
    load_idx,
    make_rng,
    mix_universum,
    sample_batch,
    split,
    write_idx,
)
from evogan.engine import TrainConfig, train_classifier
from evogan.losses import SettingParams
from evogan.models import Discriminator

DATA = Path(__file__).parent / "data"


def write_raw_idx(path, magic, dims, payload):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(">" + "I" * len(dims), *dims))
        fh.write(payload)


class TestMixture:
    def test_shape_and_balance(self):
        ds = gen_gaussian_mixture(2, 10, 2, 3.0, seed=0)
        assert ds.X.shape == (20, 2)
        assert_array_equal(np.bincount(ds.y), [0, 10, 10])

    def test_deterministic(self):
        a = gen_gaussian_mixture(3, 50, 4, 2.0, seed=7)
        b = gen_gaussian_mixture(3, 50, 4, 2.0, seed=7)
        assert a.X.tobytes() == b.X.tobytes()

    def test_invalid(self):
        with pytest.raises(ValueError):
            gen_gaussian_mixture(1, 10, 2, 1.0, 0)
        with pytest.raises(ValueError):
            gen_gaussian_mixture(3, 0, 2, 1.0, 0)

    def test_class_means_at_requested_distance(self):
        for L, d in ((3, 10), (5, 2)):
            ds = gen_gaussian_mixture(L, 4000, d, 4.0, seed=1)
            means = np.array([ds.X[ds.y == k].mean(axis=0) for k in (1, 2)])
            assert abs(np.linalg.norm(means[0] - means[1]) - 4.0) < 0.15

    def test_well_separated_is_linearly_separable(self):
        ds = gen_gaussian_mixture(2, 50, 2, 10.0, seed=0)
        model = Discriminator.create(2, 2, hidden=(), seed=0)
        cfg = TrainConfig(numiter=500, lr=1e-2, log_interval=500)
        model, log = train_classifier(SettingParams("inductive"), ds.labeled(), None, cfg, model)
        assert log.final.train_acc == 1.0


class TestSplit:
    def test_disjoint_and_sized(self):
        ds = split(gen_gaussian_mixture(3, 100, 2, 2.0, 0), 30, 200, seed=1)
        assert len(ds.train_idx) == 30 and len(ds.test_idx) == 200
        assert np.intersect1d(ds.train_idx, ds.test_idx).size == 0

    def test_rest_goes_to_test(self):
        ds = split(gen_gaussian_mixture(2, 10, 2, 2.0, 0), 5)
        assert len(ds.test_idx) == 15

    def test_stratified(self):
        ds = split(gen_gaussian_mixture(3, 100, 2, 2.0, 0), 30, stratified=True, seed=4)
        assert_array_equal(np.bincount(ds.y_train), [0, 10, 10, 10])
        with pytest.raises(DomainError):
            split(ds, 31, stratified=True)

    def test_too_large(self):
        with pytest.raises(DomainError):
            split(gen_gaussian_mixture(2, 10, 2, 2.0, 0), 15, 10)

    def test_overlap_rejected(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((3, 2)), [1, 2, 1], 2, train_idx=[0, 1], test_idx=[1, 2])


class TestMixUniversum:
    def setup_method(self):
        self.ds = Dataset(np.array([[0.0, 2.0], [2.0, 0.0]]), [1, 2], 2)

    def test_identity_ratio(self):
        out = mix_universum(self.ds, 50, 1.0, seed=0).Zstar.values
        assert all(any((row == x).all() for x in self.ds.X) for row in out)

    def test_midpoint(self):
        out = mix_universum(self.ds, 10, 0.5, seed=0).Zstar.values
        assert_array_equal(out, np.ones((10, 2)))

    def test_weighted(self):
        ds = gen_gaussian_mixture(2, 20, 3, 2.0, seed=0)
        out = mix_universum(ds, 200, 0.9, seed=3).Zstar.values
        # each output is 0.9*x_i + 0.1*x_j for distinct rows i, j
        X = ds.X_train
        combos = 0.9 * X[:, None, :] + 0.1 * X[None, :, :]
        dist = np.linalg.norm(combos[None] - out[:, None, None, :], axis=-1)
        n = len(X)
        dist[:, np.arange(n), np.arange(n)] = np.inf
        assert dist.reshape(len(out), -1).min(axis=1).max() < 1e-12

    def test_convex_hull_bounds(self):
        ds = gen_gaussian_mixture(3, 30, 4, 2.0, seed=0)
        out = mix_universum(ds, 500, 0.7, seed=1).Zstar.values
        assert np.all(out >= ds.X.min(axis=0) - 1e-12)
        assert np.all(out <= ds.X.max(axis=0) + 1e-12)

    def test_validation(self):
        with pytest.raises(DomainError):
            mix_universum(self.ds, 10, 0.4, seed=0)
        with pytest.raises(DomainError):
            mix_universum(Dataset(np.zeros((1, 2)), [1], 2), 10, 0.5, seed=0)


class TestIdx:
    def test_accepts_four_images(self, tmp_path):
        write_raw_idx(tmp_path / "img", 0x803, (4, 2, 2), bytes(range(16)))
        write_raw_idx(tmp_path / "lab", 0x801, (4,), bytes([0, 1, 2, 9]))
        ds = load_idx(tmp_path / "img", tmp_path / "lab")
        assert ds.X.shape == (4, 4)
        assert_array_equal(ds.y, [1, 2, 3, 10])
        assert ds.L == 10

    def test_pixel_scaling(self, tmp_path):
        write_raw_idx(tmp_path / "img", 0x803, (1, 1, 2), bytes([255, 0]))
        write_raw_idx(tmp_path / "lab", 0x801, (1,), bytes([1]))
        assert_array_equal(load_idx(tmp_path / "img", tmp_path / "lab").X, [[1.0, 0.0]])

    def test_wrong_magic_reports_value(self, tmp_path):
        write_raw_idx(tmp_path / "img", 0x801, (1,), bytes([0]))
        write_raw_idx(tmp_path / "lab", 0x801, (1,), bytes([0]))
        with pytest.raises(FormatError, match="0x00000801"):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_count_mismatch(self, tmp_path):
        write_raw_idx(tmp_path / "img", 0x803, (2, 1, 1), bytes([0, 1]))
        write_raw_idx(tmp_path / "lab", 0x801, (3,), bytes([0, 1, 1]))
        with pytest.raises(ConsistencyError):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_truncated(self, tmp_path):
        write_raw_idx(tmp_path / "img", 0x803, (2, 2, 2), bytes(3))
        write_raw_idx(tmp_path / "lab", 0x801, (2,), bytes(2))
        with pytest.raises(FormatError):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_gzip_and_round_trip(self, tmp_path):
        pixels = np.random.default_rng(0).integers(0, 256, size=(6, 3, 2), dtype=np.uint8)
        with gzip.open(tmp_path / "img.gz", "wb") as fh:
            fh.write(struct.pack(">IIII", 0x803, 6, 3, 2) + pixels.tobytes())
        write_raw_idx(tmp_path / "lab", 0x801, (6,), bytes([0, 1, 2, 0, 1, 2]))
        ds = load_idx(tmp_path / "img.gz", tmp_path / "lab")
        write_idx(ds, tmp_path / "img2", tmp_path / "lab2")
        back = load_idx(tmp_path / "img2", tmp_path / "lab2")
        assert back.X.tobytes() == ds.X.tobytes()
        assert_array_equal(back.y, ds.y)
        assert (tmp_path / "img2").read_bytes()[16:] == pixels.tobytes()

    def test_bundled_mnist_subset(self):
        ds = load_idx(DATA / "mnist5k-images-idx3-ubyte.gz", DATA / "mnist5k-labels-idx1-ubyte.gz")
        assert ds.X.shape == (5000, 784)
        assert ds.L == 10
        assert_array_equal(np.bincount(ds.y)[1:], [500] * 10)
        assert 0.0 <= ds.X.min() and ds.X.max() == 1.0


class TestBatches:
    def setup_method(self):
        self.ds = split(gen_gaussian_mixture(2, 50, 2, 2.0, 0), 40, seed=0)

    def test_full_batch_is_permutation(self):
        b = sample_batch(self.ds, 40, make_rng(0))
        assert_array_equal(np.sort(b.Z.values[:, 0]), np.sort(self.ds.X_train[:, 0]))

    def test_same_state_same_batch(self):
        a = sample_batch(self.ds, 8, make_rng(5))
        b = sample_batch(self.ds, 8, make_rng(5))
        assert_array_equal(a.Z.values, b.Z.values)

    def test_successive_batches_differ(self):
        rng = make_rng(1)
        same = sum(np.array_equal(sample_batch(self.ds, 8, rng).Z.values,
                                  sample_batch(self.ds, 8, rng).Z.values) for _ in range(100))
        assert same == 0

    def test_too_large(self):
        with pytest.raises(DomainError):
            sample_batch(self.ds, 41, make_rng(0))
