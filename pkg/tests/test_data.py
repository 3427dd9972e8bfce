import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pepkit import rng
from pepkit.data import (Dataset, EmptyDatasetError, IdxCountMismatchError, IdxMagicError,
                         IdxTruncatedError, SplitSpec, load_idx, parse_descriptor, split,
                         synth_blobs, write_idx)
from pepkit.errors import ConfigError, ParseError


def idx_images(n, rows, cols, pixels, magic=0x00000803):
    return struct.pack(">4I", magic, n, rows, cols) + bytes(pixels)


def idx_labels(labels, magic=0x00000801):
    return struct.pack(">2I", magic, len(labels)) + bytes(labels)


class TestRng:
    def test_streams_are_reproducible_and_distinct(self):
        a = rng.stream(7, "x").standard_normal(4)
        assert a.tobytes() == rng.stream(7, "x").standard_normal(4).tobytes()
        assert not np.array_equal(a, rng.stream(7, "y").standard_normal(4))
        assert not np.array_equal(a, rng.stream(8, "x").standard_normal(4))

    def test_derive_seed_is_sha256_prefix(self):
        import hashlib
        digest = hashlib.sha256(b"3/train").digest()
        assert rng.derive_seed(3, "train") == int.from_bytes(digest[:8], "little")


class TestIdx:
    def test_hand_encoded_two_images(self, tmp_path):
        img, lbl = tmp_path / "img", tmp_path / "lbl"
        img.write_bytes(idx_images(2, 2, 2, [0, 51, 102, 255, 255, 0, 1, 2]))
        lbl.write_bytes(idx_labels([3, 7]))
        data = load_idx(img, lbl)
        assert data.features.shape == (2, 4)
        np.testing.assert_array_equal(data.features[0], [0.0, 0.2, 0.4, 1.0])
        np.testing.assert_array_equal(data.features[1], [1.0, 0.0, 1 / 255, 2 / 255])
        np.testing.assert_array_equal(data.labels, [3, 7])

    def test_labels_with_image_magic(self, tmp_path):
        img, lbl = tmp_path / "img", tmp_path / "lbl"
        img.write_bytes(idx_images(1, 1, 1, [0]))
        lbl.write_bytes(idx_labels([0], magic=0x00000803))
        with pytest.raises(IdxMagicError):
            load_idx(img, lbl)

    def test_zero_images(self, tmp_path):
        img, lbl = tmp_path / "img", tmp_path / "lbl"
        img.write_bytes(idx_images(0, 2, 2, []))
        lbl.write_bytes(idx_labels([]))
        with pytest.raises(EmptyDatasetError):
            load_idx(img, lbl)

    def test_truncated(self, tmp_path):
        img, lbl = tmp_path / "img", tmp_path / "lbl"
        img.write_bytes(idx_images(2, 2, 2, [0] * 7))
        lbl.write_bytes(idx_labels([0, 1]))
        with pytest.raises(IdxTruncatedError):
            load_idx(img, lbl)

    def test_count_mismatch(self, tmp_path):
        img, lbl = tmp_path / "img", tmp_path / "lbl"
        img.write_bytes(idx_images(2, 1, 1, [0, 1]))
        lbl.write_bytes(idx_labels([0, 1, 1]))
        with pytest.raises(IdxCountMismatchError):
            load_idx(img, lbl)

    def test_errors_are_distinct_parse_errors(self):
        kinds = {IdxMagicError, IdxTruncatedError, IdxCountMismatchError, EmptyDatasetError}
        assert len(kinds) == 4 and all(issubclass(k, ParseError) for k in kinds)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
    def test_round_trip(self, n, rows, cols, seed):
        import tempfile
        from pathlib import Path
        g = np.random.default_rng(seed)
        data = Dataset(g.integers(0, 256, (n, rows * cols)) / 255.0, g.integers(0, 10, n))
        with tempfile.TemporaryDirectory() as tmp:
            img, lbl = Path(tmp) / "i", Path(tmp) / "l"
            write_idx(data, img, lbl, (rows, cols))
            again = load_idx(img, lbl)
        np.testing.assert_array_equal(again.features, data.features)
        np.testing.assert_array_equal(again.labels, data.labels)


class TestBlobs:
    def test_same_seed_identical(self):
        a, b = synth_blobs(4, 20, 3, 0.7, 11), synth_blobs(4, 20, 3, 0.7, 11)
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_balanced(self):
        d = synth_blobs(3, 100, 5, 1.0, 0)
        np.testing.assert_array_equal(np.bincount(d.labels), [100, 100, 100])

    def test_small_spread_centroid_classifier_perfect(self):
        d = synth_blobs(6, 50, 4, 1e-3, 5)
        centroids = np.stack([d.features[d.labels == k].mean(axis=0) for k in range(6)])
        dist = ((d.features[:, None, :] - centroids[None]) ** 2).sum(-1)
        assert np.all(dist.argmin(axis=1) == d.labels)

    def test_preconditions(self):
        with pytest.raises(ConfigError):
            synth_blobs(1, 10, 2, 1.0, 0)
        with pytest.raises(ConfigError):
            synth_blobs(2, 10, 2, 0.0, 0)

    def test_select_classes_keeps_labels(self):
        d = synth_blobs(5, 10, 2, 1.0, 0).select_classes([1, 3])
        assert set(d.labels.tolist()) == {1, 3} and len(d) == 20


class TestSplit:
    def test_sizes_80_10_10(self):
        d = split(synth_blobs(2, 50, 2, 1.0, 0), SplitSpec((0.8, 0.1, 0.1), 3))
        assert [len(d.indices(s)) for s in ("train", "validation", "test")] == [80, 10, 10]

    def test_deterministic(self):
        base = synth_blobs(2, 50, 2, 1.0, 0)
        a, b = split(base, SplitSpec((0.6, 0.2, 0.2), 9)), split(base, SplitSpec((0.6, 0.2, 0.2), 9))
        np.testing.assert_array_equal(a.split_tags, b.split_tags)

    def test_empty_split_rejected(self):
        with pytest.raises(ConfigError):
            split(synth_blobs(2, 2, 2, 1.0, 0), SplitSpec((0.9, 0.05, 0.05), 0))

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            SplitSpec((0.5, 0.3, 0.3), 0)

    @given(st.integers(3, 400), st.floats(0.05, 0.4), st.floats(0.05, 0.4), st.integers(0, 2**32))
    def test_partition(self, n, fv, ft, seed):
        data = Dataset(np.zeros((n, 1)), np.arange(n) % 2)
        fr = (1 - fv - ft, fv, ft)
        try:
            d = split(data, SplitSpec(fr, seed))
        except ConfigError:
            assert min(int(np.floor(f * n + 1e-9)) for f in fr[1:]) == 0
            return
        parts = [set(d.indices(s).tolist()) for s in ("train", "validation", "test")]
        assert set().union(*parts) == set(range(n))
        assert sum(len(p) for p in parts) == n
        assert len(parts[1]) == int(np.floor(fv * n + 1e-9))


class TestDescriptor:
    def test_blobs_with_class_filter(self):
        d = parse_descriptor("blobs:10,20,3,1.0,4:5-9")
        assert sorted(set(d.labels.tolist())) == [5, 6, 7, 8, 9]
        np.testing.assert_array_equal(parse_descriptor("blobs:10,20,3,1.0,4:2+4").labels[[0, -1]], [2, 4])

    def test_bad_descriptors(self):
        with pytest.raises(ConfigError):
            parse_descriptor("csv:foo")
        with pytest.raises(ConfigError):
            parse_descriptor("blobs:1,2,3")

    def test_missing_idx_file(self, tmp_path):
        with pytest.raises(ParseError):
            parse_descriptor(f"idx:{tmp_path / 'a'},{tmp_path / 'b'}")
