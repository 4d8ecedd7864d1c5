import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradcf import data, net


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------- CSV

def test_csv_label_mapping_first_appearance(tmp_path):
    p = write_csv(tmp_path / "t.csv", "a,b,decision\n1,2,approve\n3,4,refuse\n5,6,approve\n")
    ds = data.load_csv(p, label_column="decision")
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])
    assert ds.label_names == ["approve", "refuse"]
    np.testing.assert_array_equal(ds.instances[1].values, [3.0, 4.0])


def test_csv_non_numeric_cell_names_location(tmp_path):
    p = write_csv(tmp_path / "t.csv", "a,b,y\n1,2,0\n1,abc,1\n")
    with pytest.raises(data.DataFormatError, match=r"row 3.*'b'"):
        data.load_csv(p, label_column="y")


def test_csv_22_feature_file(tmp_path):
    header = ",".join(f"f{i}" for i in range(22)) + ",RiskPerformance"
    row = ",".join(str(i) for i in range(22)) + ",Bad"
    p = write_csv(tmp_path / "heloc.csv", header + "\n" + row + "\n" + row + "\n")
    ds = data.load_csv(p, label_column="RiskPerformance")
    assert ds.instances[0].d == 22


def test_csv_missing_label_column(tmp_path):
    p = write_csv(tmp_path / "t.csv", "a,b\n1,2\n")
    with pytest.raises(data.DataFormatError, match="'y'"):
        data.load_csv(p, label_column="y")


def test_csv_empty_file(tmp_path):
    p = write_csv(tmp_path / "t.csv", "")
    with pytest.raises(data.DataFormatError, match="empty"):
        data.load_csv(p, label_column="y")


def test_csv_header_only(tmp_path):
    p = write_csv(tmp_path / "t.csv", "a,b,y\n")
    with pytest.raises(data.DataFormatError):
        data.load_csv(p, label_column="y")


# ---------------------------------------------------------------- normalization

def make_ds(rows, labels=None):
    inst = [net.FeatureVector(values=np.asarray(r, dtype=float)) for r in rows]
    return data.Dataset(instances=inst, labels=labels or [0] * len(rows))


def test_normalizer_affine_map():
    ds = make_ds([[2.0], [4.0], [6.0]])
    norm = data.fit_normalizer(ds)
    out = data.apply_normalizer(ds, norm)
    np.testing.assert_allclose(out.matrix.ravel(), [0.0, 0.5, 1.0])


def test_normalizer_constant_column():
    ds = make_ds([[5.0, 1.0], [5.0, 3.0]])
    out = data.apply_normalizer(ds, data.fit_normalizer(ds))
    np.testing.assert_array_equal(out.matrix[:, 0], [0.0, 0.0])


def test_normalizer_test_values_not_clamped():
    train = make_ds([[2.0], [6.0]])
    norm = data.fit_normalizer(train)
    test = data.apply_normalizer(make_ds([[8.0]]), norm)
    assert test.instances[0].values[0] == pytest.approx(1.5)
    # out-of-range result is reportable via the bounds predicate
    assert not test.instances[0].within_bounds()[0]


@settings(max_examples=30)
@given(
    arrays(
        np.float64,
        st.tuples(st.integers(2, 8), st.integers(1, 5)),
        elements=st.floats(-1e6, 1e6),
    )
)
def test_normalized_train_in_unit_box(m):
    ds = make_ds(list(m))
    out = data.apply_normalizer(ds, data.fit_normalizer(ds))
    vals = out.matrix
    assert (vals >= 0.0).all() and (vals <= 1.0).all()


# ---------------------------------------------------------------- IDX

def write_idx_pair(tmp_path, pixels, labels, rows=28, cols=28, label_count=None, image_magic=2051):
    """pixels: (n, rows*cols) uint8."""
    ip = tmp_path / "imgs.idx"
    lp = tmp_path / "labels.idx"
    n = len(pixels)
    with open(ip, "wb") as fh:
        fh.write(struct.pack(">IIII", image_magic, n, rows, cols))
        fh.write(np.asarray(pixels, dtype=np.uint8).tobytes())
    with open(lp, "wb") as fh:
        fh.write(struct.pack(">II", 2049, n if label_count is None else label_count))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())
    return ip, lp


def test_idx_saturated_image_scales_to_ones(tmp_path):
    ip, lp = write_idx_pair(tmp_path, np.full((1, 784), 255), [7])
    ds = data.load_idx(ip, lp)
    assert len(ds) == 1
    assert ds.labels[0] == 7
    assert ds.instances[0].image_shape == (28, 28)
    np.testing.assert_array_equal(ds.instances[0].values, np.ones(784))


def test_idx_count_mismatch(tmp_path):
    ip, lp = write_idx_pair(tmp_path, np.zeros((1, 784)), [0, 1], label_count=2)
    with pytest.raises(data.DataFormatError, match="count"):
        data.load_idx(ip, lp)


def test_idx_bad_magic(tmp_path):
    ip, lp = write_idx_pair(tmp_path, np.zeros((1, 784)), [0], image_magic=1234)
    with pytest.raises(data.DataFormatError, match="magic"):
        data.load_idx(ip, lp)


def test_idx_truncated_payload(tmp_path):
    ip, lp = write_idx_pair(tmp_path, np.zeros((1, 784)), [0])
    raw = ip.read_bytes()
    ip.write_bytes(raw[:-10])
    with pytest.raises(data.DataFormatError, match="truncated"):
        data.load_idx(ip, lp)


def test_idx_roundtrip_bytes_exact(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(5, 784), dtype=np.uint8)
    ip, lp = write_idx_pair(tmp_path, pixels, rng.integers(0, 10, 5))
    ds = data.load_idx(ip, lp)
    ip2, lp2 = tmp_path / "imgs2.idx", tmp_path / "labels2.idx"
    data.save_idx(ds, ip2, lp2)
    assert ip2.read_bytes() == ip.read_bytes()
    assert lp2.read_bytes() == lp.read_bytes()


def test_idx_gzip_transparent(tmp_path):
    pixels = np.arange(784, dtype=np.uint8)[None, :]
    ip, lp = write_idx_pair(tmp_path, pixels, [3])
    for src, gz in ((ip, tmp_path / "i.idx.gz"), (lp, tmp_path / "l.idx.gz")):
        with open(src, "rb") as f_in, gzip.open(gz, "wb") as f_out:
            f_out.write(f_in.read())
    ds = data.load_idx(tmp_path / "i.idx.gz", tmp_path / "l.idx.gz")
    np.testing.assert_array_equal(ds.matrix[0], pixels[0] / 255.0)


def test_idx_limit(tmp_path):
    pixels = np.zeros((10, 784), dtype=np.uint8)
    ip, lp = write_idx_pair(tmp_path, pixels, list(range(10)))
    ds = data.load_idx(ip, lp, limit=4)
    assert len(ds) == 4


# ---------------------------------------------------------------- synthetic tabular

def test_synth_gaussian_deterministic():
    a_train, a_test = data.synth_gaussian(4, 2, 30, 6.0, seed=5)
    b_train, b_test = data.synth_gaussian(4, 2, 30, 6.0, seed=5)
    np.testing.assert_array_equal(a_train.matrix, b_train.matrix)
    np.testing.assert_array_equal(a_test.labels, b_test.labels)


def test_synth_gaussian_trainable_when_separated():
    train, test = data.synth_gaussian(2, 2, 100, 6.0, seed=1)
    model = net.init_mlp([2, 8, 2], seed=0)
    report = net.train(
        model, train.matrix, train.labels, epochs=25, batch_size=16, seed=0,
        test=(test.matrix, test.labels),
    )
    assert report.test_accuracy >= 0.98


def test_synth_gaussian_chance_level_when_merged():
    train, test = data.synth_gaussian(2, 2, 100, 0.0, seed=2)
    model = net.init_mlp([2, 8, 2], seed=0)
    report = net.train(
        model, train.matrix, train.labels, epochs=10, batch_size=16, seed=0,
        test=(test.matrix, test.labels),
    )
    assert abs(report.test_accuracy - 0.5) <= 0.1


def test_synth_gaussian_normalized_to_unit_box():
    train, _ = data.synth_gaussian(3, 3, 50, 4.0, seed=7)
    assert (train.matrix >= 0.0).all() and (train.matrix <= 1.0).all()


# ---------------------------------------------------------------- synthetic digits

def test_synth_digits_deterministic_and_shaped():
    a_train, _ = data.synth_digits(20, 5, seed=3)
    b_train, _ = data.synth_digits(20, 5, seed=3)
    np.testing.assert_array_equal(a_train.matrix, b_train.matrix)
    assert a_train.image_shape == (28, 28)
    vals = a_train.matrix
    assert (vals >= 0.0).all() and (vals <= 1.0).all()
    assert set(a_train.labels) == set(range(10))


def test_synth_digits_idx_roundtrip(tmp_path):
    train, _ = data.synth_digits(12, 2, seed=9)
    ip, lp = tmp_path / "d.idx", tmp_path / "dl.idx"
    data.save_idx(train, ip, lp)
    back = data.load_idx(ip, lp)
    # one quantization to uint8, then exact
    np.testing.assert_allclose(back.matrix, np.rint(train.matrix * 255) / 255.0, atol=1e-15)
    np.testing.assert_array_equal(back.labels, train.labels)


# ---------------------------------------------------------------- reference set

def constant_model(k=2, winner=0):
    b = np.zeros(k)
    b[winner] = 1.0
    return net.NetworkModel(layers=[net.Layer(w=np.zeros((k, 3)), b=b, act="identity")])


def test_reference_happy_path():
    rng = np.random.default_rng(0)
    ds = make_ds(list(rng.random((200, 3))), labels=[0] * 200)
    stats = data.sample_reference_set(ds, constant_model(winner=0), c_t=0, n=100, seed=1)
    assert stats.count == 100
    assert len(np.unique(stats.samples, axis=0)) == 100
    assert np.isfinite(stats.mean_logits).all()


def test_reference_shortfall_keeps_actual_count():
    # model predicts class 0 everywhere; ask for class 0 with tiny train set
    ds = make_ds(list(np.random.default_rng(1).random((40, 3))), labels=[0] * 40)
    stats = data.sample_reference_set(ds, constant_model(winner=0), c_t=0, n=100, seed=1)
    assert stats.count == 40
    assert stats.requested == 100


def test_reference_none_qualify():
    ds = make_ds(list(np.random.default_rng(2).random((10, 3))), labels=[0] * 10)
    with pytest.raises(ValueError, match="class 1"):
        data.sample_reference_set(ds, constant_model(winner=0), c_t=1, n=5, seed=0)


def test_reference_deterministic_and_prediction_consistent():
    train, _ = data.synth_gaussian(3, 2, 100, 5.0, seed=4)
    model = net.init_mlp([3, 6, 2], seed=0)
    net.train(model, train.matrix, train.labels, epochs=10, seed=0)
    a = data.sample_reference_set(train, model, c_t=1, n=30, seed=6)
    b = data.sample_reference_set(train, model, c_t=1, n=30, seed=6)
    np.testing.assert_array_equal(a.samples, b.samples)
    preds = net.forward_batch(model, a.samples).argmax(axis=1)
    assert (preds == 1).all()


def test_reference_mean_matches_independent_pass():
    train, _ = data.synth_gaussian(3, 2, 60, 5.0, seed=8)
    model = net.init_mlp([3, 6, 2], seed=1)
    net.train(model, train.matrix, train.labels, epochs=8, seed=0)
    stats = data.sample_reference_set(train, model, c_t=0, n=25, seed=2)
    recomputed = np.mean([net.forward(model, s) for s in stats.samples], axis=0)
    np.testing.assert_allclose(stats.mean_logits, recomputed, atol=1e-12)


def test_reference_by_label_mode():
    rng = np.random.default_rng(5)
    ds = make_ds(list(rng.random((20, 3))), labels=[1] * 20)
    stats = data.sample_reference_set(
        ds, constant_model(winner=0), c_t=1, n=10, seed=0, by_label=True
    )
    assert stats.count == 10
