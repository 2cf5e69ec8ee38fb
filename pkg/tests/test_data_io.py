import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wowflow.data_io import (SnapshotRecord, SnapshotWriter, idx_bytes, iter_snapshots, load_csv_dataset,
                             load_csv_labeled, load_idx_images, make_gaussian_blobs, make_rings, read_snapshot,
                             write_csv_dataset, write_snapshot)
from wowflow.errors import BadMagic, CountMismatch, MalformedRecord, ParseError, RaggedClasses, TruncatedFile
from wowflow.measures import MetaMeasure


def test_rings_shape_and_geometry():
    Q = make_rings(80, 3, seed=0)
    assert Q.C == 3 and Q.sizes == (80, 80, 80) and Q.d == 2
    for r, cloud in enumerate(Q.clouds):
        center = cloud.points.mean(axis=0)
        phi = np.pi / 2 + 2 * np.pi * r / 3
        np.testing.assert_allclose(center, 2.5 * np.array([np.cos(phi), np.sin(phi)]), atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(cloud.points - center, axis=1), 1.0, atol=1e-12)


def test_generators_are_pure():
    assert make_rings(20, 4, seed=3) == make_rings(20, 4, seed=3)
    assert make_gaussian_blobs(3, 5, 2, seed=1) == make_gaussian_blobs(3, 5, 2, seed=1)
    assert not make_gaussian_blobs(3, 5, 2, seed=1) == make_gaussian_blobs(3, 5, 2, seed=2)


def test_zero_spread_blobs():
    P = make_gaussian_blobs(3, 4, 2, spread=0.0, seed=0)
    for c in P.clouds:
        assert np.all(c.points == c.points[0])


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_csv_two_classes(tmp_path):
    path = write(tmp_path, "class,x0,x1\n0,1,2\n1,3,4\n0,5,6\n1,7,8\n0,9,10\n1,11,12\n")
    labels, P = load_csv_labeled(path)
    assert labels == ["0", "1"] and P.C == 2 and P.sizes == (3, 3)
    np.testing.assert_array_equal(P.clouds[1].points, [[3, 4], [7, 8], [11, 12]])


def test_csv_missing_coordinate_line(tmp_path):
    path = write(tmp_path, "class,x0,x1\n0,1,2\n1,3,4\n0,5\n")
    with pytest.raises(ParseError) as info:
        load_csv_dataset(path)
    assert info.value.line == 4


def test_csv_bad_number(tmp_path):
    path = write(tmp_path, "class,x0\n0,1\n0,abc\n")
    with pytest.raises(ParseError) as info:
        load_csv_dataset(path)
    assert info.value.line == 3


def test_csv_ragged(tmp_path):
    path = write(tmp_path, "class,x0\na,1\na,2\nb,3\n")
    with pytest.raises(RaggedClasses) as info:
        load_csv_dataset(path)
    assert info.value.counts == {"a": 2, "b": 1}
    assert "a: 2" in str(info.value)
    assert load_csv_dataset(path, allow_ragged=True).sizes == (1, 1)


def test_csv_bad_header(tmp_path):
    with pytest.raises(ParseError):
        load_csv_dataset(write(tmp_path, "label,x0\n0,1\n"))
    with pytest.raises(ParseError):
        load_csv_dataset(write(tmp_path, ""))


def test_csv_round_trip_exact(tmp_path):
    P = make_gaussian_blobs(3, 4, 3, seed=5)
    path = tmp_path / "out.csv"
    write_csv_dataset(P, path, labels=["cat", "dog", "eel"])
    labels, back = load_csv_labeled(path)
    assert labels == ["cat", "dog", "eel"] and back == P


def idx_pair(tmp_path, images, labels):
    a, b = tmp_path / "images.idx", tmp_path / "labels.idx"
    a.write_bytes(idx_bytes(np.asarray(images, dtype=np.uint8)))
    b.write_bytes(idx_bytes(np.asarray(labels, dtype=np.uint8)))
    return a, b


def test_idx_hand_built(tmp_path):
    # header bytes written out by hand: magic 0x803, 2 images of 2x2
    images = struct.pack(">IIII", 0x803, 2, 2, 2) + bytes([0, 51, 102, 255, 255, 0, 1, 2])
    labels = struct.pack(">II", 0x801, 2) + bytes([0, 1])
    a, b = tmp_path / "i", tmp_path / "l"
    a.write_bytes(images)
    b.write_bytes(labels)
    assert idx_bytes(np.array([[[0, 51], [102, 255]], [[255, 0], [1, 2]]], dtype=np.uint8)) == images
    P = load_idx_images(a, b, per_class=1)
    assert P.C == 2 and P.sizes == (1, 1) and P.d == 4
    np.testing.assert_array_equal(P.clouds[0].points, [[0.0, 0.2, 0.4, 1.0]])
    np.testing.assert_array_equal(P.clouds[1].points, [[1.0, 0.0, 1 / 255, 2 / 255]])


def test_idx_errors(tmp_path):
    a, b = idx_pair(tmp_path, np.zeros((3, 2, 2)), [0, 0, 1])
    with pytest.raises(CountMismatch) as info:
        load_idx_images(a, b, per_class=2)
    assert "class 1" in str(info.value)
    bad = tmp_path / "bad"
    bad.write_bytes(struct.pack(">II", 0x802, 3) + bytes(3))
    with pytest.raises(BadMagic):
        load_idx_images(a, bad, per_class=1)
    short = tmp_path / "short"
    short.write_bytes(a.read_bytes()[:-1])
    with pytest.raises(TruncatedFile):
        load_idx_images(short, b, per_class=1)
    a2, b2 = idx_pair(tmp_path, np.zeros((3, 2, 2)), [0, 1])
    with pytest.raises(CountMismatch):
        load_idx_images(a2, b2, per_class=1)


def test_snapshot_empty_stream():
    assert read_snapshot(io.StringIO("")) is None
    assert list(iter_snapshots(io.StringIO(""))) == []


def test_snapshot_truncated_line():
    buf = io.StringIO()
    write_snapshot(SnapshotRecord.of(3, make_gaussian_blobs(2, 3, 2), 0.5), buf)
    text = buf.getvalue()
    good_len = len(text.encode())
    stream = io.StringIO(text + text[: len(text) // 2])
    with pytest.raises(MalformedRecord) as info:
        list(iter_snapshots(stream))
    assert info.value.offset == good_len


def test_snapshot_writer_sink():
    buf = io.StringIO()
    sink = SnapshotWriter(buf)
    P = make_gaussian_blobs(2, 3, 2)
    sink(0, P, 1.0)
    sink(5, P, 0.5)
    recs = list(iter_snapshots(io.StringIO(buf.getvalue())))
    assert [r.iteration for r in recs] == [0, 5] and sink.count == 2
    assert recs[1].to_meta_measure() == P


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31),
       st.floats(allow_nan=False, allow_infinity=False))
def test_snapshot_round_trip_full_precision(C, n, d, seed, objective):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(C))
    P = MetaMeasure.from_array(rng.standard_normal((C, n, d)) * 10.0 ** rng.integers(-300, 300), w)
    rec = SnapshotRecord.of(seed, P, objective)
    buf = io.StringIO()
    write_snapshot(rec, buf)
    buf.seek(0)
    assert read_snapshot(buf) == rec
    assert read_snapshot(buf) is None
