"""Round-trip and rejection tests for all binary formats."""

import numpy as np
import pytest

from bang.errors import FileFormatError, ParameterError, TruncatedFileError
from bang.graph import GraphIndex
from bang.io import (GroundTruth, VectorStore, ground_truth_from_ivecs,
                     read_codebook, read_codes, read_graph, read_ground_truth,
                     read_ivecs, read_vectors, write_codebook, write_codes,
                     write_graph, write_ground_truth, write_ivecs,
                     write_vectors)
from bang.pq import CompressedVectors, PQCodebook, subspace_split


def test_fvecs_two_rows_header(tmp_path):
    path = tmp_path / "two.fvecs"
    rows = np.array([[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]], dtype=np.float32)
    write_vectors(VectorStore(rows), str(path), "fvecs")
    store = read_vectors(str(path), "fvecs")
    assert store.count == 2 and store.dim == 4
    assert np.array_equal(store.data, rows)


def test_empty_file_is_empty_store(tmp_path):
    path = tmp_path / "empty.fvecs"
    path.write_bytes(b"")
    store = read_vectors(str(path), "fvecs")
    assert store.count == 0


def test_fvecs_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.normal(size=(1000, 16)).astype(np.float32)
    path = tmp_path / "r.fvecs"
    write_vectors(VectorStore(data), str(path), "fvecs")
    first = path.read_bytes()
    store = read_vectors(str(path), "fvecs")
    assert np.array_equal(store.data, data)
    write_vectors(store, str(path), "fvecs")
    assert path.read_bytes() == first


def test_fvecs_rejects_mismatched_row_header(tmp_path):
    path = tmp_path / "bad.fvecs"
    good = np.array([3], dtype="<i4").tobytes() + np.zeros(3, dtype="<f4").tobytes()
    bad = np.array([4], dtype="<i4").tobytes() + np.zeros(3, dtype="<f4").tobytes()
    path.write_bytes(good + bad)
    with pytest.raises(FileFormatError):
        read_vectors(str(path), "fvecs")


def test_fvecs_rejects_truncated(tmp_path):
    path = tmp_path / "trunc.fvecs"
    row = np.array([4], dtype="<i4").tobytes() + np.zeros(4, dtype="<f4").tobytes()
    path.write_bytes(row[:-3])
    with pytest.raises(TruncatedFileError):
        read_vectors(str(path), "fvecs")


def test_bvecs_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.integers(0, 256, size=(64, 12), dtype=np.uint8)
    path = tmp_path / "r.bvecs"
    write_vectors(VectorStore(data), str(path), "bvecs")
    assert read_vectors(str(path), "bvecs") == VectorStore(data)


@pytest.mark.parametrize("dtype", [np.uint8, np.int8, np.float32])
def test_raw_bin_roundtrip_all_scalars(tmp_path, dtype):
    rng = np.random.default_rng(11)
    data = rng.integers(-100, 100, size=(37, 9)).astype(dtype)
    path = tmp_path / "r.bin"
    write_vectors(VectorStore(data), str(path), "raw_bin")
    store = read_vectors(str(path), "raw_bin")
    assert store.scalar == {np.uint8: "u8", np.int8: "i8", np.float32: "f32"}[dtype]
    assert np.array_equal(store.data, data)


def test_fvecs_rejects_integer_store(tmp_path):
    data = np.zeros((2, 3), dtype=np.uint8)
    with pytest.raises(ParameterError):
        write_vectors(VectorStore(data), str(tmp_path / "x.fvecs"), "fvecs")


def test_graph_roundtrip_toy(tmp_path, toy):
    path = tmp_path / "toy.graph"
    write_graph(toy["graph"], str(path))
    again = read_graph(str(path))
    assert again == toy["graph"]


def test_graph_single_node_empty_adjacency(tmp_path):
    graph = GraphIndex.from_lists([[]], medoid=0, degree_bound=4)
    path = tmp_path / "one.graph"
    write_graph(graph, str(path))
    again = read_graph(str(path))
    assert again.node_count == 1 and again.degrees[0] == 0


def test_graph_random_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    n, r = 500, 8
    lists = []
    for i in range(n):
        picks = rng.choice(n - 1, size=rng.integers(0, r + 1), replace=False)
        picks[picks >= i] += 1
        lists.append(np.sort(picks).astype(np.int32))
    graph = GraphIndex.from_lists(lists, medoid=17, degree_bound=r)
    path = tmp_path / "rand.graph"
    write_graph(graph, str(path))
    assert read_graph(str(path)) == graph


def test_graph_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.graph"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(FileFormatError):
        read_graph(str(path))


def test_graph_rejects_out_of_range_id(tmp_path, toy):
    path = tmp_path / "oor.graph"
    write_graph(toy["graph"], str(path))
    raw = bytearray(path.read_bytes())
    # first adjacency id lives right after the 20-byte header + 4-byte length
    raw[24:28] = np.array([99], dtype="<u4").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(FileFormatError):
        read_graph(str(path))


def test_codebook_roundtrip_m1(tmp_path, toy):
    path = tmp_path / "toy.cb"
    write_codebook(toy["codebook"], str(path))
    assert read_codebook(str(path)) == toy["codebook"]


def test_codebook_m74_dim128_split(tmp_path):
    sizes = subspace_split(128, 74)
    assert sum(sizes) == 128 and len(sizes) == 74
    rng = np.random.default_rng(2)
    cb = PQCodebook(dim=128, subspace_sizes=sizes,
                    centroids=[rng.normal(size=(256, s)).astype(np.float32)
                               for s in sizes])
    path = tmp_path / "74.cb"
    write_codebook(cb, str(path))
    assert read_codebook(str(path)) == cb


def test_codebook_rejects_inconsistent_sizes(tmp_path):
    rng = np.random.default_rng(4)
    cb = PQCodebook(dim=8, subspace_sizes=[4, 4],
                    centroids=[rng.normal(size=(256, 4)).astype(np.float32)] * 2)
    path = tmp_path / "bad.cb"
    write_codebook(cb, str(path))
    raw = bytearray(path.read_bytes())
    raw[8:12] = np.array([9], dtype="<u4").tobytes()  # dim header now 9 != 4+4
    path.write_bytes(bytes(raw))
    with pytest.raises(FileFormatError):
        read_codebook(str(path))


def test_codes_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    codes = CompressedVectors(rng.integers(0, 256, size=(321, 7), dtype=np.uint8))
    path = tmp_path / "c.codes"
    write_codes(codes, str(path))
    again = read_codes(str(path))
    assert np.array_equal(again.codes, codes.codes)


def test_ground_truth_roundtrip(tmp_path):
    gt = GroundTruth(ids=np.array([[1, 2], [5, 3]], dtype=np.int32),
                     dists=np.array([[0.5, 1.5], [0.25, 0.25]], dtype=np.float32))
    path = tmp_path / "g.gt"
    write_ground_truth(gt, str(path))
    again = read_ground_truth(str(path))
    assert np.array_equal(again.ids, gt.ids)
    assert np.array_equal(again.dists, gt.dists)


def test_ground_truth_invariants():
    with pytest.raises(FileFormatError):
        GroundTruth(ids=np.array([[1, 2]]), dists=np.array([[2.0, 1.0]]))
    with pytest.raises(FileFormatError):
        GroundTruth(ids=np.array([[2, 2]]), dists=np.array([[1.0, 2.0]]))


def test_ivecs_roundtrip_and_gt_recompute(tmp_path):
    rng = np.random.default_rng(13)
    base = VectorStore(rng.normal(size=(50, 4)).astype(np.float32))
    queries = VectorStore(rng.normal(size=(6, 4)).astype(np.float32))
    ids = np.stack([rng.choice(50, size=5, replace=False) for _ in range(6)])
    path = tmp_path / "gt.ivecs"
    write_ivecs(ids.astype(np.int32), str(path))
    assert np.array_equal(read_ivecs(str(path)), ids)
    gt = ground_truth_from_ivecs(str(path), base, queries)
    assert gt.query_count == 6 and gt.k_gt == 5
    assert np.all(np.diff(gt.dists, axis=1) >= 0)
    for row in range(6):
        assert set(gt.ids[row]) == set(ids[row])
