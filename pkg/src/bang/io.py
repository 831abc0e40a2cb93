"""Binary dataset, codebook, compressed-vector, ground-truth and graph I/O.

All integers are little-endian and all floats are 32-bit so files round-trip
bit-exactly across platforms.  fvecs/bvecs/ivecs follow the de-facto TEXMEX
layout (every row is prefixed by a 4-byte dimension that must be constant
across rows).  The remaining formats are this package's own container
formats, each starting with a 4-byte magic and a u32 version.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, ParameterError, TruncatedFileError
from .graph import NO_NODE, GraphIndex
from .pq import CompressedVectors, PQCodebook
from .validation import SUPPORTED_SCALARS, check_scalar_kind

GRAPH_MAGIC = b"PGIX"
CODEBOOK_MAGIC = b"PQCB"
CODES_MAGIC = b"PQCV"
GROUND_TRUTH_MAGIC = b"GTKN"
FORMAT_VERSION = 1

_U32 = np.dtype("<u4")
_I32 = np.dtype("<i4")
_F32 = np.dtype("<f4")

_SCALAR_CODES = {"u8": 0, "i8": 1, "f32": 2}
_SCALAR_FROM_CODE = {v: k for k, v in _SCALAR_CODES.items()}


class VectorStore:
    """A typed, dimensioned, row-major collection of vectors."""

    def __init__(self, data: np.ndarray):
        data = np.ascontiguousarray(data)
        if data.ndim != 2:
            raise ParameterError(f"vector data must be 2-D, got shape {data.shape}")
        self.scalar = check_scalar_kind(data.dtype, "vector data")
        if data.shape[0] > 0 and data.shape[1] == 0:
            raise ParameterError("non-empty store must have a positive dimension")
        self.data = data

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def as_float32(self) -> np.ndarray:
        if self.data.dtype == np.float32:
            return self.data
        return self.data.astype(np.float32)

    @classmethod
    def empty(cls, scalar: str = "f32") -> "VectorStore":
        return cls(np.zeros((0, 0), dtype=SUPPORTED_SCALARS[scalar]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorStore):
            return NotImplemented
        return (self.scalar == other.scalar
                and self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data))


@dataclass
class GroundTruth:
    """Per-query exact top-k ids sorted by ascending squared distance."""

    ids: np.ndarray    # (query_count, k_gt) int32
    dists: np.ndarray  # (query_count, k_gt) float32

    def __post_init__(self):
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        self.dists = np.ascontiguousarray(self.dists, dtype=np.float32)
        if self.ids.ndim != 2 or self.ids.shape != self.dists.shape:
            raise ParameterError("ids and dists must be matching 2-D arrays")
        if self.ids.shape[0]:
            if np.any(np.diff(self.dists, axis=1) < 0):
                raise FileFormatError("ground-truth distances must be non-decreasing")
            srt = np.sort(self.ids, axis=1)
            if self.ids.shape[1] > 1 and np.any(np.diff(srt, axis=1) == 0):
                raise FileFormatError("ground-truth ids must be distinct per row")

    @property
    def query_count(self) -> int:
        return self.ids.shape[0]

    @property
    def k_gt(self) -> int:
        return self.ids.shape[1]


def _read_exact(f, nbytes: int, what: str) -> bytes:
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise TruncatedFileError(f"{what}: expected {nbytes} bytes, got {len(buf)}")
    return buf


def _read_array(f, dtype, count: int, what: str) -> np.ndarray:
    raw = _read_exact(f, dtype.itemsize * count, what)
    return np.frombuffer(raw, dtype=dtype, count=count)


# ---------------------------------------------------------------------------
# vector stores
# ---------------------------------------------------------------------------

def _read_texmex(path: str, elem_dtype, scalar: str) -> VectorStore:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return VectorStore.empty(scalar)
    if raw.size < 4:
        raise TruncatedFileError(f"{path}: missing dimension header")
    dim = int(raw[:4].view(_I32)[0])
    if dim <= 0:
        raise FileFormatError(f"{path}: non-positive dimension header {dim}")
    row_bytes = 4 + dim * elem_dtype.itemsize
    if raw.size % row_bytes != 0:
        raise TruncatedFileError(f"{path}: size {raw.size} is not a multiple of "
                                 f"the row size {row_bytes}")
    rows = raw.reshape(-1, row_bytes)
    headers = rows[:, :4].copy().view(_I32).ravel()
    if np.any(headers != dim):
        bad = int(np.flatnonzero(headers != dim)[0])
        raise FileFormatError(f"{path}: row {bad} has dimension {int(headers[bad])},"
                              f" expected {dim}")
    data = rows[:, 4:].copy().view(elem_dtype).reshape(-1, dim)
    return VectorStore(data.astype(SUPPORTED_SCALARS[scalar], copy=False))


def _write_texmex(store: VectorStore, path: str, elem_dtype) -> None:
    dim_col = np.full((store.count, 1), store.dim, dtype=_I32)
    with open(path, "wb") as f:
        for start in range(0, store.count, 65536):
            stop = min(store.count, start + 65536)
            block = np.hstack([
                dim_col[start:stop].view(np.uint8).reshape(stop - start, 4),
                np.ascontiguousarray(store.data[start:stop].astype(elem_dtype))
                .view(np.uint8).reshape(stop - start, -1),
            ])
            f.write(block.tobytes())


def read_vectors(path: str, fmt: str) -> VectorStore:
    """Load vectors from an ``fvecs``, ``bvecs`` or ``raw_bin`` file."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if fmt == "fvecs":
        return _read_texmex(path, _F32, "f32")
    if fmt == "bvecs":
        return _read_texmex(path, np.dtype("u1"), "u8")
    if fmt == "raw_bin":
        with open(path, "rb") as f:
            header = _read_array(f, _U32, 3, f"{path}: raw_bin header")
            count, dim, code = int(header[0]), int(header[1]), int(header[2])
            if code not in _SCALAR_FROM_CODE:
                raise FileFormatError(f"{path}: unknown scalar code {code}")
            scalar = _SCALAR_FROM_CODE[code]
            dtype = np.dtype(SUPPORTED_SCALARS[scalar]).newbyteorder("<")
            data = _read_array(f, dtype, count * dim, f"{path}: raw_bin payload")
            if f.read(1):
                raise FileFormatError(f"{path}: trailing bytes after payload")
        if count == 0:
            return VectorStore.empty(scalar)
        return VectorStore(data.reshape(count, dim).astype(
            SUPPORTED_SCALARS[scalar], copy=False))
    raise ParameterError(f"unknown vector format {fmt!r}")


def write_vectors(store: VectorStore, path: str, fmt: str) -> None:
    if fmt == "fvecs":
        if store.scalar != "f32":
            raise ParameterError("fvecs requires f32 vectors")
        _write_texmex(store, path, _F32)
    elif fmt == "bvecs":
        if store.scalar != "u8":
            raise ParameterError("bvecs requires u8 vectors")
        _write_texmex(store, path, np.dtype("u1"))
    elif fmt == "raw_bin":
        with open(path, "wb") as f:
            header = np.array([store.count, store.dim,
                               _SCALAR_CODES[store.scalar]], dtype=_U32)
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(store.data).astype(
                np.dtype(SUPPORTED_SCALARS[store.scalar]).newbyteorder("<"),
                copy=False).tobytes())
    else:
        raise ParameterError(f"unknown vector format {fmt!r}")


def infer_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".fvecs":
        return "fvecs"
    if ext == ".bvecs":
        return "bvecs"
    return "raw_bin"


def read_ivecs(path: str) -> np.ndarray:
    """Integer rows in TEXMEX layout; returns an (n, dim) int32 array."""
    raw = np.fromfile(path, dtype=_I32)
    if raw.size == 0:
        return np.zeros((0, 0), dtype=np.int32)
    dim = int(raw[0])
    if dim <= 0:
        raise FileFormatError(f"{path}: non-positive dimension header {dim}")
    if raw.size % (dim + 1) != 0:
        raise TruncatedFileError(f"{path}: size {raw.size} is not a multiple of "
                                 f"the row size {dim + 1}")
    rows = raw.reshape(-1, dim + 1)
    if np.any(rows[:, 0] != dim):
        bad = int(np.flatnonzero(rows[:, 0] != dim)[0])
        raise FileFormatError(f"{path}: row {bad} has dimension {int(rows[bad, 0])},"
                              f" expected {dim}")
    return rows[:, 1:].astype(np.int32)


def write_ivecs(rows: np.ndarray, path: str) -> None:
    rows = np.ascontiguousarray(rows, dtype=_I32)
    if rows.ndim != 2:
        raise ParameterError("ivecs rows must be 2-D")
    out = np.empty((rows.shape[0], rows.shape[1] + 1), dtype=_I32)
    out[:, 0] = rows.shape[1]
    out[:, 1:] = rows
    out.tofile(path)


# ---------------------------------------------------------------------------
# graph index
# ---------------------------------------------------------------------------

def write_graph(graph: GraphIndex, path: str) -> None:
    graph.validate()
    with open(path, "wb") as f:
        f.write(GRAPH_MAGIC)
        f.write(np.array([FORMAT_VERSION, graph.node_count, graph.degree_bound,
                          graph.medoid], dtype=_U32).tobytes())
        for i in range(graph.node_count):
            ids = graph.neighbours(i)
            f.write(np.array([ids.size], dtype=_U32).tobytes())
            f.write(ids.astype(_U32).tobytes())


def read_graph(path: str) -> GraphIndex:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, f"{path}: magic")
        if magic != GRAPH_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, node_count, degree_bound, medoid = (
            int(v) for v in _read_array(f, _U32, 4, f"{path}: graph header"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        adjacency = np.full((node_count, degree_bound), NO_NODE, dtype=np.int32)
        degrees = np.zeros(node_count, dtype=np.int32)
        for i in range(node_count):
            (length,) = _read_array(f, _U32, 1, f"{path}: node {i} length")
            length = int(length)
            if length > degree_bound:
                raise FileFormatError(f"{path}: node {i} degree {length} exceeds "
                                      f"bound {degree_bound}")
            ids = _read_array(f, _U32, length, f"{path}: node {i} ids")
            if length and int(ids.max()) >= node_count:
                raise FileFormatError(f"{path}: node {i} adjacency id out of range")
            adjacency[i, :length] = ids.astype(np.int32)
            degrees[i] = length
        if f.read(1):
            raise FileFormatError(f"{path}: trailing bytes after adjacency")
    return GraphIndex(adjacency, degrees, medoid, degree_bound)


# ---------------------------------------------------------------------------
# PQ codebook and compressed vectors
# ---------------------------------------------------------------------------

def write_codebook(cb: PQCodebook, path: str) -> None:
    with open(path, "wb") as f:
        f.write(CODEBOOK_MAGIC)
        f.write(np.array([FORMAT_VERSION, cb.m, cb.dim], dtype=_U32).tobytes())
        f.write(np.asarray(cb.subspace_sizes, dtype=_U32).tobytes())
        for table in cb.centroids:
            f.write(np.ascontiguousarray(table, dtype=_F32).tobytes())


def read_codebook(path: str) -> PQCodebook:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, f"{path}: magic")
        if magic != CODEBOOK_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, m, dim = (int(v) for v in
                           _read_array(f, _U32, 3, f"{path}: codebook header"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        sizes = _read_array(f, _U32, m, f"{path}: subspace sizes").astype(np.int64)
        if int(sizes.sum()) != dim:
            raise FileFormatError(f"{path}: subspace sizes sum to {int(sizes.sum())},"
                                  f" expected dim {dim}")
        centroids = []
        for s in range(m):
            table = _read_array(f, _F32, 256 * int(sizes[s]),
                                f"{path}: subspace {s} centroids")
            centroids.append(table.reshape(256, int(sizes[s])).astype(np.float32))
        if f.read(1):
            raise FileFormatError(f"{path}: trailing bytes after centroids")
    return PQCodebook(dim=dim, subspace_sizes=[int(v) for v in sizes],
                      centroids=centroids)


def write_codes(codes: CompressedVectors, path: str) -> None:
    with open(path, "wb") as f:
        f.write(CODES_MAGIC)
        f.write(np.array([FORMAT_VERSION, codes.count, codes.m],
                         dtype=_U32).tobytes())
        f.write(np.ascontiguousarray(codes.codes).tobytes())


def read_codes(path: str) -> CompressedVectors:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, f"{path}: magic")
        if magic != CODES_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, count, m = (int(v) for v in
                             _read_array(f, _U32, 3, f"{path}: codes header"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        codes = _read_array(f, np.dtype("u1"), count * m, f"{path}: codes payload")
        if f.read(1):
            raise FileFormatError(f"{path}: trailing bytes after codes")
    return CompressedVectors(codes=codes.reshape(count, m).copy())


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

def write_ground_truth(gt: GroundTruth, path: str) -> None:
    with open(path, "wb") as f:
        f.write(GROUND_TRUTH_MAGIC)
        f.write(np.array([FORMAT_VERSION, gt.query_count, gt.k_gt],
                         dtype=_U32).tobytes())
        f.write(gt.ids.astype(_U32).tobytes())
        f.write(gt.dists.astype(_F32).tobytes())


def read_ground_truth(path: str) -> GroundTruth:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, f"{path}: magic")
        if magic != GROUND_TRUTH_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, q, k = (int(v) for v in
                         _read_array(f, _U32, 3, f"{path}: ground-truth header"))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        ids = _read_array(f, _U32, q * k, f"{path}: ids").astype(np.int32)
        dists = _read_array(f, _F32, q * k, f"{path}: dists").astype(np.float32)
        if f.read(1):
            raise FileFormatError(f"{path}: trailing bytes after distances")
    return GroundTruth(ids=ids.reshape(q, k), dists=dists.reshape(q, k))


def ground_truth_from_ivecs(path: str, base: VectorStore,
                            queries: VectorStore) -> GroundTruth:
    """Accept an ivecs id file as ground truth; distances are recomputed."""
    ids = read_ivecs(path)
    if ids.shape[0] != queries.count:
        raise FileFormatError(f"{path}: {ids.shape[0]} rows for {queries.count} queries")
    base_f = base.as_float32().astype(np.float64)
    q_f = queries.as_float32().astype(np.float64)
    dists = np.empty(ids.shape, dtype=np.float32)
    for i in range(ids.shape[0]):
        diff = base_f[ids[i]] - q_f[i]
        dists[i] = np.einsum("nd,nd->n", diff, diff).astype(np.float32)
        # rows must be sorted by (dist, id) to satisfy the container invariant
        row_order = np.lexsort((ids[i], dists[i]))
        ids[i] = ids[i][row_order]
        dists[i] = dists[i][row_order]
    return GroundTruth(ids=ids, dists=dists)
