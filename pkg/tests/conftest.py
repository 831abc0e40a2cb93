"""Shared fixtures: a hand-built 12-node toy index with a known search trace."""

import math

import numpy as np
import pytest

from bang.graph import GraphIndex
from bang.io import VectorStore
from bang.pq import PQCodebook, compress_with_codebook

# 2-D points placed so the squared distance from the query (82, 53) is an
# exact integer, matching a worked trace: node -> (coords, cluster id, d2).
TOY_LAYOUT = {
    0: ((130.0, 116.0), 6, 6273.0),
    1: ((20.0, 46.0), 9, 3893.0),
    2: ((30.0, 76.0), 7, 3233.0),
    3: ((134.0, 80.0), 8, 3433.0),
    4: ((19.0, 51.0), 1, 3973.0),
    # 2133 is not a sum of two integer squares; exact distance is ~2133 while
    # the cluster-11 centroid sits at an exact 2113 from the query
    5: ((115.0, 53.0 + math.sqrt(1044.0)), 11, 2133.0),
    6: ((50.0, 50.0), 0, 1033.0),
    7: ((125.0, 55.0), 2, 1853.0),
    8: ((99.0, 65.0), 4, 433.0),
    9: ((94.0, 76.0), 5, 673.0),
    10: ((90.0, 56.0), 3, 73.0),
    11: ((105.0, 61.0), 10, 593.0),
}

TOY_ADJACENCY = {
    0: [6],
    1: [9],
    2: [5, 7],
    3: [2],
    4: [1],
    5: [9, 2],
    6: [8, 7, 2],
    7: [6, 8],
    8: [6],
    9: [11, 5],
    10: [11, 8],
    11: [10, 9],
}

TOY_MEDOID = 6
TOY_QUERY = np.array([82.0, 53.0], dtype=np.float32)
# per-cluster squared distance from the query; cluster 11 differs from node
# 5's exact distance because its centroid is not the node itself
TOY_CLUSTER_DIST = {6: 6273.0, 9: 3893.0, 7: 3233.0, 8: 3433.0, 1: 3973.0,
                    11: 2113.0, 0: 1033.0, 2: 1853.0, 4: 433.0, 5: 673.0,
                    3: 73.0, 10: 593.0}
TOY_VISIT_ORDER = [6, 8, 7, 2, 5, 9, 11, 10]
TOY_RERANKED = [10, 8, 11, 9, 6, 7, 5, 2]


@pytest.fixture(scope="session")
def toy():
    coords = np.zeros((12, 2), dtype=np.float32)
    for node, (xy, _, _) in TOY_LAYOUT.items():
        coords[node] = xy
    base = VectorStore(coords)

    centroids = np.full((256, 2), 10_000.0, dtype=np.float32)
    for node, (xy, cluster, _) in TOY_LAYOUT.items():
        centroids[cluster] = xy
    centroids[11] = (114.0, 86.0)  # exact 2113 from the query
    codebook = PQCodebook(dim=2, subspace_sizes=[2], centroids=[centroids])
    codes = compress_with_codebook(coords, codebook)

    graph = GraphIndex.from_lists([TOY_ADJACENCY[i] for i in range(12)],
                                  medoid=TOY_MEDOID, degree_bound=3)
    return {"base": base, "codebook": codebook, "codes": codes, "graph": graph,
            "query": TOY_QUERY}
