"""Graph-based approximate nearest neighbour search over compressed vectors.

Search runs over product-quantized vectors in a search-engine domain while
the graph index and full-precision vectors live in an index-host domain,
with on-demand neighbour fetches, eager candidate selection, and an exact
re-ranking pass over the visited candidates.
"""

from .bloom import DEFAULT_ENTRIES, BloomFilter, BloomFilterBank
from .datasets import gaussian_mixture
from .engine import (GraphSearcher, IndexHost, SearchResult, exact_sq_dists,
                     greedy_search_reference, rerank)
from .errors import (BangError, FileFormatError, ParameterError,
                     TruncatedFileError)
from .graph import GraphIndex, VamanaBuilder, build_index, compute_medoid, robust_prune
from .io import (GroundTruth, VectorStore, ground_truth_from_ivecs,
                 read_codebook, read_codes, read_graph, read_ground_truth,
                 read_ivecs, read_vectors, write_codebook, write_codes,
                 write_graph, write_ground_truth, write_ivecs, write_vectors)
from .kernels import parallel_merge, parallel_merge_sort
from .metrics import (RunMetrics, brute_force_knn, completion_fraction,
                      lambda_metric, recall_at_k, write_run_report)
from .pq import (CompressedVectors, PQCodebook, PQDistTable, ProductQuantizer,
                 asymmetric_distance, asymmetric_distances,
                 build_pq_dist_table, compress, compute_neighbour_distances,
                 decode, subspace_split, train_codebook)
from .state import (QueryState, WorklistEntry, eager_next_candidate,
                    filter_neighbours, update_worklist)

__version__ = "0.1.0"

__all__ = [
    "BangError", "BloomFilter", "BloomFilterBank", "CompressedVectors",
    "DEFAULT_ENTRIES", "FileFormatError", "GraphIndex", "GraphSearcher",
    "GroundTruth", "IndexHost", "PQCodebook", "PQDistTable", "ParameterError",
    "ProductQuantizer", "QueryState", "RunMetrics", "SearchResult",
    "TruncatedFileError", "VamanaBuilder", "VectorStore", "WorklistEntry",
    "asymmetric_distance", "asymmetric_distances", "brute_force_knn",
    "build_index", "build_pq_dist_table", "completion_fraction", "compress",
    "compute_medoid", "compute_neighbour_distances", "decode",
    "eager_next_candidate", "exact_sq_dists", "filter_neighbours",
    "gaussian_mixture", "greedy_search_reference", "ground_truth_from_ivecs",
    "lambda_metric", "parallel_merge", "parallel_merge_sort", "read_codebook",
    "read_codes", "read_graph", "read_ground_truth", "read_ivecs",
    "read_vectors", "recall_at_k", "rerank", "robust_prune", "subspace_split",
    "train_codebook", "update_worklist", "write_codebook", "write_codes",
    "write_graph", "write_ground_truth", "write_ivecs", "write_run_report",
    "write_vectors",
]
