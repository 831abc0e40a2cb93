"""Parameter sweeps over (mode, m, t, batch) cells, reported as CSV rows.

The sweep config is a flat key = value text file; lists are comma-separated
and ``#`` starts a comment.  ``dataset = synthetic`` generates the seeded
Gaussian-mixture reference set; otherwise ``dataset``/``queries`` name vector
files.  Compression cells are collapsed to m = 0 for the exact-distance mode,
which uses no compression.
"""

from __future__ import annotations

import csv

from .datasets import gaussian_mixture
from .engine import GraphSearcher
from .errors import ParameterError
from .graph import VamanaBuilder
from .io import infer_format, read_vectors
from .metrics import (brute_force_knn, completion_fraction, lambda_metric,
                      recall_at_k)
from .pq import ProductQuantizer, compress_with_codebook

_DEFAULTS = {
    "dataset": "synthetic",
    "n": "20000",
    "queries": "500",
    "dim": "32",
    "clusters": "16",
    "seed": "0",
    "k": "10",
    "t": "32",
    "m": "8",
    "mode": "pipelined",
    "batch": "10000",
    "R": "32",
    "L_build": "64",
    "sigma": "1.2",
    "bloom_entries": "399887",
    "pq_iters": "25",
}

CSV_COLUMNS = ["dataset", "mode", "m", "t", "batch", "recall", "qps",
               "lambda", "frac_within_1_1t"]


def parse_config(path: str) -> dict[str, str]:
    config = dict(_DEFAULTS)
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _DEFAULTS:
                raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
            config[key] = value
    return config


def _int_list(value: str) -> list[int]:
    return [int(part.strip()) for part in value.split(",") if part.strip()]


def _load_dataset(config: dict[str, str]):
    if config["dataset"] == "synthetic":
        base, queries = gaussian_mixture(
            n=int(config["n"]), n_queries=int(config["queries"]),
            dim=int(config["dim"]), clusters=int(config["clusters"]),
            seed=int(config["seed"]))
        return "synthetic", base, queries
    base_path = config["dataset"]
    base = read_vectors(base_path, infer_format(base_path))
    q_path = config["queries"]
    queries = read_vectors(q_path, infer_format(q_path))
    return base_path, base, queries


def bench_sweep(config: dict[str, str], threads: int | None = None) -> list[dict]:
    """One result row per sweep cell, in deterministic cell order."""
    name, base, queries = _load_dataset(config)
    seed = int(config["seed"])
    k = int(config["k"])
    t_values = _int_list(config["t"])
    m_values = _int_list(config["m"])
    batches = _int_list(config["batch"])
    modes = [part.strip() for part in config["mode"].split(",") if part.strip()]
    gt = brute_force_knn(base, queries, k, threads=threads)
    graph = VamanaBuilder(int(config["R"]), int(config["L_build"]),
                          float(config["sigma"]), seed).fit(base.data).graph_
    compression = {}
    rows = []
    for mode in modes:
        cell_ms = [0] if mode == "exact_distance" else m_values
        for m in cell_ms:
            codebook = codes = None
            if mode != "exact_distance":
                if m not in compression:
                    cb = ProductQuantizer(m=m, iters=int(config["pq_iters"]),
                                          seed=seed).fit(base.data).codebook_
                    compression[m] = (cb, compress_with_codebook(base.data, cb))
                codebook, codes = compression[m]
            for t in t_values:
                for batch in batches:
                    searcher = GraphSearcher(
                        k=k, t=t, mode=mode,
                        bloom_entries=int(config["bloom_entries"]),
                        batch_size=batch, threads=threads)
                    searcher.fit(base.data, graph=graph, codebook=codebook,
                                 codes=codes)
                    result = searcher.search(queries)
                    rows.append({
                        "dataset": name,
                        "mode": mode,
                        "m": m,
                        "t": t,
                        "batch": batch,
                        "recall": recall_at_k(result.ids, gt, k),
                        "qps": (result.ids.shape[0] / result.elapsed
                                if result.elapsed > 0 else 0.0),
                        "lambda": lambda_metric(result.iterations, t),
                        "frac_within_1_1t": completion_fraction(
                            result.iterations, t),
                    })
    return rows


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["recall"] = f"{row['recall']:.6f}"
            out["qps"] = f"{row['qps']:.3f}"
            out["lambda"] = f"{row['lambda']:.6f}"
            out["frac_within_1_1t"] = f"{row['frac_within_1_1t']:.6f}"
            writer.writerow(out)
