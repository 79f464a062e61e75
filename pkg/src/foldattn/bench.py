"""Host wall-clock benchmark of chunked streaming inference.

Numbers here are host-specific latency/throughput observations; they are
reported, never asserted against any published device measurement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig, RunConfig, build_encoder_spec
from .streaming import init_encoder, init_stream, process_chunk


@dataclass
class BenchRow:
    name: str
    chunks: int
    mean_ms: float
    p95_ms: float
    tokens_per_s: float


def bench_model(cfg: RunConfig, model: ModelConfig, seconds: float, dtype=np.float32) -> BenchRow:
    spec = build_encoder_spec(cfg, model)
    enc = init_encoder(spec, seed=cfg.seed, dtype=dtype)
    rng = np.random.default_rng(cfg.seed)
    frames = rng.standard_normal((spec.chunk_size, spec.feature_dim)).astype(dtype)

    state = init_stream(enc, dtype=dtype)
    for _ in range(3):  # warm caches and BLAS paths
        process_chunk(state, frames)

    latencies = []
    deadline = time.perf_counter() + seconds
    while True:
        t0 = time.perf_counter()
        process_chunk(state, frames)
        t1 = time.perf_counter()
        latencies.append(t1 - t0)
        if t1 >= deadline:
            break

    lat = np.array(latencies)
    total = float(lat.sum())
    return BenchRow(
        name=model.name,
        chunks=len(latencies),
        mean_ms=float(lat.mean() * 1e3),
        p95_ms=float(np.percentile(lat, 95) * 1e3),
        tokens_per_s=len(latencies) * spec.chunk_size / total,
    )


def bench_grid(cfg: RunConfig, seconds: float, dtype=np.float32) -> list[BenchRow]:
    return [bench_model(cfg, m, seconds, dtype) for m in cfg.models]
