"""Batch drivers: labelled dataset generation and sampled gamma estimation.

Work is split by sample index. Each index owns its own random stream, so
the output does not depend on the number of workers or their scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from .classifier import Dataset
from .config import RunConfig
from .energyflow import cycle_averages
from .trajectory import SamplingExhausted, sample_random
from .variational import GammaEstimate, gamma_terms, reduce_gamma

log = logging.getLogger(__name__)

EXHAUSTED = "exhausted"


def map_indices(fn, n: int, workers: int = 1, chunksize: int = 256):
    """Order-preserving ``map(fn, range(n))``, optionally across processes."""
    if workers <= 1:
        return map(fn, range(n))
    pool = ProcessPoolExecutor(max_workers=workers)
    results = pool.map(fn, range(n), chunksize=chunksize)

    def drain():
        try:
            yield from results
        finally:
            pool.shutdown()
    return drain()


def _progress(it, n, label):
    step = max(1, n // 10)
    for i, item in enumerate(it, 1):
        if i % step == 0 or i == n:
            log.info("%s: %d/%d", label, i, n)
        yield item


def sample_row(index: int, *, seed, sampler, params, n_grid):
    """``(features, phi12bar)`` for one index, or ``EXHAUSTED``."""
    try:
        traj, x, _ = sample_random(seed, index, sampler)
    except SamplingExhausted:
        return EXHAUSTED
    return x, cycle_averages(traj, params, n_grid).phi12bar


def generate_dataset(cfg: RunConfig, n: int, seed: int, workers: int = 1) -> Dataset:
    """Sample ``n`` indices and keep the ones with a definite sign of ``phi12bar``."""
    q = cfg.quadrature
    fn = partial(sample_row, seed=seed, sampler=cfg.sampler, params=cfg.arm, n_grid=q.n_grid)
    X, phis = [], []
    degenerate = exhausted = 0
    for row in _progress(map_indices(fn, n, workers), n, "gen"):
        if row == EXHAUSTED:
            exhausted += 1
            continue
        x, phi = row
        if abs(phi) < q.dead_band:
            degenerate += 1
            continue
        X.append(x)
        phis.append(phi)
    X = np.array(X).reshape(-1, 11)
    phis = np.array(phis)
    labels = np.where(phis > 0, 1, -1)
    meta = {
        "seed": seed,
        "count_requested": n,
        "count_positive": int(np.sum(labels == 1)),
        "count_negative": int(np.sum(labels == -1)),
        "count_degenerate": degenerate,
        "count_exhausted": exhausted,
        "dead_band": q.dead_band,
        "n_grid": q.n_grid,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest,
    }
    return Dataset(X, phis, labels, meta)


def gamma_from_config(cfg: RunConfig, n: int, seed: int, workers: int = 1) -> GammaEstimate:
    fn = partial(gamma_terms, seed, config=cfg.sampler, params=cfg.arm,
                 n_grid=cfg.quadrature.n_grid)
    terms = _progress(map_indices(fn, n, workers), n, "gamma")
    return reduce_gamma(terms, cfg.arm, cfg.quadrature.dead_band)
