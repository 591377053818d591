"""Deterministic, parallel-safe randomness and the realized-edge-set sampler.

Every source of randomness is a counter-based stream keyed by a master seed
plus a path of sub-stream ids (trial index, batch index, named stage).
Streams with equal keys produce identical draws regardless of thread count
or execution order, which makes Monte Carlo runs replayable bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import EdgeNeverAppears
from .graphs import FractionalMatching


def _stream_id(part) -> int:
    """Stable integer id for a sub-stream path component."""
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode()).digest()[:4], "big")
    return int(part)


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream: (master_seed, stream path).

    Path components are trial/batch indices or stage names; equal keys give
    identical generators on any machine, thread count, or call order.
    """

    master_seed: int
    path: tuple = ()

    def child(self, *ids) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.master_seed,
                                    spawn_key=tuple(_stream_id(i) for i in self.path))
        return np.random.Generator(np.random.Philox(ss))


RealizedSet = frozenset


def sample_r(fm: FractionalMatching, rng) -> frozenset:
    """Sample R(x): each edge present independently with probability x_e."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    u = gen.random(fm.graph.edge_count)
    return frozenset(np.nonzero(u < fm.x)[0].tolist())


def sample_r_planted(fm: FractionalMatching, e: int, rng) -> frozenset:
    """Sample R(x) conditioned on edge `e` being present.

    Exact by independence: force e, sample the rest unconditionally.
    """
    if fm.x[e] <= 0.0:
        raise EdgeNeverAppears(f"edge {e} has weight 0")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    u = gen.random(fm.graph.edge_count)
    present = u < fm.x
    present[e] = True
    return frozenset(np.nonzero(present)[0].tolist())


def sample_presence_batch(fm: FractionalMatching, trials: int, gen,
                          planted: int | None = None) -> np.ndarray:
    """(trials, edges) boolean presence matrix; `planted` forced present."""
    u = gen.random((trials, fm.graph.edge_count))
    present = u < fm.x[None, :]
    if planted is not None:
        if fm.x[planted] <= 0.0:
            raise EdgeNeverAppears(f"edge {planted} has weight 0")
        present[:, planted] = True
    return present
