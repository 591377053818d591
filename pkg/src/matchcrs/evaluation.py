"""Measurement: balancedness (Monte Carlo and exact), the product lower
bound behind the simple scheme, matching-density runs, and the
doubly-stochastic minimum probe.

Balancedness of a scheme at edge e is Pr[e in M | e in R]. Monte Carlo
estimates plant the edge (force it present), which is exact under the
product model; the exact evaluators enumerate instead. Selected edges are
always present, so exact conditionals are unconditional values divided
by the edge weight.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import exact as exact_mod
from .errors import InputError, TooLarge
from .graphs import DoublyStochasticMatrix, FractionalMatching
from .karp_sipser import ks_first_stage, max_matching
from .sampling import RngStream, sample_presence_batch
from .schemes import RbgScheme, SimpleScheme, TwoStageScheme, simple_targets
from .stats import Z99, mean_interval, wilson_interval

MC_BATCH = 8192

SCHEME_IDS = ("simple", "two-stage", "rbg")


def make_scheme(name: str, fm: FractionalMatching, **kwargs):
    """Build a reusable scheme runner by CLI name."""
    if name == "simple":
        return SimpleScheme(fm)
    if name == "two-stage":
        return TwoStageScheme(fm)
    if name == "rbg":
        return RbgScheme(fm, **kwargs)
    if name == "ks":
        return KsSchemeRunner(fm)
    raise InputError(f"unknown scheme {name!r}")


class KsSchemeRunner:
    """Degree-1 greedy stage exposed through the scheme-runner interface."""

    def __init__(self, fm: FractionalMatching):
        self.fm = fm

    def run_batch(self, present: np.ndarray, gen) -> np.ndarray:
        t, m = present.shape
        sel = np.zeros((t, m), dtype=bool)
        for i in range(t):
            edges = np.flatnonzero(present[i]).tolist()
            for e in ks_first_stage(self.fm.graph, gen, edges):
                sel[i, e] = True
        return sel

    def run(self, realized, rng):
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        matched = ks_first_stage(self.fm.graph, gen, list(realized))
        return frozenset(e for e in matched if e not in self.fm.dummy_edges)


def mc_balancedness(scheme, fm: FractionalMatching, trials: int, rng: RngStream,
                    probe_edges=None, threads: int = 1,
                    exact_values=None, scheme_id: str = "") -> dict:
    """Planted-edge Monte Carlo estimate of per-edge conditional selection.

    scheme: any runner with run_batch(present, gen); rng: base stream; each
    (edge, batch) pair gets its own child stream, so results are identical
    for any thread count.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    if probe_edges is None:
        probe_edges = [e for e in fm.real_edges() if fm.x[e] > 0.0]
    batches = []
    for e in probe_edges:
        done = 0
        b = 0
        while done < trials:
            size = min(MC_BATCH, trials - done)
            batches.append((e, b, size))
            done += size
            b += 1

    def run(task):
        e, b, size = task
        gen = rng.child(int(e), b).generator()
        present = sample_presence_batch(fm, size, gen, planted=int(e))
        sel = scheme.run_batch(present, gen)
        return e, int(sel[:, e].sum())

    counts = {e: 0 for e in probe_edges}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for e, c in pool.map(run, batches):
                counts[e] += c
    else:
        for task in batches:
            e, c = run(task)
            counts[e] += c

    per_edge = []
    for e in probe_edges:
        est = counts[e] / trials
        lo, hi = wilson_interval(counts[e], trials)
        row = {"edge": int(e), "x": float(fm.x[e]), "trials": trials,
               "planted_present": trials, "selected": counts[e],
               "estimate": est, "ci_low": lo, "ci_high": hi,
               "std_error": math.sqrt(max(est * (1 - est), 0.0) / trials)}
        if exact_values is not None:
            row["exact"] = float(exact_values[e])
        per_edge.append(row)
    worst = min(per_edge, key=lambda r: r["estimate"], default=None)
    return {
        "scheme": scheme_id or type(scheme).__name__,
        "seed": rng.master_seed,
        "instance_hash": fm.instance_hash(),
        "trials_per_edge": trials,
        "per_edge": per_edge,
        "min_estimate": worst["estimate"] if worst else None,
        "min_ci_low": min((r["ci_low"] for r in per_edge), default=None),
        "min_edge": worst["edge"] if worst else None,
    }


def exact_balancedness(scheme_name: str, fm: FractionalMatching,
                       runner=None) -> dict:
    """Exact per-edge conditional selection probabilities by enumeration.

    scheme_name: simple | two-stage | rbg (exact final stage) | ks.
    """
    if scheme_name == "simple":
        runner = runner or SimpleScheme(fm)
        probs = exact_mod.simple_exact_edge_probabilities(fm, runner)
    elif scheme_name == "two-stage":
        runner = runner or TwoStageScheme(fm)
        probs = exact_mod.two_stage_exact_edge_probabilities(fm, runner)
    elif scheme_name == "rbg":
        runner = runner or RbgScheme(fm, step6="exact")
        if runner.step6 != "exact":
            raise InputError("exact evaluation needs the exact final stage")
        probs = exact_mod.rbg_exact_edge_probabilities(fm, runner)
    elif scheme_name == "ks":
        probs = exact_mod.ks_exact_edge_probabilities(fm)
    else:
        raise InputError(f"unknown scheme {scheme_name!r}")
    per_edge = []
    for e in fm.real_edges():
        if fm.x[e] <= 0.0:
            continue
        per_edge.append({"edge": int(e), "x": float(fm.x[e]),
                         "selected_prob": float(probs[e]),
                         "conditional": float(probs[e] / fm.x[e])})
    return {
        "scheme": scheme_name,
        "instance_hash": fm.instance_hash(),
        "per_edge": per_edge,
        "min_conditional": min((r["conditional"] for r in per_edge), default=None),
    }


# ----------------------------------------------------- product lower bound

def lem_bound_margin(xs) -> float:
    """Margin of the availability-union bound for one weight vector.

    Checks 1 - prod(1 - F(x_i)) >= sum of per-edge targets, with
    F(x) = (e^x - 1)/e; requires sum(x) <= 1. Non-negative margin means
    the inequality holds.
    """
    xs = np.asarray(xs, dtype=float)
    lhs = 1.0 - np.prod(1.0 - (np.exp(xs) - 1.0) / math.e)
    rhs = float(np.sum(simple_targets(xs)))
    return float(lhs - rhs)


def check_lem_bound(samples: int, rng: RngStream, slack: float = 1e-12) -> dict:
    """Random + boundary-biased vectors with sum <= 1; counts violations."""
    gen = rng.generator()
    cases = [np.array([1.0]), np.array([0.0]), np.zeros(5)]
    for k in (2, 3, 5, 8, 16):
        cases.append(np.full(k, 1.0 / k))
    violations = 0
    margins = np.empty(samples)
    worst = None
    min_margin = math.inf
    checked = 0
    while checked < samples:
        if checked < len(cases):
            xs = cases[checked]
        else:
            k = int(gen.integers(1, 11))
            alpha = 0.25 if gen.random() < 0.3 else 1.0
            w = gen.dirichlet(np.full(k, alpha))
            scale = 1.0 if gen.random() < 0.5 else gen.random()
            xs = w * scale
        margin = lem_bound_margin(xs)
        margins[checked] = margin
        if margin < min_margin:
            min_margin = margin
            worst = xs.tolist()
        if margin < -slack:
            violations += 1
        checked += 1
    counts, edges = np.histogram(margins, bins=40)
    return {"samples": samples, "violations": violations,
            "min_margin": min_margin, "worst_vector": worst,
            "margin_histogram": {"bin_edges": edges.tolist(),
                                 "counts": counts.tolist()}}


# ----------------------------------------------------------------- density

def density_experiment(fm: FractionalMatching, trials: int, rng: RngStream,
                       threads: int = 1, compute_max: bool = True) -> dict:
    """Sample R(x) repeatedly; record greedy and maximum matching sizes."""
    if trials < 1:
        raise InputError("trials must be >= 1")

    def run(i):
        gen = rng.child(i).generator()
        present = np.flatnonzero(gen.random(fm.graph.edge_count) < fm.x).tolist()
        ks = len(ks_first_stage(fm.graph, gen, present))
        mm = None
        if compute_max:
            try:
                mm = len(max_matching(fm.graph, present))
            except TooLarge:
                mm = None
        return ks, mm

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(i) for i in range(trials)]
    nv = fm.graph.vertex_count
    ks_sizes = [r[0] for r in results]
    mm_all = [r[1] for r in results]
    mm_sizes = [v for v in mm_all if v is not None]
    report = {
        "trials": trials,
        "vertex_count": nv,
        "ks_sizes": ks_sizes,
        "ks_mean": float(np.mean(ks_sizes)),
        "ks_density_per_vertex": float(np.mean(ks_sizes) / nv),
    }
    if mm_sizes:
        gaps = [m - k for k, m in zip(ks_sizes, mm_all) if m is not None]
        report.update({
            "max_sizes": mm_all,
            "max_mean": float(np.mean(mm_sizes)),
            "max_density_per_vertex": float(np.mean(mm_sizes) / nv),
            "mean_gap_per_vertex": float(np.mean(gaps) / nv),
        })
    return report


# ------------------------------------------------------------ matrix probe

def conjecture_probe(matrices, trials: int, rng: RngStream,
                     threads: int = 1) -> dict:
    """Monte Carlo expected maximum-matching size for each matrix vs uniform.

    Flags (never fails) any matrix whose estimate sits below the uniform
    matrix's beyond CI overlap.
    """
    if not matrices:
        raise InputError("need at least one matrix")
    n = matrices[0].n
    for a in matrices:
        if a.n != n:
            raise InputError("all matrices must share the same dimension")
    uniform = DoublyStochasticMatrix(np.full((n, n), 1.0 / n))
    entries = [("uniform", uniform)] + [(f"matrix_{i}", a)
                                        for i, a in enumerate(matrices)]

    def run(task):
        idx, (label, a) = task
        fm = a.to_fractional_matching()
        sizes = np.empty(trials)
        for t in range(trials):
            gen = rng.child(idx, t).generator()
            present = np.flatnonzero(gen.random(fm.graph.edge_count) < fm.x).tolist()
            sizes[t] = len(max_matching(fm.graph, present))
        mean, lo, hi = mean_interval(sizes.tolist())
        return {"label": label, "mean": mean, "ci_low": lo, "ci_high": hi}

    tasks = list(enumerate(entries))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(t) for t in tasks]
    base = rows[0]
    flags = [r["label"] for r in rows[1:] if r["ci_high"] < base["ci_low"]]
    return {"n": n, "trials": trials, "results": rows,
            "uniform_mean": base["mean"], "flags": flags}


def wilson_coverage_check(p: float, draws: int, repetitions: int,
                          rng: RngStream) -> float:
    """Fraction of 99% intervals covering the true p over seeded repetitions."""
    gen = rng.generator()
    hits = 0
    for _ in range(repetitions):
        successes = int(gen.binomial(draws, p))
        lo, hi = wilson_interval(successes, draws, z=Z99)
        hits += lo <= p <= hi
    return hits / repetitions
