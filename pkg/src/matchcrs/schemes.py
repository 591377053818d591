"""The three bipartite contention resolution schemes.

All three turn per-vertex pick-one rules (select_one) into a global
matching. Weight-0 edges never appear and are excluded from every ground
set; instances must have all vertex loads equal to 1 (run complete_loads
first), because every marginal formula below assumes full loads. Dummy
edges from load completion participate fully and are stripped only from
returned matchings.

simple   : activation coins, availability at each endpoint, one pick-one
           rule per vertex; factor 2(1-e^(-1/e)) - e^(-2) >= 0.480.
two-stage: pick-one over realized edges at each left vertex, then over
           the survivors at each right vertex; factor
           1 - e^(-(1-1/e)) >= 0.468.
rbg      : edges are colored gray (present, not activated), red (active
           and alone at the right endpoint, with a thinning coin), or
           blue; staged pick-one rules on the left feed per-right-vertex
           resolution with targets gamma * x, gamma >= 0.509.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (CalibrationInsufficient, DegreeCapExceeded,
                     Infeasible, InputError)
from .graphs import FractionalMatching
from .sampling import RngStream, sample_presence_batch
from .select_one import SelectionRule, SubsetDistribution, TargetMarginals, build_rule

E = math.e
INV_E = 1.0 / E
DEFAULT_CAL_SAMPLES = 10 ** 5
DEFAULT_CAL_SLACK = 0.01
BATCH = 8192


@dataclass(frozen=True)
class SchemeConstants:
    beta: float
    gamma: float
    simple_factor: float
    two_stage_factor: float


def compute_constants() -> SchemeConstants:
    """The schemes' guarantee constants, to full float precision."""
    beta = (math.exp(-INV_E) - math.exp(-1.0)) / (1.0 - math.exp(-1.0))
    gamma = ((1.0 - math.exp(-INV_E))
             - math.exp(-1.0) * (4.0 * beta - 2.0 * beta * beta)
             + (2.0 * beta - beta * beta))
    simple_factor = 2.0 * (1.0 - math.exp(-INV_E)) - math.exp(-2.0)
    two_stage_factor = 1.0 - math.exp(-(1.0 - INV_E))
    return SchemeConstants(beta, gamma, simple_factor, two_stage_factor)


# ------------------------------------------------------------ stage formulas

def activation_given_present(x):
    """Activation coin so that Pr[active] = 1 - exp(-x)."""
    x = np.asarray(x, dtype=float)
    return np.divide(1.0 - np.exp(-x), x, out=np.ones_like(x), where=x > 0)


def availability_probability(x, far_load=1.0):
    """Pr[edge active and alone at its far endpoint].

    (e^x - 1)/e when the far endpoint has load 1; dummy partners carry
    less, which only raises this probability.
    """
    x = np.asarray(x, dtype=float)
    return (1.0 - np.exp(-x)) * np.exp(-(np.asarray(far_load, dtype=float) - x))


def simple_targets(x):
    x = np.asarray(x, dtype=float)
    c = 1.0 - math.exp(-INV_E) - 1.0 / (2.0 * E * E)
    return x * c + (np.exp(2.0 * x) - np.exp(x)) / (2.0 * E * E)


def gray_probability(x):
    """Pr[present but not activated] = x - (1 - exp(-x))."""
    x = np.asarray(x, dtype=float)
    return x - 1.0 + np.exp(-x)


def gray_coin_given_present(x):
    x = np.asarray(x, dtype=float)
    return np.divide(gray_probability(x), x, out=np.zeros_like(x), where=x > 0)


def red_probability(x):
    return 1.0 - np.exp(-np.asarray(x, dtype=float) / E)


def red_coin_given_unique_active(x, right_load=1.0):
    """Thinning coin: Pr[red] / Pr[unique active at the right endpoint].

    Valid (at most 1) because the unique-active probability dominates
    1 - exp(-x/e) whenever the right endpoint's load is at most 1.
    """
    x = np.asarray(x, dtype=float)
    qualifying = availability_probability(x, right_load)
    return np.divide(red_probability(x), qualifying,
                     out=np.ones_like(x), where=x > 0)


def blue_given_no_red(x):
    return 1.0 - np.exp(-(1.0 - INV_E) * np.asarray(x, dtype=float))


def gray_given_no_active(x):
    """Pr[present | not active] = (x - 1 + exp(-x)) / exp(-x)."""
    x = np.asarray(x, dtype=float)
    return np.exp(x) * (x - 1.0) + 1.0


# --------------------------------------------------------------- scaffolding

@dataclass
class _VertexGround:
    """A vertex's positive-weight incident edges, in a fixed local order."""

    vertex: int
    edges: np.ndarray           # global edge ids, local position order
    far: np.ndarray             # far endpoint of each ground edge
    rule: SelectionRule = None

    def __post_init__(self):
        self._weights = (1 << np.arange(len(self.edges))).astype(np.int64)
        self._lookup = np.append(self.edges, -1)
        self._members = None

    @property
    def degree(self):
        return len(self.edges)

    def masks(self, member: np.ndarray) -> np.ndarray:
        """(T, m) boolean stage membership -> (T,) local bitmasks."""
        return member[:, self.edges].astype(np.int64) @ self._weights

    def pick_batch(self, rule: SelectionRule, masks: np.ndarray,
                   u: np.ndarray) -> np.ndarray:
        """Vectorized rule application; returns picked global edge id or -1.

        A cumulative-probability row per mask turns the uniform draw into a
        pick index; index == degree means "nothing". Unknown subsets have
        all-zero rows, so they always map to nothing.
        """
        cum = rule.dense_cumulative()
        rows = cum[masks]
        idx = (u[:, None] >= rows).sum(axis=1)
        return self._lookup[idx]


def _check_completed(fm: FractionalMatching):
    """Every vertex must have load 1, except dummy partners (all-dummy edges)."""
    loads = fm.loads()
    tol = max(fm.tolerance, 1e-7)
    for v in range(fm.graph.vertex_count):
        if abs(loads[v] - 1.0) <= tol:
            continue
        inc = fm.graph.incident(v)
        if inc and all(e in fm.dummy_edges for e in inc):
            continue
        raise InputError(
            f"vertex {v} has load {loads[v]!r}; run complete_loads first")
    if not fm.graph.is_bipartite():
        raise InputError("scheme requires a bipartite instance")


def _grounds(fm: FractionalMatching, vertices, cap: int) -> list:
    out = []
    for v in vertices:
        edges = [e for e in fm.graph.incident(v) if fm.x[e] > 0.0]
        if len(edges) > cap:
            raise DegreeCapExceeded(len(edges), cap, where=f"vertex {v}")
        if edges:
            far = np.asarray([fm.graph.other_end(e, v) for e in edges],
                             dtype=np.int64)
            out.append(_VertexGround(v, np.asarray(edges, dtype=np.int64), far))
    return out


def _strip(fm: FractionalMatching, edges) -> frozenset:
    return frozenset(e for e in edges if e not in fm.dummy_edges)


def _selected_from_picks(shape, picks_list):
    """Combine per-vertex pick arrays (global edge id or -1) into a bool (T, m)."""
    sel = np.zeros(shape, dtype=bool)
    t_idx = np.arange(shape[0])
    for picks in picks_list:
        ok = picks >= 0
        sel[t_idx[ok], picks[ok]] = True
    return sel


class SimpleScheme:
    """Availability-based scheme; every vertex runs one pick-one rule."""

    def __init__(self, fm: FractionalMatching, cap: int = 20):
        _check_completed(fm)
        self.fm = fm
        x = fm.x
        loads = fm.loads()
        self.act = activation_given_present(x)
        self.grounds = _grounds(fm, range(fm.graph.vertex_count), cap)
        for g in self.grounds:
            xs = x[g.edges]
            dist = SubsetDistribution.product(
                [int(e) for e in g.edges],
                availability_probability(xs, loads[g.far]))
            targets = TargetMarginals(
                {int(e): t for e, t in zip(g.edges, simple_targets(xs))})
            try:
                # slack is free improvement here: nothing downstream
                # depends on these marginals being exact
                g.rule = build_rule(dist, targets, cap=cap, use_slack=True)
            except Infeasible as exc:  # cannot happen with full loads
                raise AssertionError(
                    f"availability rule infeasible at vertex {g.vertex}: {exc}") from exc

    def run_batch(self, present: np.ndarray, gen) -> np.ndarray:
        t, m = present.shape
        active = present & (gen.random((t, m)) < self.act[None, :])
        counts = _vertex_counts(self.fm, active)
        picks = []
        for g in self.grounds:
            # available at g.vertex: active and alone at the far endpoint
            avail = active[:, g.edges] & (counts[:, g.far] == 1)
            masks = avail.astype(np.int64) @ g._weights
            picks.append(g.pick_batch(g.rule, masks, gen.random(t)))
        return _selected_from_picks((t, m), picks)

    def run(self, realized, rng) -> frozenset:
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        present = _presence_row(self.fm, realized)
        sel = self.run_batch(present, gen)[0]
        return _strip(self.fm, np.flatnonzero(sel).tolist())


class TwoStageScheme:
    """Left-side pick-one over realized edges, then right-side over survivors."""

    def __init__(self, fm: FractionalMatching, cap: int = 20):
        _check_completed(fm)
        self.fm = fm
        left, right = fm.graph.bipartition
        x = fm.x
        stage1_marginal = (1.0 - INV_E)
        self.left = _grounds(fm, sorted(left), cap)
        for g in self.left:
            xs = x[g.edges]
            dist = SubsetDistribution.product([int(e) for e in g.edges], xs)
            targets = TargetMarginals(
                {int(e): stage1_marginal * w for e, w in zip(g.edges, xs)})
            g.rule = _build_or_die(dist, targets, cap, g.vertex)
        self.right = _grounds(fm, sorted(right), cap)
        factor = compute_constants().two_stage_factor
        for g in self.right:
            xs = x[g.edges]
            dist = SubsetDistribution.product([int(e) for e in g.edges],
                                              stage1_marginal * xs)
            targets = TargetMarginals(
                {int(e): factor * w for e, w in zip(g.edges, xs)})
            g.rule = _build_or_die(dist, targets, cap, g.vertex)

    def run_batch(self, present: np.ndarray, gen) -> np.ndarray:
        t, m = present.shape
        picks1 = []
        for g in self.left:
            picks1.append(g.pick_batch(g.rule, g.masks(present), gen.random(t)))
        r1 = _selected_from_picks((t, m), picks1)
        picks2 = []
        for g in self.right:
            picks2.append(g.pick_batch(g.rule, g.masks(r1), gen.random(t)))
        return _selected_from_picks((t, m), picks2)

    def run(self, realized, rng) -> frozenset:
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        present = _presence_row(self.fm, realized)
        sel = self.run_batch(present, gen)[0]
        return _strip(self.fm, np.flatnonzero(sel).tolist())


@dataclass
class ColoredState:
    """Single-run pipeline state: per-edge color plus stage survivor sets."""

    color: dict                 # edge id -> absent | gray | red | blue
    r1: frozenset
    r2: frozenset
    r3: frozenset
    final: frozenset


class RbgScheme:
    """Red/blue/gray pipeline with pluggable final-stage construction.

    step6 modes:
      exact      enumerate the full pipeline distribution (small instances)
                 and build flow rules with targets gamma * x;
      calibrated estimate per-right-vertex arrival distributions from
                 pipeline samples and build rules with targets
                 (gamma - slack) * x;
      uniform    pick uniformly among arrivals (no per-edge guarantee).
    """

    def __init__(self, fm: FractionalMatching, step6: str = "exact",
                 cap: int = 20, cal_samples: int = DEFAULT_CAL_SAMPLES,
                 cal_slack: float = DEFAULT_CAL_SLACK,
                 cal_rng: RngStream | None = None):
        _check_completed(fm)
        if step6 not in ("exact", "calibrated", "uniform"):
            raise InputError(f"unknown step6 mode {step6!r}")
        self.fm = fm
        self.step6 = step6
        self.cal_slack = cal_slack
        left, right = fm.graph.bipartition
        x = fm.x
        self.gray_coin = gray_coin_given_present(x)
        self.constants = compute_constants()
        g = fm.graph
        self.right_vertex = np.asarray(
            [int(g.edge_v[e]) if g.edge_u[e] in left else int(g.edge_u[e])
             for e in range(g.edge_count)], dtype=np.int64)
        loads = fm.loads()
        self.red_coin = red_coin_given_unique_active(x, loads[self.right_vertex])

        red_marginal = 1.0 - math.exp(-INV_E)
        blue_marginal = compute_constants().two_stage_factor  # 1 - e^-(1-1/e)
        self.left = _grounds(fm, sorted(left), cap)
        self.left_rules = {}
        for g in self.left:
            xs = x[g.edges]
            ids = [int(e) for e in g.edges]
            red_rule = _build_or_die(
                SubsetDistribution.product(ids, red_probability(xs)),
                TargetMarginals({i: red_marginal * w for i, w in zip(ids, xs)}),
                cap, g.vertex)
            blue_rule = _build_or_die(
                SubsetDistribution.product(ids, blue_given_no_red(xs)),
                TargetMarginals({i: blue_marginal * w for i, w in zip(ids, xs)}),
                cap, g.vertex)
            gray_rule = _build_or_die(
                SubsetDistribution.product(ids, gray_given_no_active(xs)),
                TargetMarginals({i: 0.5 * w * w for i, w in zip(ids, xs)}),
                cap, g.vertex)
            self.left_rules[g.vertex] = (red_rule, blue_rule, gray_rule)

        self.right = _grounds(fm, sorted(right), cap)
        if step6 == "exact":
            self._build_step6_exact(cap)
        elif step6 == "calibrated":
            if cal_rng is None:
                cal_rng = RngStream(0, ("calibration",))
            self._build_step6_calibrated(cap, cal_samples, cal_rng)

    # ---------------------------------------------------------- construction

    def _build_step6_exact(self, cap):
        from .exact import rbg_arrival_distributions
        dists = rbg_arrival_distributions(self.fm, self)
        gamma = self.constants.gamma
        for g in self.right:
            dist = dists[g.vertex]
            targets = TargetMarginals(
                {int(e): gamma * self.fm.x[e] for e in g.edges})
            try:
                g.rule = build_rule(dist, targets, cap=cap)
            except Infeasible as exc:
                raise AssertionError(
                    f"exact final-stage rule infeasible at vertex {g.vertex} "
                    f"(this contradicts the guarantee): {exc}") from exc

    def _build_step6_calibrated(self, cap, samples, cal_rng):
        counts = {g.vertex: np.zeros(1 << g.degree, dtype=np.int64)
                  for g in self.right}
        done = 0
        cid = 0
        while done < samples:
            size = min(BATCH, samples - done)
            gen = cal_rng.child(cid).generator()
            present = sample_presence_batch(self.fm, size, gen)
            stages = self.pipeline_batch(present, gen)
            arrivals = stages["arrivals"]
            for g in self.right:
                masks = g.masks(arrivals)
                counts[g.vertex] += np.bincount(masks, minlength=1 << g.degree)
            done += size
            cid += 1
        target_factor = self.constants.gamma - self.cal_slack
        for g in self.right:
            cnt = counts[g.vertex]
            atoms = [(mask, c / samples) for mask, c in enumerate(cnt) if c > 0]
            dist = SubsetDistribution.explicit([int(e) for e in g.edges], atoms)
            targets = TargetMarginals(
                {int(e): target_factor * self.fm.x[e] for e in g.edges})
            try:
                g.rule = build_rule(dist, targets, cap=cap, use_slack=True)
            except Infeasible as exc:
                raise CalibrationInsufficient(
                    f"vertex {g.vertex}: empirical arrivals cannot meet "
                    f"targets (witness {sorted(exc.witness)}); "
                    f"raise cal_samples or slack") from exc

    # ------------------------------------------------------------- execution

    def pipeline_batch(self, present: np.ndarray, gen) -> dict:
        """Stages 1-5 vectorized over trials; returns per-stage bool arrays."""
        t, m = present.shape
        gray = present & (gen.random((t, m)) < self.gray_coin[None, :])
        active = present & ~gray
        counts = _vertex_counts(self.fm, active)
        unique = active & (counts[:, self.right_vertex] == 1)
        red = unique & (gen.random((t, m)) < self.red_coin[None, :])
        blue = active & ~red

        r1_picks, r2_picks, r3_picks = [], [], []
        for g in self.left:
            red_rule, blue_rule, gray_rule = self.left_rules[g.vertex]
            red_masks = g.masks(red)
            blue_masks = g.masks(blue)
            gray_masks = g.masks(gray)
            # one uniform per trial serves all three stages: they are
            # mutually exclusive, so only one pick is ever consumed
            u = gen.random(t)
            pick_red = g.pick_batch(red_rule, red_masks, u)
            pick_blue = g.pick_batch(blue_rule, blue_masks, u)
            pick_gray = g.pick_batch(gray_rule, gray_masks, u)
            has_red = red_masks > 0
            has_blue = blue_masks > 0
            r1_picks.append(np.where(has_red, pick_red, -1))
            r2_picks.append(np.where(~has_red & has_blue, pick_blue, -1))
            r3_picks.append(np.where(~has_red & ~has_blue, pick_gray, -1))
        r1 = _selected_from_picks((t, m), r1_picks)
        r2 = _selected_from_picks((t, m), r2_picks)
        r3 = _selected_from_picks((t, m), r3_picks)
        return {"gray": gray, "red": red, "blue": blue,
                "r1": r1, "r2": r2, "r3": r3, "arrivals": r1 | r2 | r3}

    def run_batch(self, present: np.ndarray, gen) -> np.ndarray:
        stages = self.pipeline_batch(present, gen)
        return self.final_batch(stages["arrivals"], gen)

    def final_batch(self, arrivals: np.ndarray, gen) -> np.ndarray:
        t, m = arrivals.shape
        picks = []
        for g in self.right:
            masks = g.masks(arrivals)
            if self.step6 == "uniform":
                picks.append(_uniform_pick_batch(g, masks, gen.random(t)))
            else:
                picks.append(g.pick_batch(g.rule, masks, gen.random(t)))
        return _selected_from_picks((t, m), picks)

    def run(self, realized, rng):
        """One pipeline execution; returns (matching, ColoredState)."""
        gen = rng.generator() if isinstance(rng, RngStream) else rng
        present = _presence_row(self.fm, realized)
        stages = self.pipeline_batch(present, gen)
        sel = self.final_batch(stages["arrivals"], gen)[0]
        color = {}
        for e in range(self.fm.graph.edge_count):
            if stages["red"][0, e]:
                color[e] = "red"
            elif stages["blue"][0, e]:
                color[e] = "blue"
            elif stages["gray"][0, e]:
                color[e] = "gray"
            else:
                color[e] = "absent"
        state = ColoredState(
            color=color,
            r1=frozenset(np.flatnonzero(stages["r1"][0]).tolist()),
            r2=frozenset(np.flatnonzero(stages["r2"][0]).tolist()),
            r3=frozenset(np.flatnonzero(stages["r3"][0]).tolist()),
            final=_strip(self.fm, np.flatnonzero(sel).tolist()))
        return state.final, state


# ------------------------------------------------------------------- helpers

def _build_or_die(dist, targets, cap, vertex):
    try:
        return build_rule(dist, targets, cap=cap)
    except Infeasible as exc:
        raise AssertionError(
            f"stage rule infeasible at vertex {vertex} with full loads: {exc}"
        ) from exc


def _vertex_counts(fm: FractionalMatching, member: np.ndarray) -> np.ndarray:
    """(T, V) counts of member edges incident to each vertex."""
    t = member.shape[0]
    g = fm.graph
    counts = np.zeros((t, g.vertex_count), dtype=np.int32)
    for v in range(g.vertex_count):
        inc = g.incident(v)
        if inc:
            counts[:, v] = member[:, inc].sum(axis=1)
    return counts


def _presence_row(fm: FractionalMatching, realized) -> np.ndarray:
    present = np.zeros((1, fm.graph.edge_count), dtype=bool)
    for e in realized:
        present[0, e] = True
    return present


def _uniform_pick_batch(g: _VertexGround, masks: np.ndarray, u: np.ndarray):
    if g._members is None:
        sizes = np.zeros(1 << g.degree, dtype=np.int64)
        members = np.full((1 << g.degree, g.degree), -1, dtype=np.int64)
        for mask in range(1 << g.degree):
            k = 0
            for i in range(g.degree):
                if (mask >> i) & 1:
                    members[mask, k] = g.edges[i]
                    k += 1
            sizes[mask] = k
        g._members = (sizes, members)
    sizes, members = g._members
    size_row = sizes[masks]
    idx = np.minimum((u * np.maximum(size_row, 1)).astype(np.int64),
                     np.maximum(size_row - 1, 0))
    picked = members[masks, idx]
    picked[size_row == 0] = -1
    return picked


def simple_scheme(fm, realized, rng) -> frozenset:
    """One-shot: build the rules and run once (use SimpleScheme for loops)."""
    return SimpleScheme(fm).run(realized, rng)


def two_stage_scheme(fm, realized, rng) -> frozenset:
    return TwoStageScheme(fm).run(realized, rng)


def rbg_scheme(fm, realized, rng, step6_mode: str = "exact"):
    return RbgScheme(fm, step6=step6_mode).run(realized, rng)
