"""Bundle allocation over a grid with per-item row/column disjointness.

Each cell (s, t) gets a bundle of items; an item may appear at most once
per row and once per column, so its cells form a matching in K_{m,n}.
The per-cell distribution LP (one variable per cell and bundle) is solved
with all columns explicit, then rounded: sample a bundle per cell, build
each item's conflict graph (a fractional matching in expectation), and
keep a matching per item via the red/blue/gray scheme. Values are XOS:
the max over additive clauses, so rounding loses at most the scheme's
balancedness factor in expectation.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InputError
from .graphs import FractionalMatching, Graph, complete_loads
from .sampling import RngStream
from .schemes import RbgScheme

ITEM_CAP = 10
ROUND_BATCH = 4096


@dataclass
class AllocationInstance:
    m: int                   # rows (events)
    n: int                   # columns (time slots)
    items: list              # item names
    clauses: dict            # (s, t) -> list of {item: weight}

    def __post_init__(self):
        if len(self.items) > ITEM_CAP:
            raise InputError(f"at most {ITEM_CAP} items supported")
        if len(set(self.items)) != len(self.items):
            raise InputError("duplicate item names")
        for (s, t), cls in self.clauses.items():
            if not (0 <= s < self.m and 0 <= t < self.n):
                raise InputError(f"cell ({s},{t}) outside the {self.m}x{self.n} grid")
            for clause in cls:
                for item, w in clause.items():
                    if item not in self.items:
                        raise InputError(f"unknown item {item!r} in cell ({s},{t})")
                    if w < 0:
                        raise InputError("clause weights must be non-negative")

    def value(self, s, t, bundle) -> float:
        """XOS value: max over clauses of the clause's weight on the bundle."""
        cls = self.clauses.get((s, t))
        if not cls:
            return 0.0
        return max((sum(c.get(a, 0.0) for a in bundle) for c in cls), default=0.0)

    def value_table(self, s, t) -> np.ndarray:
        """Value of every bundle mask (items as bit positions)."""
        k = len(self.items)
        table = np.zeros(1 << k)
        cls = self.clauses.get((s, t), [])
        if cls:
            weights = np.zeros((len(cls), k))
            for ci, c in enumerate(cls):
                for a, w in c.items():
                    weights[ci, self.items.index(a)] = w
            for mask in range(1 << k):
                members = [i for i in range(k) if (mask >> i) & 1]
                if members:
                    table[mask] = weights[:, members].sum(axis=1).max()
        return table

    @classmethod
    def from_dict(cls, d):
        try:
            items = list(d["items"])
            clauses = {}
            for rec in d["valuations"]:
                clauses.setdefault((int(rec["s"]), int(rec["t"])), []).extend(
                    [{str(a): float(w) for a, w in c.items()} for c in rec["clauses"]])
            return cls(int(d["m"]), int(d["n"]), items, clauses)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed allocation instance: {exc}") from exc

    def to_dict(self):
        return {"m": self.m, "n": self.n, "items": list(self.items),
                "valuations": [{"s": s, "t": t, "clauses": cls}
                               for (s, t), cls in sorted(self.clauses.items())]}

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: invalid JSON at line {exc.lineno} "
                                 f"column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)


@dataclass
class ConfigSolution:
    """Per-cell bundle distribution: weight[s][t][bundle mask]."""

    instance: AllocationInstance
    weights: np.ndarray      # (m, n, 2^k)
    objective: float

    def item_marginal(self, item_idx: int) -> np.ndarray:
        """(m, n) probability that a cell's bundle contains the item."""
        k = len(self.instance.items)
        masks = np.arange(1 << k)
        has = ((masks >> item_idx) & 1).astype(bool)
        return self.weights[:, :, has].sum(axis=2)

    def violations(self, tol=1e-6):
        errs = []
        cell_sums = self.weights.sum(axis=2)
        if np.any(np.abs(cell_sums - 1.0) > tol):
            errs.append("cell distribution does not sum to 1")
        if np.any(self.weights < -tol):
            errs.append("negative bundle weight")
        for a in range(len(self.instance.items)):
            marg = self.item_marginal(a)
            if np.any(marg.sum(axis=1) > 1 + tol):
                errs.append(f"item {a} exceeds a row budget")
            if np.any(marg.sum(axis=0) > 1 + tol):
                errs.append(f"item {a} exceeds a column budget")
        return errs


def solve_config_lp(inst: AllocationInstance) -> ConfigSolution:
    """Optimal per-cell bundle distributions, all 2^k columns explicit."""
    k = len(inst.items)
    m, n = inst.m, inst.n
    nmask = 1 << k
    nvar = m * n * nmask

    def var(s, t, mask):
        return (s * n + t) * nmask + mask

    c = np.zeros(nvar)
    for s in range(m):
        for t in range(n):
            c[var(s, t, 0):var(s, t, nmask - 1) + 1] = -inst.value_table(s, t)

    a_eq = np.zeros((m * n, nvar))
    for s in range(m):
        for t in range(n):
            a_eq[s * n + t, var(s, t, 0):var(s, t, nmask - 1) + 1] = 1.0
    b_eq = np.ones(m * n)

    rows = []
    masks = np.arange(nmask)
    for a in range(k):
        has = ((masks >> a) & 1).astype(float)
        for s in range(m):
            row = np.zeros(nvar)
            for t in range(n):
                row[var(s, t, 0):var(s, t, nmask - 1) + 1] = has
            rows.append(row)
        for t in range(n):
            row = np.zeros(nvar)
            for s in range(m):
                row[var(s, t, 0):var(s, t, nmask - 1) + 1] = has
            rows.append(row)
    a_ub = np.asarray(rows)
    b_ub = np.ones(len(rows))

    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    weights = np.clip(res.x.reshape(m, n, nmask), 0.0, None)
    weights /= weights.sum(axis=2, keepdims=True)
    return ConfigSolution(inst, weights, -res.fun)


def brute_force_integral(inst: AllocationInstance):
    """Exhaustive best integral allocation (per-item matchings in the grid).

    Desk-scale oracle for checking the LP where it happens to be integral.
    """
    cells = [(s, t) for s in range(inst.m) for t in range(inst.n)]
    matchings = [[]]
    for subset_size in range(1, min(inst.m, inst.n) + 1):
        for combo in itertools.combinations(cells, subset_size):
            rows = [s for s, _ in combo]
            cols = [t for _, t in combo]
            if len(set(rows)) == subset_size and len(set(cols)) == subset_size:
                matchings.append(list(combo))
    best_value = -1.0
    best = None
    for assign in itertools.product(matchings, repeat=len(inst.items)):
        bundles = {}
        for a, cells_a in enumerate(assign):
            for cell in cells_a:
                bundles.setdefault(cell, set()).add(inst.items[a])
        value = sum(inst.value(s, t, b) for (s, t), b in bundles.items())
        if value > best_value:
            best_value = value
            best = bundles
    return best_value, best


class AllocationRounder:
    """Reusable rounding pipeline: per-item conflict-graph schemes."""

    def __init__(self, inst: AllocationInstance, sol: ConfigSolution,
                 step6: str = "exact", cal_rng: RngStream | None = None):
        self.inst = inst
        self.sol = sol
        m, n, k = inst.m, inst.n, len(inst.items)
        self.cells = m * n
        self.cum = np.cumsum(sol.weights.reshape(self.cells, -1), axis=1)
        self.value_tables = np.stack([inst.value_table(s, t).reshape(-1)
                                      for s in range(m) for t in range(n)])
        self.runners = []
        self.fms = []
        for a in range(k):
            marg = sol.item_marginal(a).reshape(-1)
            edges = [(s, m + t) for s in range(m) for t in range(n)]
            g = Graph(m + n, edges, bipartition=(range(m), range(m, m + n)))
            raw = FractionalMatching(g, np.where(marg > 1e-12, marg, 0.0))
            fm, _ = complete_loads(raw)
            kwargs = {"cal_rng": cal_rng.child("item", a)} if (
                step6 == "calibrated" and cal_rng is not None) else {}
            self.runners.append(RbgScheme(fm, step6=step6, **kwargs))
            self.fms.append(fm)
        self.cell_of = [self._edge_cell(a) for a in range(k)]

    def _edge_cell(self, a):
        """Map item-a's edge ids to cell indices (s * n + t), -1 for dummies.

        Grid edges were laid out cell-major before load completion, so the
        first m * n edge ids are the cells in order.
        """
        me = self.fms[a].graph.edge_count
        out = np.arange(me, dtype=np.int64)
        out[self.cells:] = -1
        return out

    def round_batch(self, trials: int, rng: RngStream) -> dict:
        """Sample bundles, run per-item schemes, score realized welfare."""
        inst = self.inst
        k = len(inst.items)
        welfare = np.zeros(trials)
        done = 0
        batch_id = 0
        example = None
        while done < trials:
            size = min(ROUND_BATCH, trials - done)
            gen = rng.child("cells", batch_id).generator()
            u = gen.random((size, self.cells))
            bundle_masks = np.empty((size, self.cells), dtype=np.int64)
            for cell in range(self.cells):
                bundle_masks[:, cell] = np.searchsorted(self.cum[cell], u[:, cell],
                                                        side="right")
            np.clip(bundle_masks, 0, self.cum.shape[1] - 1, out=bundle_masks)
            final_masks = np.zeros((size, self.cells), dtype=np.int64)
            for a in range(k):
                fm = self.fms[a]
                item_gen = rng.child("item", a, batch_id).generator()
                me = fm.graph.edge_count
                present = np.zeros((size, me), dtype=bool)
                cell_of = self.cell_of[a]
                real = cell_of >= 0
                present[:, real] = (bundle_masks[:, cell_of[real]] >> a) & 1
                dummy_idx = np.flatnonzero(~real)
                if len(dummy_idx):
                    present[:, dummy_idx] = (item_gen.random((size, len(dummy_idx)))
                                             < fm.x[dummy_idx][None, :])
                sel = self.runners[a].run_batch(present, item_gen)
                matched = sel[:, real]
                cells_reached = cell_of[real]
                rows, cols = np.nonzero(matched)
                final_masks[rows, cells_reached[cols]] |= 1 << a
            for cell in range(self.cells):
                welfare[done:done + size] += self.value_tables[cell][
                    final_masks[:, cell]]
            if example is None:
                example = self._bundles_from_masks(final_masks[0])
            done += size
            batch_id += 1
        return {"trials": trials, "welfare": welfare,
                "mean_welfare": float(welfare.mean()),
                "std_error": float(welfare.std(ddof=1) / np.sqrt(trials))
                if trials > 1 else 0.0,
                "example_allocation": example}

    def _bundles_from_masks(self, masks):
        out = {}
        for cell in range(self.cells):
            bundle = [self.inst.items[a] for a in range(len(self.inst.items))
                      if (int(masks[cell]) >> a) & 1]
            if bundle:
                s, t = divmod(cell, self.inst.n)
                out[f"{s},{t}"] = bundle
        return out


def round_solution(inst: AllocationInstance, sol: ConfigSolution, rng: RngStream,
                   step6_mode: str = "exact"):
    """One rounding: returns ({(s, t): bundle}, realized welfare)."""
    rounder = AllocationRounder(inst, sol, step6=step6_mode, cal_rng=rng.child("cal"))
    rep = rounder.round_batch(1, rng)
    alloc = {tuple(int(z) for z in key.split(",")): set(bundle)
             for key, bundle in rep["example_allocation"].items()}
    return alloc, float(rep["welfare"][0])


def allocation_violations(inst: AllocationInstance, alloc: dict):
    """Row/column disjointness violations of an integral allocation."""
    errs = []
    for s in range(inst.m):
        seen = set()
        for t in range(inst.n):
            bundle = alloc.get((s, t), set())
            dup = seen & set(bundle)
            if dup:
                errs.append(f"row {s}: items {sorted(dup)} repeated")
            seen |= set(bundle)
    for t in range(inst.n):
        seen = set()
        for s in range(inst.m):
            bundle = alloc.get((s, t), set())
            dup = seen & set(bundle)
            if dup:
                errs.append(f"column {t}: items {sorted(dup)} repeated")
            seen |= set(bundle)
    return errs
