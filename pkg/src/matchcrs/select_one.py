"""Contention resolution for picking one element of a random subset.

Given a distribution D over subsets of a small ground set and per-element
target marginals b_i, a selection rule maps each realized subset S to a
distribution over "pick one element of S or nothing" so that overall
Pr[pick = i] >= b_i. Such a rule exists if and only if every subset S
satisfies Pr[S hits R] >= sum of b_i over S, and an explicit rule falls
out of a maximum flow on the network subsets -> elements: route Pr[S]
from the source through subset nodes into element sinks with capacity
b_i; the per-subset pick distribution is the flow split at that subset.

Rules can optionally be made monotone (an element's pick probability
never grows when the realized set grows) by local probability transfers
between nested subsets, without changing any marginal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegreeCapExceeded, Infeasible
from .maxflow import FlowNetwork

log = logging.getLogger(__name__)

DEFAULT_GROUND_CAP = 20
MARGINAL_TOL = 1e-9


class SubsetDistribution:
    """Distribution over subsets of an ordered ground set.

    Subsets are bitmasks over ground positions. Either an explicit atom
    list or independent per-element probabilities (expanded on demand).
    """

    def __init__(self, ground, atoms=None, product_p=None):
        self.ground = tuple(ground)
        self.k = len(self.ground)
        if (atoms is None) == (product_p is None):
            raise ValueError("exactly one of atoms / product_p required")
        self._atoms = None
        self.product_p = None
        if atoms is not None:
            total = sum(p for _, p in atoms)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"atom probabilities sum to {total!r}")
            merged = {}
            for mask, p in atoms:
                if p < -1e-15:
                    raise ValueError("negative atom probability")
                merged[int(mask)] = merged.get(int(mask), 0.0) + float(p)
            self._atoms = sorted(merged.items())
        else:
            self.product_p = np.asarray(product_p, dtype=np.float64)
            if self.product_p.shape != (self.k,):
                raise ValueError("one probability per ground element required")
            if np.any(self.product_p < 0) or np.any(self.product_p > 1):
                raise ValueError("element probabilities must lie in [0,1]")

    @classmethod
    def explicit(cls, ground, atoms):
        return cls(ground, atoms=atoms)

    @classmethod
    def product(cls, ground, p):
        return cls(ground, product_p=p)

    def atoms(self):
        """All (mask, probability) pairs with positive probability."""
        if self._atoms is None:
            p = self.product_p
            out = []
            for mask in range(1 << self.k):
                prob = 1.0
                for i in range(self.k):
                    prob *= p[i] if (mask >> i) & 1 else 1.0 - p[i]
                if prob > 0.0:
                    out.append((mask, prob))
            self._atoms = out
        return self._atoms

    def hit_probability(self, mask: int) -> float:
        """Pr[realized subset intersects `mask`]."""
        if self.product_p is not None:
            miss = 1.0
            for i in range(self.k):
                if (mask >> i) & 1:
                    miss *= 1.0 - self.product_p[i]
            return 1.0 - miss
        return sum(p for m, p in self.atoms() if m & mask)

    def index_of(self, element) -> int:
        return self.ground.index(element)


@dataclass
class TargetMarginals:
    """Per-element lower bounds on the overall pick probability."""

    beta: dict

    def vector(self, ground):
        return np.asarray([float(self.beta.get(g, 0.0)) for g in ground])


@dataclass
class SelectionRule:
    """Pick-one rule: per realized subset, probabilities of picking each member.

    `pick[mask]` is a length-k vector of pick probabilities over ground
    positions (zero outside the subset); the leftover probability picks
    nothing. Subsets absent from `pick` had probability zero when the
    rule was built; applying the rule to one returns nothing.
    """

    ground: tuple
    pick: dict
    achieved: np.ndarray
    targets: np.ndarray
    _dense: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def k(self):
        return len(self.ground)

    def pick_prob(self, mask: int, element) -> float:
        row = self.pick.get(int(mask))
        if row is None:
            return 0.0
        return float(row[self.ground.index(element)])

    def apply(self, realized, gen) -> object | None:
        """Draw the pick for a realized subset (ids iterable or bitmask)."""
        mask = self.mask_of(realized)
        if mask == 0:
            return None
        row = self.pick.get(mask)
        if row is None:
            log.warning("rule applied to zero-probability subset %s; picking nothing",
                        [self.ground[i] for i in range(self.k) if (mask >> i) & 1])
            return None
        u = gen.random()
        acc = 0.0
        for i in range(self.k):
            acc += row[i]
            if u < acc:
                return self.ground[i]
        return None

    def mask_of(self, realized) -> int:
        if isinstance(realized, (int, np.integer)):
            return int(realized)
        mask = 0
        for g in realized:
            mask |= 1 << self.ground.index(g)
        return mask

    def dense_cumulative(self) -> np.ndarray:
        """(2^k, k+1) cumulative pick table for vectorized application.

        Row m holds cumsum of pick probabilities; a uniform draw u selects
        position searchsorted(row, u), with position k meaning "nothing".
        Unknown-subset rows are all zeros, so they always pick nothing.
        """
        if self._dense is None:
            dense = np.zeros((1 << self.k, self.k))
            for mask, row in self.pick.items():
                dense[mask] = row
            self._dense = np.cumsum(dense, axis=1)
        return self._dense

    def to_jsonable(self):
        return {
            "ground": list(self.ground),
            "targets": self.targets.tolist(),
            "achieved": self.achieved.tolist(),
            "pick": {str(mask): row.tolist() for mask, row in sorted(self.pick.items())},
        }


def build_rule(dist: SubsetDistribution, targets: TargetMarginals,
               cap: int = DEFAULT_GROUND_CAP,
               use_slack: bool = False) -> SelectionRule:
    """Construct a pick-one rule meeting the targets, or raise Infeasible.

    The max-flow witness on failure is a violating subset S with
    Pr[S hits R] < sum of targets over S.

    With use_slack, leftover per-subset probability (mass the flow did not
    need to route) is split equally among the subset's members, so the rule
    never picks "nothing" from a non-empty set unless targets force it.
    Marginals then exceed the targets; leave it off when a later stage
    depends on the marginals being met exactly.
    """
    k = dist.k
    if k > cap:
        raise DegreeCapExceeded(k, cap)
    beta = targets.vector(dist.ground)
    if np.any(beta < 0):
        raise ValueError("targets must be non-negative")
    atoms = dist.atoms()
    total_target = float(beta.sum())

    # nodes: 0 = source, 1..A = atoms, A+1..A+k = elements, A+k+1 = sink
    a_count = len(atoms)
    net = FlowNetwork(a_count + k + 2)
    source, sink = 0, a_count + k + 1
    atom_elem_edges = {}
    for a, (mask, p) in enumerate(atoms):
        net.add_edge(source, 1 + a, p)
        for i in range(k):
            if (mask >> i) & 1:
                atom_elem_edges[(a, i)] = net.add_edge(1 + a, 1 + a_count + i, math.inf)
    for i in range(k):
        net.add_edge(1 + a_count + i, sink, beta[i])

    value = net.max_flow(source, sink)
    if value < total_target - MARGINAL_TOL:
        reach = net.residual_reachable(source)
        witness = {dist.ground[i] for i in range(k) if (1 + a_count + i) not in reach}
        raise Infeasible(witness, deficit=total_target - value)

    pick = {}
    for a, (mask, p) in enumerate(atoms):
        row = np.zeros(k)
        members = [i for i in range(k) if (mask >> i) & 1]
        for i in members:
            row[i] = net.flow_on(atom_elem_edges[(a, i)]) / p
        row = np.clip(row, 0.0, None)
        s = row.sum()
        if s > 1.0:  # float dust from the flow solve
            row /= s
        elif use_slack and members:
            row[members] += (1.0 - s) / len(members)
        pick[mask] = row
    if 0 not in pick and any(m == 0 for m, _ in atoms):
        pick[0] = np.zeros(k)

    achieved = np.zeros(k)
    for mask, p in atoms:
        achieved += p * pick[mask]
    if np.any(achieved < beta - MARGINAL_TOL):
        raise AssertionError("constructed rule misses its marginals "
                             f"(achieved {achieved}, targets {beta})")
    return SelectionRule(tuple(dist.ground), pick, achieved, beta)


def rule_potential(rule: SelectionRule, dist: SubsetDistribution) -> float:
    """Sum over nested subset pairs of probability-weighted monotonicity gaps."""
    atoms = dict(dist.atoms())
    masks = sorted(atoms)
    phi = 0.0
    for m2 in masks:
        sub = m2
        # iterate proper submasks of m2
        while True:
            sub = (sub - 1) & m2
            if sub == 0:
                break
            if sub in atoms:
                p12 = atoms[sub] * atoms[m2]
                r1 = rule.pick.get(sub)
                r2 = rule.pick.get(m2)
                if r1 is None or r2 is None:
                    continue
                for i in range(rule.k):
                    if (sub >> i) & 1:
                        gap = r2[i] - r1[i]
                        if gap > 0:
                            phi += p12 * gap
    return phi


def monotonize(rule: SelectionRule, dist: SubsetDistribution,
               tol: float = 1e-12, max_transfers: int = 10 ** 6) -> SelectionRule:
    """Rebalance a rule into a monotone one with identical marginals.

    Repeatedly transfers pick probability across pairs S1 < S2 differing in
    one element until no pair violates monotonicity. Marginals are preserved
    exactly by scaling the two adjustments with the subset probabilities.
    If the transfer budget runs out the partial result is returned and a
    warning logged.
    """
    atoms = dict(dist.atoms())
    pick = {m: np.array(r) for m, r in rule.pick.items()}
    k = rule.k
    masks = sorted(m for m in atoms if m in pick)

    pairs = []
    for m2 in masks:
        for b in range(k):
            if (m2 >> b) & 1:
                m1 = m2 ^ (1 << b)
                if m1 in atoms and m1 in pick and m1 != 0:
                    pairs.append((m1, m2))

    transfers = 0
    for _sweep in range(max_transfers):
        worst = 0.0
        for m1, m2 in pairs:
            r1, r2 = pick[m1], pick[m2]
            p1, p2 = atoms[m1], atoms[m2]
            for i in range(k):
                if not (m1 >> i) & 1:
                    continue
                gap = r2[i] - r1[i]
                if gap <= tol:
                    continue
                worst = max(worst, gap)
                # prefer swapping against an element moving the other way
                donor = -1
                best = tol
                for j in range(k):
                    if j != i and (m1 >> j) & 1 and r1[j] - r2[j] > best:
                        best = r1[j] - r2[j]
                        donor = j
                if donor >= 0:
                    delta = min(gap, r1[donor] - r2[donor])
                    d1 = delta * p2 / (p1 + p2)
                    d2 = delta * p1 / (p1 + p2)
                    r1[i] += d1
                    r1[donor] -= d1
                    r2[i] -= d2
                    r2[donor] += d2
                else:
                    # no donor: S1 has slack, raise there and lower at S2
                    slack = 1.0 - r1.sum()
                    d1 = min(gap * p2 / (p1 + p2), slack)
                    if d1 <= 0:
                        continue
                    d2 = d1 * p1 / p2
                    r1[i] += d1
                    r2[i] -= d2
                transfers += 1
                if transfers >= max_transfers:
                    log.warning("monotonize: transfer budget exhausted "
                                "(worst residual gap %.3g); returning partial rule", gap)
                    return SelectionRule(rule.ground, pick, rule.achieved.copy(),
                                         rule.targets.copy())
        if worst <= tol:
            break

    achieved = np.zeros(k)
    for mask, p in atoms.items():
        row = pick.get(mask)
        if row is not None:
            achieved += p * row
    return SelectionRule(rule.ground, pick, achieved, rule.targets.copy())
