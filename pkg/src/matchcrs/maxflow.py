"""Dinic maximum flow on small dense networks with real capacities.

Level-graph phases make termination independent of capacity values, which
matters here because capacities are probabilities (arbitrary reals).
"""

from __future__ import annotations

EPS = 1e-12


class FlowNetwork:
    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head = [[] for _ in range(n_nodes)]  # node -> list of edge ids
        self.to = []
        self.cap = []

    def add_edge(self, u: int, v: int, capacity: float) -> int:
        """Directed edge u->v; returns its id (reverse edge is id^1)."""
        eid = len(self.to)
        self.head[u].append(eid)
        self.to.append(v)
        self.cap.append(float(capacity))
        self.head[v].append(eid + 1)
        self.to.append(u)
        self.cap.append(0.0)
        return eid

    def flow_on(self, eid: int) -> float:
        return self.cap[eid + 1]

    def _bfs_levels(self, s, t):
        level = [-1] * self.n
        level[s] = 0
        queue = [s]
        for u in queue:
            for eid in self.head[u]:
                v = self.to[eid]
                if level[v] < 0 and self.cap[eid] > EPS:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _dfs_block(self, u, t, pushed, level, it):
        if u == t:
            return pushed
        while it[u] < len(self.head[u]):
            eid = self.head[u][it[u]]
            v = self.to[eid]
            if self.cap[eid] > EPS and level[v] == level[u] + 1:
                got = self._dfs_block(v, t, min(pushed, self.cap[eid]), level, it)
                if got > EPS:
                    self.cap[eid] -= got
                    self.cap[eid ^ 1] += got
                    return got
            it[u] += 1
        return 0.0

    def max_flow(self, s: int, t: int) -> float:
        total = 0.0
        while True:
            level = self._bfs_levels(s, t)
            if level is None:
                return total
            it = [0] * self.n
            while True:
                pushed = self._dfs_block(s, t, float("inf"), level, it)
                if pushed <= EPS:
                    break
                total += pushed

    def residual_reachable(self, s: int):
        """Nodes reachable from s in the residual graph (min-cut source side)."""
        seen = [False] * self.n
        seen[s] = True
        stack = [s]
        while stack:
            u = stack.pop()
            for eid in self.head[u]:
                v = self.to[eid]
                if not seen[v] and self.cap[eid] > EPS:
                    seen[v] = True
                    stack.append(v)
        return {v for v in range(self.n) if seen[v]}
