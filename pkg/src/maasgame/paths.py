"""Shortest-path machinery shared by the assignment solver and the
stability separation oracle.

Paths are identified by their exact link-index sequence (fares are
link-additive, so the sequence determines every downstream constraint).
Among equal-cost shortest paths the lexicographically smallest link-index
sequence wins, which keeps every caller deterministic. The lex rule is
exact for positive weights; links of zero weight fall back to heap order,
still deterministic.
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional, Sequence

COST_TIE_TOL = 1e-12


class GraphView:
    """Static directed graph over an indexed link set.

    Built once per expanded network; cheap to query repeatedly with different
    weight vectors. Queries share no mutable state, so distinct calls may run
    concurrently.
    """

    def __init__(self, n_nodes: int, tails: Sequence[int], heads: Sequence[int]):
        self.n_nodes = n_nodes
        self.tails = list(tails)
        self.heads = list(heads)
        self.out_links: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
        for idx, (t, h) in enumerate(zip(self.tails, self.heads)):
            self.out_links[t].append((idx, h))

    # -- core search ---------------------------------------------------

    def shortest_tree(
        self,
        weight: Sequence[float],
        source: int,
        target: Optional[int] = None,
        link_allowed: Optional[Callable[[int], bool]] = None,
    ) -> tuple[list[float], list[int]]:
        """Dijkstra from source; nonnegative weights required.

        Returns (dist, pred) with pred[node] = incoming link index on the
        chosen shortest path (-1 at the source and unreached nodes).
        """
        INF = float("inf")
        dist = [INF] * self.n_nodes
        pred = [-1] * self.n_nodes
        done = [False] * self.n_nodes
        dist[source] = 0.0
        heap: list[tuple[float, int]] = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if target is not None and u == target:
                break
            for link_idx, v in self.out_links[u]:
                if done[v]:
                    continue
                if link_allowed is not None and not link_allowed(link_idx):
                    continue
                w = weight[link_idx]
                if w == INF:
                    continue
                nd = d + w
                if nd < dist[v] - COST_TIE_TOL:
                    dist[v] = nd
                    pred[v] = link_idx
                    heapq.heappush(heap, (nd, v))
                elif nd <= dist[v] + COST_TIE_TOL and pred[v] >= 0:
                    cand = self._trace(pred, u) + (link_idx,)
                    if cand < self._trace_link(pred, pred[v]):
                        pred[v] = link_idx
                        heapq.heappush(heap, (nd, v))
        return dist, pred

    def shortest_path(
        self,
        weight: Sequence[float],
        source: int,
        target: int,
        link_allowed: Optional[Callable[[int], bool]] = None,
    ) -> tuple[float, tuple[int, ...]]:
        """Returns (cost, link sequence); (inf, ()) if unreachable."""
        dist, pred = self.shortest_tree(weight, source, target, link_allowed)
        if dist[target] == float("inf"):
            return float("inf"), ()
        return dist[target], self.path_from_tree(pred, source, target)

    # -- path reconstruction -------------------------------------------

    def _trace(self, pred: Sequence[int], node: int) -> tuple[int, ...]:
        seq: list[int] = []
        link = pred[node]
        while link >= 0:
            seq.append(link)
            node = self.tails[link]
            link = pred[node]
        seq.reverse()
        return tuple(seq)

    def _trace_link(self, pred: Sequence[int], link: int) -> tuple[int, ...]:
        return self._trace(pred, self.tails[link]) + (link,)

    def path_from_tree(self, pred: Sequence[int], source: int, target: int) -> tuple[int, ...]:
        seq: list[int] = []
        node = target
        while node != source:
            link = pred[node]
            if link < 0:
                return ()
            seq.append(link)
            node = self.tails[link]
        seq.reverse()
        return tuple(seq)


def enumerate_simple_paths(
    graph: GraphView,
    source: int,
    target: int,
    link_allowed: Optional[Callable[[int], bool]] = None,
    max_paths: int = 100_000,
) -> list[tuple[int, ...]]:
    """All simple paths source -> target as link sequences (test-sized graphs)."""
    out: list[tuple[int, ...]] = []

    def rec(node: int, seq: list[int], seen: set[int]):
        if len(out) >= max_paths:
            return
        if node == target:
            out.append(tuple(seq))
            return
        for link_idx, head in graph.out_links[node]:
            if head in seen:
                continue
            if link_allowed is not None and not link_allowed(link_idx):
                continue
            seq.append(link_idx)
            seen.add(head)
            rec(head, seq, seen)
            seen.remove(head)
            seq.pop()

    rec(source, [], {source})
    out.sort()
    return out
