"""Iterative strongly-connected-component search (Nuutila's variant of Tarjan).

Only component roots are pushed on the component stack, so nodes that are
trivially their own component never touch it.
"""

from __future__ import annotations

from typing import Callable, Hashable, Iterable, Sequence, TypeVar

N = TypeVar("N", bound=Hashable)


def strongly_connected_components(
    nodes: Iterable[N], successors: Callable[[N], Iterable[N]]
) -> list[list[N]]:
    """Return the SCCs of the graph in topological order (sources first).

    Each component lists its members in discovery order.  Successors outside
    ``nodes`` are ignored.
    """
    nodes = list(nodes)
    members = set(nodes)
    index: dict[N, int] = {}
    low: dict[N, int] = {}
    done: set[N] = set()
    stack: list[N] = []
    comps: list[list[N]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        work = [(root, iter(successors(root)))]
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in members or w in done:
                    continue
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    work.append((w, iter(successors(w))))
                    advanced = True
                    break
                if low[w] < low[v]:
                    low[v] = low[w]
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = [v]
                while stack and index[stack[-1]] > index[v]:
                    comp.append(stack.pop())
                for c in comp:
                    done.add(c)
                comps.append(comp)
            else:
                stack.append(v)
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
    comps.reverse()
    return comps


def topological_sort(nodes: Sequence[N], successors: Callable[[N], Iterable[N]]) -> list[N]:
    """Kahn's algorithm over an acyclic graph; ties broken by position in ``nodes``."""
    import heapq

    pos = {n: i for i, n in enumerate(nodes)}
    indeg = dict.fromkeys(nodes, 0)
    for n in nodes:
        for m in successors(n):
            if m in indeg and m != n:
                indeg[m] += 1
    heap = [pos[n] for n in nodes if indeg[n] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        n = nodes[heapq.heappop(heap)]
        out.append(n)
        for m in successors(n):
            if m in indeg and m != n:
                indeg[m] -= 1
                if indeg[m] == 0:
                    heapq.heappush(heap, pos[m])
    if len(out) != len(nodes):
        raise ValueError("graph has a cycle")
    return out
