"""Flow-insensitive inclusion-based pre-analysis solved by wave propagation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Mapping

from . import bitset
from .consgraph import ConstraintGraph, ConstraintGraphError, EdgeKind
from .ir import Addr, Call, Copy, Gep, Load, Program, Ret, Store, Variable

log = logging.getLogger(__name__)


class SolverError(Exception):
    """The solver failed to converge within its iteration cap."""


@dataclass(frozen=True)
class CallSite:
    label: str
    callee: int
    args: tuple[int, ...]
    dst: int | None


@dataclass(frozen=True)
class PointsToMap:
    """Final points-to sets keyed by variable name.

    ``objects`` describes every abstract object that can appear in a set,
    including field objects created while solving.
    """

    pts: Mapping[str, frozenset[str]]
    objects: Mapping[str, Variable]
    callgraph: frozenset[tuple[str, str]] = frozenset()
    iterations: int = 0

    def __getitem__(self, name: str) -> frozenset[str]:
        if name not in self.pts:
            raise KeyError(name)
        return self.pts[name]

    def get(self, name: str) -> frozenset[str]:
        return self.pts.get(name, frozenset())

    def __contains__(self, name: str) -> bool:
        return name in self.pts

    def to_json(self) -> dict:
        return {"mode": "fi", "pts": {v: sorted(s) for v, s in sorted(self.pts.items())}}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def gep_object(g: ConstraintGraph, obj: int, fld: str) -> int:
    """Return the interned node of field ``fld`` of base object ``obj``."""
    return g.field_object(obj, fld)


def add_statement_edges(g: ConstraintGraph, p: Program, *, labeled: bool) -> None:
    """Translate every statement into constraint edges on ``g``.

    Nodes for all program variables must already exist.  Load and Store edges
    carry their statement label when ``labeled`` is set.
    """
    node = g.node
    for s in p:
        lab = s.label if labeled else None
        if isinstance(s, Addr):
            g.add_edge(EdgeKind.ADDR, node(s.obj), node(s.dst))
        elif isinstance(s, Copy):
            g.add_edge(EdgeKind.COPY, node(s.src), node(s.dst))
        elif isinstance(s, Gep):
            g.add_edge(EdgeKind.GEP, node(s.src), node(s.dst), fld=s.fld)
        elif isinstance(s, Load):
            g.add_edge(EdgeKind.LOAD, node(s.ptr), node(s.dst), label=lab)
        elif isinstance(s, Store):
            g.add_edge(EdgeKind.STORE, node(s.src), node(s.ptr), label=lab)
        elif isinstance(s, Ret) and s.val:
            g.add_edge(EdgeKind.COPY, node(s.val), node(p.function(p.function_of[s.label]).return_var))
        elif isinstance(s, Call):
            dst = node(s.dst) if s.dst else None
            if s.indirect:
                g.indirect_calls.append(
                    CallSite(s.label, node(s.callee), tuple(node(a) for a in s.args), dst))
            else:
                bind_call(g, p, s.label, s.callee, tuple(node(a) for a in s.args), dst)


def bind_call(g: ConstraintGraph, p: Program, label: str, fname: str,
              args: tuple[int, ...], dst: int | None) -> list[tuple[int, int]]:
    """Add parameter and return Copy edges for one call binding; returns new edges."""
    f = p.function(fname)
    new = []
    for a, param in zip(args, f.params):
        if g.add_edge(EdgeKind.COPY, a, g.node(param)):
            new.append((a, g.node(param)))
    if dst is not None and g.has_node(f.return_var):
        rv = g.node(f.return_var)
        if g.add_edge(EdgeKind.COPY, rv, dst):
            new.append((rv, dst))
    return new


def build_ficonsg(p: Program) -> ConstraintGraph:
    """Plain constraint graph: one node per variable, one edge per statement."""
    g = ConstraintGraph()
    for v in p.objects():
        g.add_node(v)
    for name in p.top_level():
        g.add_node(p.variables[name])
    add_statement_edges(g, p, labeled=False)
    return g


def seed_addr(g: ConstraintGraph) -> set[int]:
    dirty = set()
    for e in g.edges_of(EdgeKind.ADDR):
        d = g.find(e.dst)
        g.pts[d] |= 1 << e.src
        dirty.add(d)
    return dirty


def callable_frozen(g: ConstraintGraph, p: Program) -> set[int]:
    """Nodes that may receive edges from call bindings discovered while solving."""
    frozen = set()
    if not g.indirect_calls:
        return frozen
    taken = {s.obj for s in p if isinstance(s, Addr)}
    for f in p.functions:
        if f.name in taken:
            frozen.update(g.node(q) for q in f.params)
    frozen.update(c.dst for c in g.indirect_calls if c.dst is not None)
    return frozen


def resolve_indirect_calls(g: ConstraintGraph, p: Program, bound: set[tuple[str, str]],
                           seen: dict[int, int]) -> tuple[list[tuple[str, str]], set[int]]:
    """Bind indirect call sites to newly pointed-to function objects.

    Returns the new ``(call label, function)`` bindings and the nodes whose sets grew.
    """
    new_bindings = []
    dirty: set[int] = set()
    for i, site in enumerate(g.indirect_calls):
        cur = g.points_to(site.callee)
        fresh = cur & ~seen.get(i, 0)
        seen[i] = cur
        for o in bitset.iter_bits(fresh):
            obj = g.variable(o)
            if not obj.function:
                continue
            f = p.function(obj.name)
            if len(f.params) != len(site.args):
                log.warning("call at %s: arity mismatch with %s, binding skipped",
                            site.label, f.name)
                continue
            if (site.label, f.name) in bound:
                continue
            bound.add((site.label, f.name))
            new_bindings.append((site.label, f.name))
            for src, dst in bind_call(g, p, site.label, f.name, site.args, site.dst):
                if g.flow(src, dst):
                    dirty.add(g.find(dst))
    return new_bindings, dirty


def wave_solve(g: ConstraintGraph, p: Program, *, simplify: bool = True,
               iter_cap: int | None = None) -> PointsToMap:
    """Solve ``g`` to its least fixpoint with staged wave propagation.

    Each round collapses Copy cycles, folds copy chains, propagates set
    differences in topological order, then inserts the Copy edges implied by
    Load/Store edges and by newly resolved indirect calls.  Rounds repeat while
    the edge set changes.
    """
    cap = iter_cap or max(10 * len(p.statements), 10)
    dirty = seed_addr(g)
    frozen = {n for n in range(len(g)) if g.is_object(n)} | callable_frozen(g, p)
    loads = [e for e in g.edges if e.kind is EdgeKind.LOAD]
    stores = [e for e in g.edges if e.kind is EdgeKind.STORE]
    handled: dict[int, int] = {}
    seen_callee: dict[int, int] = {}
    bound = {(s.label, s.callee) for s in p if isinstance(s, Call) and not s.indirect}
    iterations = 0
    while True:
        iterations += 1
        if iterations > cap:
            raise SolverError(f"no fixpoint after {cap} iterations")
        if simplify:
            order = g.scc_collapse().topo_order
            g.fold_copy_chains(frozen)
        else:
            order = list(range(len(g)))
        g.propagate(order, dirty)
        dirty = set()
        changed = False
        for e in loads + stores:
            ptr = e.src if e.kind is EdgeKind.LOAD else e.dst
            cur = g.points_to(ptr)
            fresh = cur & ~handled.get(id(e), 0)
            handled[id(e)] = cur
            for o in bitset.iter_bits(fresh):
                src, dst = (o, e.dst) if e.kind is EdgeKind.LOAD else (e.src, o)
                if g.add_edge(EdgeKind.COPY, src, dst):
                    changed = True
                    if g.flow(src, dst):
                        dirty.add(g.find(dst))
        new_bindings, grown = resolve_indirect_calls(g, p, bound, seen_callee)
        dirty |= grown
        if not (changed or new_bindings):
            break
    return _result(g, bound, iterations)


def _result(g: ConstraintGraph, bound, iterations: int) -> PointsToMap:
    pts = {}
    objects = {}
    for n, payload in enumerate(g.payloads):
        pts[payload.name] = frozenset(g.name(o) for o in bitset.iter_bits(g.points_to(n)))
        if g.is_object(n):
            objects[payload.name] = payload
    return PointsToMap(pts, objects, frozenset(bound), iterations)


def analyze_fi(p: Program, **kw) -> PointsToMap:
    return wave_solve(build_ficonsg(p), p, **kw)


__all__ = [
    "CallSite", "ConstraintGraphError", "PointsToMap", "SolverError", "add_statement_edges",
    "analyze_fi", "bind_call", "build_ficonsg", "gep_object", "wave_solve",
]
