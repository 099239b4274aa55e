"""Set-constraint graph shared by the flow-insensitive and flow-sensitive solvers.

Nodes are variables or versioned objects; every constraint is an edge.  Points-to
sets are int bitsets indexed by object node id and live on union-find
representatives, so cycle collapse and chain folding are plain merges.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from . import bitset
from .graphalgo import strongly_connected_components, topological_sort
from .ir import Variable, VarKind, field_name

log = logging.getLogger(__name__)


class ConstraintGraphError(Exception):
    pass


class EdgeKind(str, enum.Enum):
    ADDR = "addr"
    COPY = "copy"
    GEP = "gep"
    LOAD = "load"
    STORE = "store"


@dataclass(frozen=True)
class VersionedObject:
    base: str
    at: str

    @property
    def name(self) -> str:
        return f"{self.base}@{self.at}"


@dataclass(eq=False)
class Edge:
    """One constraint.  Direction follows value flow, except that Store edges
    run from the stored value to the pointer (``*dst = src``)."""

    kind: EdgeKind
    src: int
    dst: int
    fld: str | None = None
    label: str | None = None
    killable: bool = False
    active: bool = True

    @property
    def key(self) -> tuple:
        return (self.kind, self.src, self.dst, self.fld, self.label)


@dataclass(frozen=True)
class SccResult:
    rep: dict[int, int]
    topo_order: list[int]


@dataclass(frozen=True)
class ConstraintStats:
    addr: int = 0
    copy: int = 0
    gep: int = 0
    load: int = 0
    store: int = 0
    nodes: int = 0
    versioned: int = 0
    ptsets: int = 0

    @property
    def edges(self) -> int:
        return self.addr + self.copy + self.gep + self.load + self.store

    def as_dict(self) -> dict[str, int]:
        return {
            "addr": self.addr, "copy": self.copy, "gep": self.gep, "load": self.load,
            "store": self.store, "edges": self.edges, "nodes": self.nodes,
            "versioned": self.versioned, "ptsets": self.ptsets,
        }


def default_collapsible(e: Edge) -> bool:
    return e.kind is EdgeKind.COPY and e.active and not e.killable and e.label is None


def _orderable(e: Edge) -> bool:
    return e.kind in (EdgeKind.COPY, EdgeKind.GEP)


@dataclass
class ConstraintGraph:
    payloads: list[Variable | VersionedObject] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    out_edges: list[list[int]] = field(default_factory=list)
    in_edges: list[list[int]] = field(default_factory=list)
    pts: list[int] = field(default_factory=list)
    # portion of pts already pushed along out-edges (wave diff propagation)
    sent: list[int] = field(default_factory=list)
    # indirect call sites awaiting resolution (solver-specific records)
    indirect_calls: list = field(default_factory=list)
    _parent: list[int] = field(default_factory=list)
    _gep_cache: dict[tuple[int, str], int | None] = field(default_factory=dict)
    _ids: dict[object, int] = field(default_factory=dict)
    _edge_keys: dict[tuple, int] = field(default_factory=dict)

    # -- nodes ------------------------------------------------------------

    def add_node(self, payload: Variable | VersionedObject) -> int:
        key = payload.name if isinstance(payload, Variable) else payload
        nid = self._ids.get(key)
        if nid is not None:
            return nid
        nid = len(self.payloads)
        self._ids[key] = nid
        self.payloads.append(payload)
        self.out_edges.append([])
        self.in_edges.append([])
        self.pts.append(0)
        self.sent.append(0)
        self._parent.append(nid)
        return nid

    def node(self, name: str) -> int:
        return self._ids[name]

    def version_node(self, base: str, at: str) -> int:
        return self._ids[VersionedObject(base, at)]

    def has_node(self, key) -> bool:
        return key in self._ids

    def __len__(self) -> int:
        return len(self.payloads)

    def name(self, nid: int) -> str:
        return self.payloads[nid].name

    def is_object(self, nid: int) -> bool:
        p = self.payloads[nid]
        return isinstance(p, VersionedObject) or p.kind is VarKind.ADDRESS_TAKEN

    def is_version(self, nid: int) -> bool:
        return isinstance(self.payloads[nid], VersionedObject)

    def variable(self, nid: int) -> Variable:
        p = self.payloads[nid]
        if isinstance(p, VersionedObject):
            return self.payloads[self._ids[p.base]]
        return p

    def field_object(self, base: int, fld: str) -> int:
        """Intern the field object ``base.fld``; summary-ness is inherited."""
        obj = self.payloads[base]
        if not isinstance(obj, Variable) or not obj.is_object:
            raise ConstraintGraphError(f"{self.name(base)!r} is not an abstract object")
        if obj.field_of is not None:
            raise ConstraintGraphError(f"nested field {fld!r} on field object {obj.name!r}")
        if obj.function:
            raise ConstraintGraphError(f"field {fld!r} of function object {obj.name!r}")
        return self.add_node(Variable(field_name(obj.name, fld), VarKind.ADDRESS_TAKEN,
                                      summary=obj.summary, field_of=(obj.name, fld)))

    # -- edges ------------------------------------------------------------

    def add_edge(self, kind: EdgeKind, src: int, dst: int, *, fld: str | None = None,
                 label: str | None = None, killable: bool = False,
                 active: bool = True) -> bool:
        """Insert a constraint; returns False if an identical one exists."""
        self._check(kind, src, dst, fld, label, killable)
        key = (kind, src, dst, fld, label)
        if key in self._edge_keys:
            return False
        eid = len(self.edges)
        self._edge_keys[key] = eid
        self.edges.append(Edge(kind, src, dst, fld, label, killable,
                               active if killable else True))
        # adjacency lives on representatives once nodes have been merged
        self.out_edges[self.find(src)].append(eid)
        self.in_edges[self.find(dst)].append(eid)
        return True

    def edge_id(self, kind: EdgeKind, src: int, dst: int, *, fld: str | None = None,
                label: str | None = None) -> int | None:
        return self._edge_keys.get((kind, src, dst, fld, label))

    def _check(self, kind, src, dst, fld, label, killable) -> None:
        n = len(self.payloads)
        if not (0 <= src < n and 0 <= dst < n):
            raise ConstraintGraphError(f"edge endpoint out of range: {src}->{dst}")
        if kind is EdgeKind.ADDR:
            if self.is_version(src) or not self.is_object(src):
                raise ConstraintGraphError(f"Addr edge from non-object {self.name(src)!r}")
            if self.is_object(dst):
                raise ConstraintGraphError(f"Addr edge into object {self.name(dst)!r}")
        if kind in (EdgeKind.ADDR, EdgeKind.COPY, EdgeKind.GEP) and label is not None:
            raise ConstraintGraphError(f"{kind.value} edges carry no label")
        if (kind is EdgeKind.GEP) != (fld is not None):
            raise ConstraintGraphError("a field name is required on, and only on, Gep edges")
        if killable and kind is not EdgeKind.COPY:
            raise ConstraintGraphError("only Copy edges can be killable")
        if kind in (EdgeKind.LOAD, EdgeKind.STORE, EdgeKind.GEP):
            if self.is_object(src) or self.is_object(dst):
                raise ConstraintGraphError(f"{kind.value} edge between non top-level nodes")

    def edges_of(self, kind: EdgeKind) -> Iterator[Edge]:
        return (e for e in self.edges if e.kind is kind)

    # -- union-find -------------------------------------------------------

    def find(self, n: int) -> int:
        parent = self._parent
        root = n
        while parent[root] != root:
            root = parent[root]
        while parent[n] != root:
            parent[n], n = root, parent[n]
        return root

    def merge(self, keep: int, drop: int) -> int:
        """Merge the class of ``drop`` into that of ``keep``; returns the survivor."""
        keep, drop = self.find(keep), self.find(drop)
        if keep == drop:
            return keep
        self._parent[drop] = keep
        self.pts[keep] |= self.pts[drop]
        # edges of either side may not have seen the other side's facts
        self.sent[keep] &= self.sent[drop]
        self.out_edges[keep].extend(self.out_edges[drop])
        self.in_edges[keep].extend(self.in_edges[drop])
        self.out_edges[drop] = []
        self.in_edges[drop] = []
        self.pts[drop] = 0
        self.sent[drop] = 0
        return keep

    def representatives(self) -> list[int]:
        return [n for n in range(len(self.payloads)) if self._parent[n] == n]

    def points_to(self, n: int) -> int:
        return self.pts[self.find(n)]

    # -- simplification ---------------------------------------------------

    def _rep_succ(self, pred: Callable[[Edge], bool]) -> Callable[[int], list[int]]:
        def succ(r: int) -> list[int]:
            out = []
            for eid in self.out_edges[r]:
                e = self.edges[eid]
                if pred(e):
                    t = self.find(e.dst)
                    if t != r:
                        out.append(t)
            return out
        return succ

    def scc_collapse(self, active: Callable[[Edge], bool] | None = None,
                     order: Callable[[Edge], bool] | None = None) -> SccResult:
        """Collapse cycles of ``active`` edges and order the representatives.

        ``active`` defaults to unlabeled, non-killable, active Copy edges.  The
        returned order is topological for the collapsed ``active`` subgraph and
        follows ``order`` edges (default: every Copy and Gep edge) where those
        do not form cycles.
        """
        active = active or default_collapsible
        order = order or _orderable
        reps = self.representatives()
        for comp in strongly_connected_components(reps, self._rep_succ(active)):
            if len(comp) > 1:
                keep = min(comp)
                for n in comp:
                    self.merge(keep, n)
        reps = self.representatives()
        topo: list[int] = []
        active_succ = self._rep_succ(active)
        for comp in strongly_connected_components(reps, self._rep_succ(order)):
            if len(comp) == 1:
                topo.extend(comp)
            else:
                inside = set(comp)
                topo.extend(topological_sort(sorted(comp),
                                             lambda n: [m for m in active_succ(n) if m in inside]))
        rep = {n: self.find(n) for n in range(len(self.payloads))}
        return SccResult(rep, topo)

    def fold_copy_chains(self, frozen: Iterable[int] = ()) -> int:
        """Merge each node whose only inflow is one plain Copy edge into its source.

        ``frozen`` nodes are never merged away; callers list nodes that may gain
        inflow not yet present as edges (store targets, call parameters, ...).
        Returns the number of merges performed.
        """
        frozen_reps = {self.find(n) for n in frozen}
        merged = 0
        changed = True
        while changed:
            changed = False
            for v in self.representatives():
                if v in frozen_reps or self._parent[v] != v:
                    continue
                if self.is_object(v) and not self.is_version(v):
                    continue  # objects (incl. fields made while solving) gain inflow via stores
                src = self._sole_copy_source(v)
                if src is None:
                    continue
                self.merge(src, v)
                merged += 1
                changed = True
        return merged

    def _sole_copy_source(self, v: int) -> int | None:
        source = None
        for eid in self.in_edges[v]:
            e = self.edges[eid]
            if e.kind is EdgeKind.STORE:
                continue  # v is the pointer here, not a receiver
            if e.kind is EdgeKind.COPY and self.find(e.src) == v:
                continue
            if e.kind is not EdgeKind.COPY or e.killable or e.label is not None:
                return None
            s = self.find(e.src)
            if source is not None and s != source:
                return None
            source = s
        return source

    # -- propagation ------------------------------------------------------

    def flow(self, src: int, dst: int) -> bool:
        """Push the whole set of ``src`` into ``dst`` (for new or re-enabled edges)."""
        s, d = self.find(src), self.find(dst)
        add = self.pts[s] & ~self.pts[d]
        if add:
            self.pts[d] |= add
        return bool(add)

    def gep_targets(self, objs: int, fld: str) -> int:
        out = 0
        for o in bitset.iter_bits(objs):
            key = (o, fld)
            if key not in self._gep_cache:
                try:
                    self._gep_cache[key] = self.field_object(o, fld)
                except ConstraintGraphError as exc:
                    log.warning("ignoring field access: %s", exc)
                    self._gep_cache[key] = None
            f = self._gep_cache[key]
            if f is not None:
                out |= 1 << f
        return out

    def propagate(self, order: list[int], dirty: Iterable[int]) -> int:
        """Push set differences along active Copy and Gep edges until quiescent.

        Nodes are visited in ``order`` (a topological order of representatives);
        a node is revisited only when an edge closing a cycle grows it.  Returns
        the number of node visits that transmitted something.
        """
        find, pts, sent, edges = self.find, self.pts, self.sent, self.edges
        pos = {n: i for i, n in enumerate(order)}
        tail = len(order)
        heap: list[tuple[int, int]] = []
        queued: set[int] = set()
        # merged nodes can hold facts their combined out-edges never saw
        pending = [r for r in self.representatives() if pts[r] & ~sent[r]]
        for n in itertools.chain(dirty, pending):
            r = find(n)
            if r not in queued:
                queued.add(r)
                heap.append((pos.get(r, tail + r), r))
        heapq.heapify(heap)
        visits = 0
        while heap:
            _, n = heapq.heappop(heap)
            queued.discard(n)
            diff = pts[n] & ~sent[n]
            if not diff:
                continue
            sent[n] |= diff
            visits += 1
            for eid in self.out_edges[n]:
                e = edges[eid]
                if e.kind is EdgeKind.COPY:
                    if not e.active:
                        continue
                    add = diff
                elif e.kind is EdgeKind.GEP:
                    add = self.gep_targets(diff, e.fld)
                else:
                    continue
                t = find(e.dst)
                if add & ~pts[t]:
                    pts[t] |= add
                    if t not in queued:
                        queued.add(t)
                        heapq.heappush(heap, (pos.get(t, tail + t), t))
        return visits

    # -- reporting --------------------------------------------------------

    def count_constraints(self) -> ConstraintStats:
        counts = dict.fromkeys(EdgeKind, 0)
        for e in self.edges:
            counts[e.kind] += 1
        versioned = sum(1 for p in self.payloads if isinstance(p, VersionedObject))
        ptsets = sum(1 for r in self.representatives() if self.pts[r])
        return ConstraintStats(
            addr=counts[EdgeKind.ADDR], copy=counts[EdgeKind.COPY], gep=counts[EdgeKind.GEP],
            load=counts[EdgeKind.LOAD], store=counts[EdgeKind.STORE],
            nodes=len(self.payloads) - versioned, versioned=versioned, ptsets=ptsets,
        )

    def pts_names(self, n: int) -> list[str]:
        return sorted(self.name(o) for o in bitset.iter_bits(self.points_to(n)))

    def to_dot(self) -> str:
        lines = ["digraph consg {"]
        for nid, p in enumerate(self.payloads):
            shape = "box" if self.is_object(nid) else "ellipse"
            lines.append(f'  n{nid} [label="{p.name}", shape={shape}];')
        style = {EdgeKind.ADDR: "dashed", EdgeKind.COPY: "solid", EdgeKind.GEP: "bold",
                 EdgeKind.LOAD: "solid", EdgeKind.STORE: "solid"}
        rows = []
        for e in self.edges:
            text = e.kind.value
            if e.fld is not None:
                text += f", {e.fld}"
            if e.label is not None:
                text += f", {e.label}"
            attrs = f'label="{text}", style={"dotted" if e.killable else style[e.kind]}'
            rows.append(((e.src, e.dst, e.kind.value, e.fld or "", e.label or ""),
                         f"  n{e.src} -> n{e.dst} [{attrs}];"))
        lines.extend(r for _, r in sorted(rows))
        lines.append("}")
        return "\n".join(lines) + "\n"
