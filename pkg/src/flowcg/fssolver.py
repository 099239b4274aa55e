"""Flow-sensitive solving on the FSConsG.

The solver is the staged wave solver of the pre-analysis with two changes:
Load and Store edges are resolved against the versioned object at their
label, and Copy edges into a store's versions are killable.  A killable edge
starts out pending and is switched on once the store's pointer is known to
hit something other than one non-summary object; while the pointer set is
exactly ``{o}`` the edges into ``o@label`` stay off (a strong update).  Because
pending edges never carry anything, a version is never polluted before the
strong-update decision, and every later decision only switches edges on, so
the iteration is monotone.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping

from . import bitset
from .andersen import (PointsToMap, SolverError, analyze_fi, callable_frozen,
                       resolve_indirect_calls, seed_addr)
from .consgraph import ConstraintStats, Edge, EdgeKind
from .defuse import IndirectDefUseEdge, compute_mod_ref, reaching_defuse
from .fsconsg import FsConsGraph, VersionError, build_fsconsg
from .ir import Cfg, Program, Store, build_cfg

log = logging.getLogger(__name__)

PENDING, STRONG, WEAK = "pending", "strong", "weak"


class QueryError(KeyError):
    pass


@dataclass(frozen=True)
class FsResult:
    pts: Mapping[str, frozenset[str]]
    versions: Mapping[tuple[str, str], frozenset[str]]
    defuse: frozenset[IndirectDefUseEdge]
    su_labels: frozenset[str]
    callgraph: frozenset[tuple[str, str]]
    iterations: int
    fallbacks: int
    stats: ConstraintStats
    before_sets: Mapping[tuple[str, str], frozenset[str]] = field(default_factory=dict,
                                                                  repr=False)

    def before(self, obj: str, label: str) -> frozenset[str]:
        """Union of the reaching definitions' versions: the set on entry to ``label``."""
        if (obj, label) not in self.versions:
            raise QueryError(f"no version of {obj!r} at {label!r}")
        return self.before_sets.get((obj, label), frozenset())

    def facts(self) -> dict:
        """The analysis answer alone, without solver bookkeeping such as round counts."""
        out = self.to_json()
        del out["iterations"], out["fallbacks"]
        return out

    def to_json(self) -> dict:
        return {
            "mode": "fs",
            "pts": {v: sorted(s) for v, s in sorted(self.pts.items())},
            "versions": {f"{o}@{lab}": sorted(s)
                         for (o, lab), s in sorted(self.versions.items(),
                                                   key=lambda kv: f"{kv[0][0]}@{kv[0][1]}")},
            "su_labels": sorted(self.su_labels),
            "iterations": self.iterations,
            "fallbacks": self.fallbacks,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


class FsSolver:
    """Mutable solving state over one FSConsG (one instance per analysis)."""

    def __init__(self, fsg: FsConsGraph, prog: Program, *, simplify: bool = True,
                 iter_cap: int | None = None, strong_updates: bool = True):
        self.fsg = fsg
        self.g = fsg.graph
        self.prog = prog
        self.simplify = simplify
        self.iter_cap = iter_cap or max(10 * len(prog.statements), 10)
        self.strong_updates = strong_updates
        self.status: dict[tuple[str, str], str] = {}
        self.handled: dict[int, int] = {}
        self.dirty: set[int] = set()
        self.fallbacks = 0
        self.iterations = 0
        self.bound = set(fsg.cfg.bindings)
        self.seen_callee: dict[int, int] = {}

    # -- edge processing ----------------------------------------------------

    def _insert_copy(self, src: int, dst: int) -> bool:
        if not self.g.add_edge(EdgeKind.COPY, src, dst):
            return False
        if self.g.flow(src, dst):
            self.dirty.add(self.g.find(dst))
        return True

    def _activate(self, e: Edge) -> None:
        e.active = True
        if self.g.flow(e.src, e.dst):
            self.dirty.add(self.g.find(e.dst))

    def _version(self, table: Mapping[str, int], obj: int, label: str) -> int:
        v = table.get(self.g.name(obj))
        if v is not None:
            return v
        if log.isEnabledFor(logging.DEBUG):
            raise VersionError(f"no version of {self.g.name(obj)!r} at {label}")
        self.fallbacks += 1
        return obj

    def _fresh(self, e: Edge, ptr: int) -> tuple[int, int]:
        cur = self.g.points_to(ptr)
        key = id(e)
        fresh = cur & ~self.handled.get(key, 0)
        self.handled[key] = cur
        return cur, fresh

    def process_store(self, e: Edge) -> bool:
        """``*x = q`` at ``e.label``: feed ``q`` into ``o@label`` for each ``o`` in pts(x).

        Returns True if an edge was inserted or switched on.
        """
        cur, fresh = self._fresh(e, e.dst)
        if not cur:
            return False
        label = e.label
        table = self.fsg.versions_at.get(label, {})
        changed = False
        for o in bitset.iter_bits(fresh):
            changed |= self._insert_copy(e.src, self._version(table, o, label))

        strong = None
        sole = bitset.sole(cur)
        if sole is not None and self.strong_updates and not self.g.variable(sole).summary:
            strong = self.g.name(sole)
        for obj, v in table.items():
            key = (label, obj)
            st = self.status.get(key, PENDING)
            if obj == strong:
                if st == PENDING:
                    # killable in-edges never fired, so o@label holds nothing stale
                    self.status[key] = STRONG
            elif st != WEAK:
                self.status[key] = WEAK
                for eid in self.fsg.killable_in.get(v, ()):
                    self._activate(self.g.edges[eid])
                changed = True
        return changed

    def process_load(self, e: Edge) -> bool:
        """``w = *x`` at ``e.label``: copy ``o@label`` into ``w`` for each ``o`` in pts(x)."""
        _, fresh = self._fresh(e, e.src)
        table = self.fsg.versions_at.get(e.label, {})
        changed = False
        for o in bitset.iter_bits(fresh):
            changed |= self._insert_copy(self._version(table, o, e.label), e.dst)
        return changed

    def update_call_graph(self) -> bool:
        """Bind indirect calls to new function targets and extend the memory chains."""
        new, grown = resolve_indirect_calls(self.g, self.prog, self.bound, self.seen_callee)
        self.dirty |= grown
        if not new:
            return False
        fsg = self.fsg
        fsg.cfg = fsg.cfg.with_bindings(new)
        every = reaching_defuse(fsg.cfg, fsg.mod_ref)
        fsg.self_defs.update((d.def_label, d.object) for d in every if d.def_label == d.use_label)
        du = frozenset(d for d in every if d.def_label != d.use_label)
        for d in sorted(du - fsg.defuse):
            on = self.status.get((d.use_label, d.object)) == WEAK
            eid = fsg.add_defuse(d, active=on)
            if eid is not None and self.g.edges[eid].active:
                self._activate(self.g.edges[eid])
        return True

    # -- main loop ----------------------------------------------------------

    def _frozen(self) -> set[int]:
        g = self.g
        frozen = {n for n in range(len(g)) if g.is_object(n) and not g.is_version(n)}
        for label, table in self.fsg.versions_at.items():
            if isinstance(self.prog.statements[label], Store) or g.indirect_calls:
                frozen.update(table.values())
        return frozen | callable_frozen(g, self.prog)

    def solve(self) -> FsResult:
        g = self.g
        self.dirty = seed_addr(g)
        index = self.prog.label_index
        mem = sorted((e for e in g.edges if e.kind in (EdgeKind.LOAD, EdgeKind.STORE)),
                     key=lambda e: index[e.label])
        frozen = self._frozen() if self.simplify else set()
        while True:
            self.iterations += 1
            if self.iterations > self.iter_cap:
                raise SolverError(f"no fixpoint after {self.iter_cap} iterations")
            if self.simplify:
                order = g.scc_collapse().topo_order
                g.fold_copy_chains(frozen)
            else:
                order = list(range(len(g)))
            g.propagate(order, self.dirty)
            self.dirty = set()
            changed = False
            for e in mem:
                if e.kind is EdgeKind.STORE:
                    changed |= self.process_store(e)
                else:
                    changed |= self.process_load(e)
            changed |= self.update_call_graph()
            if not changed:
                break
        return self._result()

    def _result(self) -> FsResult:
        g, fsg = self.g, self.fsg

        def names(n: int) -> frozenset[str]:
            return frozenset(g.name(o) for o in bitset.iter_bits(g.points_to(n)))

        pts = {g.name(n): names(n) for n in range(len(g)) if not g.is_object(n)}
        versions = {(obj, label): names(v)
                    for label, table in fsg.versions_at.items() for obj, v in table.items()}
        before: dict[tuple[str, str], frozenset[str]] = {}
        for d in fsg.defuse:
            key = (d.object, d.use_label)
            before[key] = before.get(key, frozenset()) | versions[(d.object, d.def_label)]
        for label, obj in fsg.self_defs:
            key = (obj, label)
            before[key] = before.get(key, frozenset()) | versions[key]
        # a strong update counts only where it actually cut an incoming chain
        su = frozenset(label for (label, obj), st in self.status.items()
                       if st == STRONG and fsg.killable_in.get(fsg.versions_at[label][obj]))
        return FsResult(pts, versions, frozenset(fsg.defuse), su, frozenset(self.bound),
                        self.iterations, self.fallbacks, g.count_constraints(), before)


def fs_solve(g: FsConsGraph, prog: Program, **kw) -> FsResult:
    return FsSolver(g, prog, **kw).solve()


def process_store(solver: FsSolver, e: Edge) -> bool:
    return solver.process_store(e)


def process_load(solver: FsSolver, e: Edge) -> bool:
    return solver.process_load(e)


def update_call_graph(solver: FsSolver) -> bool:
    return solver.update_call_graph()


def query_pts(r: FsResult, v: str | tuple[str, str, str]) -> frozenset[str]:
    """Points-to set of a top-level variable, or of ``(object, label, side)``
    where side is ``"before"`` or ``"after"`` the statement at ``label``."""
    if isinstance(v, str):
        if v not in r.pts:
            raise QueryError(f"unknown variable {v!r}")
        return r.pts[v]
    obj, label, side = v
    if (obj, label) not in r.versions:
        raise QueryError(f"no version of {obj!r} at {label!r}")
    if side == "after":
        return r.versions[(obj, label)]
    if side == "before":
        return r.before(obj, label)
    raise QueryError(f"side must be 'before' or 'after', not {side!r}")


@dataclass
class Pipeline:
    """Every intermediate of one flow-sensitive run, for tooling and tests."""

    program: Program
    cfg: Cfg
    fi: PointsToMap
    defuse: frozenset[IndirectDefUseEdge]
    fsconsg: FsConsGraph
    result: FsResult
    seconds: float


def run_pipeline(p: Program, *, simplify: bool = True, iter_cap: int | None = None,
                 strong_updates: bool = True) -> Pipeline:
    t0 = time.perf_counter()
    fi = analyze_fi(p, simplify=simplify, iter_cap=iter_cap)
    cfg = build_cfg(p)
    every = reaching_defuse(cfg, compute_mod_ref(cfg, fi))
    du = frozenset(d for d in every if d.def_label != d.use_label)
    fsg = build_fsconsg(cfg, fi, du, {(d.def_label, d.object) for d in every
                                      if d.def_label == d.use_label})
    result = fs_solve(fsg, p, simplify=simplify, iter_cap=iter_cap,
                      strong_updates=strong_updates)
    return Pipeline(p, cfg, fi, du, fsg, result, time.perf_counter() - t0)


def analyze_fs(p: Program, **kw) -> FsResult:
    return run_pipeline(p, **kw).result
