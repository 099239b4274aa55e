"""Indirect (memory) def-use chains from the pre-analysis and the CFG.

A store ``*p = q`` may define every object in the pre-analysis set of ``p``;
a load ``q = *p`` may use every object in the set of ``p``.  Chains come from
a reaching-definitions dataflow in which each (label, object) may-def is a
definition site that kills all other sites of the same object.  Def-to-def
edges are kept so that a later store can forward the earlier state.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from .andersen import PointsToMap
from .bitset import iter_bits
from .ir import Cfg, Load, Store


@dataclass(frozen=True)
class ModRef:
    may_def: Mapping[str, frozenset[str]]
    may_use: Mapping[str, frozenset[str]]

    def accessed(self, label: str) -> frozenset[str]:
        return self.may_def.get(label, frozenset()) | self.may_use.get(label, frozenset())


class IndirectDefUseEdge(NamedTuple):
    def_label: str
    use_label: str
    object: str

    def __str__(self) -> str:
        return f"def {self.def_label} -> use {self.use_label} [{self.object}]"


def compute_mod_ref(cfg: Cfg, fi: PointsToMap) -> ModRef:
    may_def: dict[str, frozenset[str]] = {}
    may_use: dict[str, frozenset[str]] = {}
    for label in cfg.nodes:
        s = cfg.program.statements[label]
        if isinstance(s, Store):
            objs = fi.get(s.ptr)
            if objs:
                may_def[label] = objs
        elif isinstance(s, Load):
            objs = fi.get(s.ptr)
            if objs:
                may_use[label] = objs
    return ModRef(may_def, may_use)


def compute_indirect_defuse(cfg: Cfg, mr: ModRef) -> frozenset[IndirectDefUseEdge]:
    """All ``(d, u, o)`` with ``d != u`` such that the may-def of ``o`` at ``d`` reaches ``u``.

    Reaching definitions are tracked as one int bitset per label over all
    (label, object) definition sites.
    """
    return frozenset(e for e in reaching_defuse(cfg, mr) if e.def_label != e.use_label)


def self_reaching(cfg: Cfg, mr: ModRef) -> frozenset[tuple[str, str]]:
    """``(label, object)`` pairs whose definition flows around a cycle back to itself."""
    return frozenset((e.def_label, e.object) for e in reaching_defuse(cfg, mr)
                     if e.def_label == e.use_label)


def reaching_defuse(cfg: Cfg, mr: ModRef) -> frozenset[IndirectDefUseEdge]:
    """Like :func:`compute_indirect_defuse` but keeping self edges."""
    sites: list[tuple[str, str]] = []
    obj_mask: dict[str, int] = {}
    gen: dict[str, int] = {}
    for label in cfg.nodes:
        for o in sorted(mr.may_def.get(label, ())):
            bit = 1 << len(sites)
            sites.append((label, o))
            obj_mask[o] = obj_mask.get(o, 0) | bit
            gen[label] = gen.get(label, 0) | bit
    kill = {label: _union(obj_mask[o] for o in objs) for label, objs in mr.may_def.items()}

    # a priority worklist in label order sweeps straight-line code in one pass
    pos = {label: i for i, label in enumerate(cfg.nodes)}
    out: dict[str, int] = {}
    reach_in: dict[str, int] = {}
    work = [pos[label] for label in cfg.nodes if label in gen]
    queued = set(work)
    while work:
        label = cfg.nodes[heapq.heappop(work)]
        queued.discard(pos[label])
        inn = 0
        for pr in cfg.predecessors(label):
            inn |= out.get(pr, 0)
        reach_in[label] = inn
        new = gen.get(label, 0) | (inn & ~kill.get(label, 0))
        if new != out.get(label, 0):
            out[label] = new
            for s in cfg.successors(label):
                if pos[s] not in queued:
                    queued.add(pos[s])
                    heapq.heappush(work, pos[s])

    edges = set()
    for label in cfg.nodes:
        objs = mr.accessed(label)
        inn = reach_in.get(label, 0)
        if not objs or not inn:
            continue
        for o in objs:
            for i in iter_bits(inn & obj_mask.get(o, 0)):
                edges.add(IndirectDefUseEdge(sites[i][0], label, o))
    return frozenset(edges)


def _union(masks: Iterable[int]) -> int:
    m = 0
    for x in masks:
        m |= x
    return m


def format_defuse(edges: Iterable[IndirectDefUseEdge]) -> str:
    return "".join(f"{line}\n" for line in sorted(str(e) for e in edges))
