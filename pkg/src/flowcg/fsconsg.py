"""Construction of the flow-sensitive constraint graph (FSConsG).

Top-level statements become ordinary constraint edges, with Load and Store
edges annotated by their label.  Every object a load or store may touch gets
a versioned node ``o@label``, and each indirect def-use edge ``(d, u, o)``
becomes a Copy edge ``o@d -> o@u``.  Copy edges into a store's version are
killable: a strong update at that store disables them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .andersen import PointsToMap, add_statement_edges
from .consgraph import ConstraintGraph, EdgeKind, VersionedObject
from .defuse import IndirectDefUseEdge, ModRef, compute_mod_ref, self_reaching
from .ir import Cfg, Program, Store


class FsConsGError(Exception):
    pass


class VersionError(FsConsGError, KeyError):
    pass


@dataclass
class FsConsGraph:
    graph: ConstraintGraph
    cfg: Cfg
    fi: PointsToMap
    mod_ref: ModRef
    defuse: set[IndirectDefUseEdge] = field(default_factory=set)
    # label -> {object name: version node}
    versions_at: dict[str, dict[str, int]] = field(default_factory=dict)
    # version node -> killable in-edge ids
    killable_in: dict[int, list[int]] = field(default_factory=dict)
    # (label, object) whose definition reaches its own label again; these
    # self edges carry nothing new and stay out of the graph
    self_defs: set[tuple[str, str]] = field(default_factory=set)

    @property
    def program(self) -> Program:
        return self.cfg.program

    @property
    def symbols(self) -> dict[str, int]:
        """Symbol table: one node per top-level variable."""
        g = self.graph
        return {g.name(n): n for n in range(len(g))
                if not g.is_object(n)}

    def version_nodes(self) -> Iterable[int]:
        for table in self.versions_at.values():
            yield from table.values()

    def add_defuse(self, du: IndirectDefUseEdge, active: bool | None = None) -> int | None:
        """Add the Copy edge for one def-use edge; returns its id if new.

        ``active`` gives the initial state of a killable edge (default: pending).
        """
        for lab in (du.def_label, du.use_label):
            if lab not in self.program.statements:
                raise FsConsGError(f"def-use edge {du} refers to unknown label {lab!r}")
        g = self.graph
        try:
            src = self.versions_at[du.def_label][du.object]
            dst = self.versions_at[du.use_label][du.object]
        except KeyError:
            raise FsConsGError(f"def-use edge {du} has no matching versions") from None
        killable = isinstance(self.program.statements[du.use_label], Store)
        self.defuse.add(du)
        if not g.add_edge(EdgeKind.COPY, src, dst, killable=killable, active=bool(active)):
            return None
        eid = len(g.edges) - 1
        if killable:
            self.killable_in.setdefault(dst, []).append(eid)
        return eid


def build_fsconsg(cfg: Cfg, fi: PointsToMap, du: Iterable[IndirectDefUseEdge],
                  self_defs: Iterable[tuple[str, str]] | None = None) -> FsConsGraph:
    """Build the graph; ``self_defs`` (from :func:`self_reaching`) is computed if omitted."""
    p = cfg.program
    g = ConstraintGraph()
    # objects first so that points-to bitsets stay narrow
    for name in sorted(fi.objects, key=lambda n: (fi.objects[n].field_of is not None, n)):
        g.add_node(fi.objects[name])
    for name in p.top_level():
        g.add_node(p.variables[name])
    add_statement_edges(g, p, labeled=True)

    mr = compute_mod_ref(cfg, fi)
    fs = FsConsGraph(g, cfg, fi, mr)
    for label in cfg.nodes:
        objs = mr.accessed(label)
        if objs:
            fs.versions_at[label] = {o: g.add_node(VersionedObject(o, label)) for o in sorted(objs)}
    for e in sorted(du):
        fs.add_defuse(e)
    fs.self_defs = set(self_reaching(cfg, mr) if self_defs is None else self_defs)
    return fs


def version_of(g: FsConsGraph, obj: str, at: str) -> int:
    try:
        return g.versions_at[at][obj]
    except KeyError:
        raise VersionError(f"no version of {obj!r} at {at!r}") from None

