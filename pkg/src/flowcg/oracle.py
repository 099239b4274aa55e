"""Reference analyses used as ground truth in tests.

Nothing here touches the constraint graph or the wave solver.  The
flow-insensitive oracle rescans every statement until nothing changes, and
the dense flow-sensitive oracle keeps a full object map before and after every
label, iterating the transfer functions over the interprocedural CFG.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from .ir import (Addr, Call, Cfg, Copy, Gep, Load, Program, Ret, Store, Variable, VarKind,
                 field_name)

Sets = dict[str, set[str]]


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class NaiveFi:
    pts: Mapping[str, frozenset[str]]
    objects: Mapping[str, Variable]
    callgraph: frozenset[tuple[str, str]]
    rounds: int

    def get(self, name: str) -> frozenset[str]:
        return self.pts.get(name, frozenset())


class _Rules:
    """Statement semantics shared by both oracles (top-level part only)."""

    def __init__(self, p: Program):
        self.p = p
        self.objects: dict[str, Variable] = {v.name: v for v in p.objects()}
        self.funcs = {f.name: f for f in p.functions}

    def field(self, base: str, fld: str) -> str | None:
        v = self.objects[base]
        if v.field_of is not None or v.function:
            return None
        name = field_name(base, fld)
        if name not in self.objects:
            self.objects[name] = Variable(name, VarKind.ADDRESS_TAKEN, summary=v.summary,
                                          field_of=(base, fld))
        return name

    def targets(self, s: Call, top: Sets) -> list[str]:
        """Functions a call may reach under the current sets."""
        if not s.indirect:
            return [s.callee]
        out = []
        for o in sorted(top.get(s.callee, ())):
            f = self.funcs.get(o)
            if f is not None and self.objects[o].function and len(f.params) == len(s.args):
                out.append(o)
        return out

    def top_level(self, s, top: Sets, calls: set[tuple[str, str]]) -> bool:
        """Apply the top-level effect of ``s``; returns True if a set grew."""
        grew = False

        def add(dst: str, objs: Iterable[str]) -> None:
            nonlocal grew
            cur = top.setdefault(dst, set())
            before = len(cur)
            cur.update(objs)
            grew |= len(cur) != before

        if isinstance(s, Addr):
            add(s.dst, (s.obj,))
        elif isinstance(s, Copy):
            add(s.dst, top.get(s.src, ()))
        elif isinstance(s, Gep):
            add(s.dst, [f for o in top.get(s.src, ()) if (f := self.field(o, s.fld))])
        elif isinstance(s, Ret) and s.val:
            add(self.funcs[self.p.function_of[s.label]].return_var, top.get(s.val, ()))
        elif isinstance(s, Call):
            for fname in self.targets(s, top):
                f = self.funcs[fname]
                calls.add((s.label, fname))
                for a, param in zip(s.args, f.params):
                    add(param, top.get(a, ()))
                if s.dst and f.return_var in self.p.variables:
                    add(s.dst, top.get(f.return_var, ()))
        return grew


def naive_fi_solve(p: Program, *, round_cap: int | None = None) -> NaiveFi:
    """Flow-insensitive points-to sets by rescanning every rule until stable."""
    rules = _Rules(p)
    sets: Sets = {name: set() for name in p.top_level()}
    calls: set[tuple[str, str]] = set()
    cap = round_cap or _lattice_height(p) + 2
    rounds = 0
    while True:
        rounds += 1
        if rounds > cap:
            raise OracleError(f"flow-insensitive oracle did not converge in {cap} rounds")
        grew = False
        for s in p:
            grew |= rules.top_level(s, sets, calls)
            if isinstance(s, Store):
                for o in list(sets.get(s.ptr, ())):
                    cur = sets.setdefault(o, set())
                    n = len(cur)
                    cur.update(sets.get(s.src, ()))
                    grew |= len(cur) != n
            elif isinstance(s, Load):
                cur = sets.setdefault(s.dst, set())
                n = len(cur)
                for o in list(sets.get(s.ptr, ())):
                    cur.update(sets.get(o, ()))
                grew |= len(cur) != n
        if not grew:
            break
    for name in rules.objects:
        sets.setdefault(name, set())
    return NaiveFi({k: frozenset(v) for k, v in sets.items()}, dict(rules.objects),
                   frozenset(calls), rounds)


def _lattice_height(p: Program) -> int:
    # every productive round adds at least one (holder, object) fact
    objs = len(p.objects())
    fields = {s.fld for s in p if isinstance(s, Gep)}
    objs += objs * len(fields)
    return (len(p.top_level()) + objs * (len(p.statements) + 1)) * max(objs, 1)


def mod_ref_sets(p: Program, fi: NaiveFi) -> tuple[dict[str, frozenset[str]],
                                                   dict[str, frozenset[str]]]:
    """May-def and may-use object sets per label from flow-insensitive sets."""
    may_def, may_use = {}, {}
    for s in p:
        if isinstance(s, Store) and fi.get(s.ptr):
            may_def[s.label] = fi.get(s.ptr)
        elif isinstance(s, Load) and fi.get(s.ptr):
            may_use[s.label] = fi.get(s.ptr)
    return may_def, may_use


def defuse_by_search(cfg: Cfg, may_def: Mapping[str, frozenset[str]],
                     may_use: Mapping[str, frozenset[str]]) -> frozenset[tuple[str, str, str]]:
    """Def-use triples by exploring, for each definition, every def-free path onward.

    ``(d, u, o)`` is reported when some CFG path of length at least one leads
    from ``d`` to ``u`` without passing another may-def of ``o``.
    """
    out = set()
    for d, objs in may_def.items():
        for o in objs:
            seen: set[str] = set()
            work = deque(cfg.successors(d))
            while work:
                n = work.popleft()
                if n in seen:
                    continue
                seen.add(n)
                if n != d and (o in may_def.get(n, ()) or o in may_use.get(n, ())):
                    out.add((d, n, o))
                if o in may_def.get(n, ()):
                    continue
                work.extend(cfg.successors(n))
    return frozenset(out)


ObjMap = dict[str, frozenset[str]]


@dataclass
class DenseState:
    """Per-label object maps on entry and exit plus the global top-level map."""

    pts: dict[str, frozenset[str]]
    in_map: dict[str, ObjMap]
    out_map: dict[str, ObjMap]
    accessed: dict[str, frozenset[str]]
    callgraph: frozenset[tuple[str, str]]
    rounds: int
    strong_labels: frozenset[str] = field(default_factory=frozenset)

    def before(self, obj: str, label: str) -> frozenset[str]:
        return self.in_map[label].get(obj, frozenset())

    def after(self, obj: str, label: str) -> frozenset[str]:
        return self.out_map[label].get(obj, frozenset())

    def distinct_sets(self) -> int:
        """Non-empty per-point object sets plus non-empty top-level sets."""
        n = sum(1 for s in self.pts.values() if s)
        for table in (self.in_map, self.out_map):
            n += sum(1 for m in table.values() for s in m.values() if s)
        return n

    def to_json(self) -> dict:
        def dump(table):
            return {lab: {o: sorted(s) for o, s in sorted(m.items()) if s}
                    for lab, m in sorted(table.items())}

        return {
            "mode": "dense",
            "pts": {v: sorted(s) for v, s in sorted(self.pts.items())},
            "in": dump(self.in_map),
            "out": dump(self.out_map),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def dense_fs_solve(cfg: Cfg, prog: Program, *, strong_updates: bool = True,
                   round_cap: int | None = None) -> DenseState:
    """Iterate per-label transfer functions over the CFG to a fixpoint.

    Indirect calls are wired into the CFG as soon as the callee pointer
    reaches a function.  A store whose pointer set is still empty writes
    nothing and passes none of the objects it may define.
    """
    rules = _Rules(prog)
    fi = naive_fi_solve(prog)
    may_def, may_use = mod_ref_sets(prog, fi)
    labels = list(cfg.nodes)
    top: Sets = {name: set() for name in prog.top_level()}
    in_map: dict[str, ObjMap] = {lab: {} for lab in labels}
    out_map: dict[str, ObjMap] = {lab: {} for lab in labels}
    calls: set[tuple[str, str]] = set(cfg.bindings)
    cap = round_cap or _lattice_height(prog) * 2 + 2
    rounds = 0
    while True:
        rounds += 1
        if rounds > cap:
            raise OracleError(f"dense oracle did not converge in {cap} rounds")
        grew = False
        for lab in labels:
            s = prog.statements[lab]
            inn: dict[str, set[str]] = {}
            for pr in cfg.predecessors(lab):
                for o, objs in out_map[pr].items():
                    inn.setdefault(o, set()).update(objs)
            frozen_in = {o: frozenset(v) for o, v in inn.items() if v}
            if frozen_in != in_map[lab]:
                in_map[lab] = frozen_in
                grew = True
            grew |= rules.top_level(s, top, calls)
            out = dict(frozen_in)
            if isinstance(s, Store):
                ptr = top.get(s.ptr, set())
                val = frozenset(top.get(s.src, ()))
                if not ptr:
                    for o in may_def.get(lab, ()):
                        out.pop(o, None)
                elif (strong_updates and len(ptr) == 1
                      and not rules.objects[next(iter(ptr))].summary):
                    o = next(iter(ptr))
                    out[o] = val
                else:
                    for o in ptr:
                        out[o] = out.get(o, frozenset()) | val
                out = {o: v for o, v in out.items() if v}
            elif isinstance(s, Load):
                cur = top.setdefault(s.dst, set())
                n = len(cur)
                for o in list(top.get(s.ptr, ())):
                    cur.update(frozen_in.get(o, ()))
                grew |= len(cur) != n
            if out != out_map[lab]:
                out_map[lab] = out
                grew = True
        new = sorted(calls - set(cfg.bindings))
        if new:
            cfg = cfg.with_bindings(new)
            grew = True
        if not grew:
            break

    strong = frozenset(
        s.label for s in prog if isinstance(s, Store) and strong_updates
        and len(top.get(s.ptr, ())) == 1
        and not rules.objects[next(iter(top[s.ptr]))].summary)
    accessed = {lab: may_def.get(lab, frozenset()) | may_use.get(lab, frozenset())
                for lab in labels if lab in may_def or lab in may_use}
    return DenseState({k: frozenset(v) for k, v in top.items()}, in_map, out_map, accessed,
                      frozenset(calls), rounds, strong)


class Mismatch(NamedTuple):
    key: str
    expected: frozenset[str]
    got: frozenset[str]

    def __str__(self) -> str:
        return f"{self.key}: expected {sorted(self.expected)}, got {sorted(self.got)}"


def compare(fs, dense: DenseState) -> list[Mismatch]:
    """Every disagreement between a flow-sensitive result and the dense oracle.

    Covers every top-level variable and, for every versioned object, the sets
    before and after its label.  ``expected`` is the oracle's value.
    """
    out: list[Mismatch] = []
    empty: frozenset[str] = frozenset()
    for v in sorted(set(fs.pts) | set(dense.pts)):
        a, b = dense.pts.get(v, empty), fs.pts.get(v, empty)
        if a != b:
            out.append(Mismatch(v, a, b))
    fs_keys = set(fs.versions)
    dense_keys = {(o, lab) for lab, objs in dense.accessed.items() for o in objs}
    for o, lab in sorted(fs_keys ^ dense_keys):
        has = (o, lab) in fs_keys
        out.append(Mismatch(f"version {o}@{lab}", frozenset({"<present>"}) if not has else empty,
                            frozenset({"<present>"}) if has else empty))
    for o, lab in sorted(fs_keys & dense_keys, key=lambda k: (k[1], k[0])):
        for side, a, b in (("before", dense.before(o, lab), fs.before(o, lab)),
                           ("after", dense.after(o, lab), fs.versions[(o, lab)])):
            if a != b:
                out.append(Mismatch(f"({o}, {lab}, {side})", a, b))
    return out


__all__ = [
    "DenseState", "Mismatch", "NaiveFi", "OracleError", "compare", "defuse_by_search",
    "dense_fs_solve", "mod_ref_sets", "naive_fi_solve",
]
