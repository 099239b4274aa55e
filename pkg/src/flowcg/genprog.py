"""Seeded random program generator and a greedy shrinker for differential testing."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Callable

from .ir import (Addr, Branch, Call, Copy, Gep, Goto, Load, Program, Ret, Stmt, Store,
                 ValidationError, format_program, make_program)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_stmts: int = 20
    max_objects: int = 4
    max_funcs: int = 1
    branch_prob: float = 0.2
    loop_prob: float = 0.1
    indirect_call_prob: float = 0.0
    summary_prob: float = 0.2
    allow_uninit: bool = False
    num_vars: int = 6
    gep_prob: float = 0.05

    def __post_init__(self) -> None:
        for name in ("branch_prob", "loop_prob", "indirect_call_prob", "summary_prob",
                     "gep_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.max_stmts < 1:
            raise ValueError("max_stmts must be at least 1")
        if self.max_objects < 0 or self.max_funcs < 1 or self.num_vars < 1:
            raise ValueError("max_objects must be >= 0, max_funcs and num_vars >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


class _Ref:
    """Forward reference to the label of a statement emitted later."""

    label: str | None = None


class _Gen:
    def __init__(self, c: GenConfig):
        self.c = c
        self.rng = random.Random(c.seed)
        self.n = 0
        self.vars = [f"v{i}" for i in range(c.num_vars)]
        self.objects = [f"o{i}" for i in range(c.max_objects)]
        self.summary = {o for o in self.objects if self.rng.random() < c.summary_prob}
        self.funcs: list[tuple[str, list[str]]] = []
        self.out: list = []
        self.pending: list[_Ref] = []

    # -- emission -----------------------------------------------------------

    def label(self) -> str:
        self.n += 1
        lab = f"l{self.n}"
        for ref in self.pending:
            ref.label = lab
        self.pending = []
        return lab

    def emit(self, make) -> None:
        self.out.append(make(self.label()))

    def forward(self) -> _Ref:
        ref = _Ref()
        self.pending.append(ref)
        return ref

    # -- statements ---------------------------------------------------------

    def pick(self, pool) -> str:
        return self.rng.choice(sorted(pool))

    def simple(self, defined: set[str], fidx: int) -> None:
        rng, c = self.rng, self.c
        dst = self.pick(self.vars)
        ptrs = set(self.vars) if c.allow_uninit else defined
        kinds = ["copy"]
        if self.objects:
            kinds += ["addr"] * 3
            if ptrs:
                kinds += ["load"] * 2 + ["store"] * 3
            if defined and rng.random() < c.gep_prob:
                kinds.append("gep")
        if defined and fidx + 1 < len(self.funcs):
            kinds.append("call")
        kind = rng.choice(kinds)
        if kind == "addr":
            obj = self.pick(self.objects)
            self.emit(lambda lab: Addr(lab, dst, obj, obj in self.summary))
        elif kind == "copy":
            if not defined:
                # nothing is initialised yet: a self-copy keeps strict parsing happy
                self.emit(lambda lab: Copy(lab, dst, dst))
                return
            src = self.pick(defined)
            self.emit(lambda lab: Copy(lab, dst, src))
        elif kind == "load":
            ptr = self.pick(ptrs)
            self.emit(lambda lab: Load(lab, dst, ptr))
        elif kind == "store":
            ptr = self.pick(ptrs)
            src = self.pick(defined or {ptr})
            self.emit(lambda lab: Store(lab, ptr, src))
            return
        elif kind == "gep":
            src = self.pick(defined)
            fld = rng.choice(("f", "g"))
            self.emit(lambda lab: Gep(lab, dst, src, fld))
        else:
            fname, params = self.funcs[rng.randrange(fidx + 1, len(self.funcs))]
            args = tuple(self.pick(defined) for _ in params)
            self.emit(lambda lab: Call(lab, dst, fname, args, False))
        defined.add(dst)

    def indirect_call(self, defined: set[str], fidx: int) -> None:
        fname, params = self.funcs[self.rng.randrange(fidx + 1, len(self.funcs))]
        fp = self.pick(self.vars)
        self.emit(lambda lab: Addr(lab, fp, fname, False))
        defined.add(fp)
        dst = self.pick(self.vars)
        args = tuple(self.pick(defined) for _ in params)
        self.emit(lambda lab: Call(lab, dst, fp, args, True))
        defined.add(dst)

    # -- structure ----------------------------------------------------------

    def seq(self, budget: int, defined: set[str], fidx: int, depth: int, tail: bool) -> set[str]:
        """Emit exactly ``budget`` statements; with ``tail`` the last one is straight-line."""
        rng, c = self.rng, self.c
        left = budget
        while left > 0:
            room = left - 1 if tail else left
            can_call = fidx + 1 < len(self.funcs) and bool(defined)
            if depth < 3 and room >= 3 and rng.random() < c.branch_prob:
                cost = rng.randint(3, min(room, 3 + max(budget // 2, 1)))
                defined = self.diamond(cost, defined, fidx, depth)
            elif depth < 3 and room >= 2 and rng.random() < c.loop_prob:
                cost = rng.randint(2, min(room, 2 + max(budget // 2, 1)))
                defined = self.loop(cost, defined, fidx, depth)
            elif can_call and room >= 2 and rng.random() < c.indirect_call_prob:
                self.indirect_call(defined, fidx)
                cost = 2
            else:
                self.simple(defined, fidx)
                cost = 1
            left -= cost
        return defined

    def diamond(self, cost: int, defined: set[str], fidx: int, depth: int) -> set[str]:
        then_n = self.rng.randint(0, cost - 3)
        else_n = cost - 2 - then_n
        lab = self.label()
        then_ref, else_ref = self.forward(), _Ref()
        self.out.append((Branch, lab, then_ref, else_ref))
        then_def = self.seq(then_n, set(defined), fidx, depth + 1, False)
        join = _Ref()
        lab = self.label()
        self.out.append((Goto, lab, join))
        self.pending.append(else_ref)
        else_def = self.seq(else_n, set(defined), fidx, depth + 1, False)
        self.pending.append(join)
        return then_def & else_def

    def loop(self, cost: int, defined: set[str], fidx: int, depth: int) -> set[str]:
        head = self.forward()
        body_def = self.seq(cost - 1, set(defined), fidx, depth + 1, False)
        exit_ = _Ref()
        lab = self.label()
        self.out.append((Branch, lab, head, exit_))
        self.pending.append(exit_)
        return body_def

    def function(self, fidx: int, budget: int) -> tuple[str, list[str], list[Stmt]]:
        name, params = self.funcs[fidx]
        self.out = []
        defined = set(params)
        if name == "main":
            self.seq(budget, defined, fidx, 0, True)
        else:
            defined = self.seq(budget - 1, defined, fidx, 0, True)
            val = self.pick(defined) if defined and self.rng.random() < 0.8 else None
            self.emit(lambda lab: Ret(lab, val))
        return name, params, [_resolve(s) for s in self.out]

    def program(self) -> list[tuple[str, list[str], list[Stmt]]]:
        c, rng = self.c, self.rng
        nfuncs = 1
        if c.max_funcs > 1 and c.max_stmts >= 6:
            nfuncs = rng.randint(1, min(c.max_funcs, c.max_stmts // 3))
        self.funcs = [("main", [])]
        for i in range(1, nfuncs):
            arity = rng.randint(0, 2)
            self.funcs.append((f"f{i}", [f"a{j}_f{i}" for j in range(arity)]))
        budgets = [2] * nfuncs
        budgets[0] = 1
        for _ in range(c.max_stmts - sum(budgets)):
            budgets[rng.randrange(nfuncs) if rng.random() < 0.4 else 0] += 1
        return [self.function(i, b) for i, b in enumerate(budgets)]


def _resolve(s):
    if isinstance(s, tuple):
        kind, lab, *refs = s
        labels = [r.label for r in refs]
        assert all(labels), "dangling forward reference"
        return kind(lab, *labels)
    return s


def generate(c: GenConfig) -> Program:
    """A valid program with exactly ``c.max_stmts`` statements; same config, same program."""
    return make_program(_Gen(c).program(), strict=not c.allow_uninit)


def generate_text(c: GenConfig) -> str:
    return format_program(generate(c))


def generate_straight_line(pairs: int = 10_000, objects: int = 100) -> Program:
    """Straight-line store/load pairs cycling over ``objects`` pointers."""
    body: list[Stmt] = []

    def lab() -> str:
        return f"l{len(body) + 1}"

    for i in range(objects):
        body.append(Addr(lab(), f"p{i}", f"o{i}", False))
        body.append(Addr(lab(), f"q{i}", f"x{i}", False))
    for k in range(pairs):
        i = k % objects
        body.append(Store(lab(), f"p{i}", f"q{(k * 7 + 3) % objects}"))
        body.append(Load(lab(), f"t{k}", f"p{i}"))
    return make_program([("main", [], body)])


def _raw(p: Program) -> list[tuple[str, list[str], list[Stmt]]]:
    return [(f.name, list(f.params), list(f.body)) for f in p.functions]


def _without(body: list[Stmt], i: int) -> list[Stmt] | None:
    gone = body[i].label
    rest = body[:i] + body[i + 1:]
    nxt = body[i + 1].label if i + 1 < len(body) else None
    out = []
    for s in rest:
        if isinstance(s, Goto) and s.target == gone:
            if nxt is None:
                return None
            s = replace(s, target=nxt)
        elif isinstance(s, Branch) and gone in (s.t1, s.t2):
            if nxt is None:
                return None
            s = replace(s, t1=nxt if s.t1 == gone else s.t1, t2=nxt if s.t2 == gone else s.t2)
        out.append(s)
    return out


def shrink(p: Program, failing: Callable[[Program], bool]) -> Program:
    """Greedily drop statements while ``failing`` keeps holding.

    Jumps into a removed statement are retargeted to its successor.  Returns a
    program from which no single statement can be removed without losing the
    failure (or breaking validity).
    """
    if not failing(p):
        raise ValueError("shrink needs a failing program")
    progress = True
    while progress:
        progress = False
        raw = _raw(p)
        for fi, (name, params, body) in enumerate(raw):
            i = 0
            while i < len(body):
                if len(body) == 1:
                    break
                cand_body = _without(body, i)
                cand = None
                if cand_body is not None:
                    trial = raw[:fi] + [(name, params, cand_body)] + raw[fi + 1:]
                    try:
                        cand = make_program(trial, strict=False)
                    except ValidationError:
                        cand = None
                if cand is not None and failing(cand):
                    p, body, raw = cand, cand_body, trial
                    progress = True
                else:
                    i += 1
    return p


__all__ = ["GenConfig", "generate", "generate_straight_line", "generate_text", "shrink"]
