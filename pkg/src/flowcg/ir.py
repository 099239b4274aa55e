"""Mini-IR: variables, statements, a text parser and the interprocedural CFG.

The grammar covers the five pointer-relevant instructions (address-of, copy,
field address, load, store) plus calls, returns and intraprocedural jumps::

    func main() {
      l3: p = &a
      l7: *x = p
      l8: y = *x
      l9: q = &p.f
      l10: r = call f(p, q)
      l11: call *fp()
      l12: br l3 l13
      l13: ret r
    }

Variable names live in one program-wide namespace.  Top-level variables are
declared by being assigned (or by being a parameter); abstract objects are
declared by having their address taken.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .graphalgo import strongly_connected_components

log = logging.getLogger(__name__)

RESERVED = frozenset({"func", "call", "ret", "goto", "br", "summary"})


class IRError(Exception):
    """Base class for malformed programs."""


class ParseError(IRError):
    def __init__(self, message: str, line: int = 0, col: int = 0, label: str | None = None):
        self.line = line
        self.col = col
        self.label = label
        where = f"line {line}, col {col}"
        if label is not None:
            where = f"{label} ({where})"
        super().__init__(f"syntax error at {where}: {message}")


class ValidationError(IRError):
    pass


class VarKind(enum.Enum):
    TOP_LEVEL = "top"
    ADDRESS_TAKEN = "obj"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VarKind
    summary: bool = False
    field_of: tuple[str, str] | None = None
    function: bool = False

    def __post_init__(self) -> None:
        if self.kind is VarKind.TOP_LEVEL and (self.summary or self.field_of or self.function):
            raise ValueError(f"top-level variable {self.name!r} cannot carry object attributes")

    @property
    def is_object(self) -> bool:
        return self.kind is VarKind.ADDRESS_TAKEN


def field_name(base: str, fld: str) -> str:
    return f"{base}.{fld}"


# -- statements ---------------------------------------------------------------


@dataclass(frozen=True)
class Stmt:
    label: str

    op = "stmt"

    def defs(self) -> tuple[str, ...]:
        """Top-level variables assigned by this statement."""
        return ()

    def uses(self) -> tuple[str, ...]:
        """Top-level variables read by this statement."""
        return ()

    def operands(self) -> list:
        return []


@dataclass(frozen=True)
class Addr(Stmt):
    dst: str
    obj: str
    marked_summary: bool = False

    op = "addr"

    def defs(self):
        return (self.dst,)

    def operands(self):
        return [self.dst, self.obj, self.marked_summary]

    def __str__(self) -> str:
        tail = " summary" if self.marked_summary else ""
        return f"{self.label}: {self.dst} = &{self.obj}{tail}"


@dataclass(frozen=True)
class Copy(Stmt):
    dst: str
    src: str

    op = "copy"

    def defs(self):
        return (self.dst,)

    def uses(self):
        return (self.src,)

    def operands(self):
        return [self.dst, self.src]

    def __str__(self) -> str:
        return f"{self.label}: {self.dst} = {self.src}"


@dataclass(frozen=True)
class Gep(Stmt):
    dst: str
    src: str
    fld: str

    op = "gep"

    def defs(self):
        return (self.dst,)

    def uses(self):
        return (self.src,)

    def operands(self):
        return [self.dst, self.src, self.fld]

    def __str__(self) -> str:
        return f"{self.label}: {self.dst} = &{self.src}.{self.fld}"


@dataclass(frozen=True)
class Load(Stmt):
    dst: str
    ptr: str

    op = "load"

    def defs(self):
        return (self.dst,)

    def uses(self):
        return (self.ptr,)

    def operands(self):
        return [self.dst, self.ptr]

    def __str__(self) -> str:
        return f"{self.label}: {self.dst} = *{self.ptr}"


@dataclass(frozen=True)
class Store(Stmt):
    ptr: str
    src: str

    op = "store"

    def uses(self):
        return (self.ptr, self.src)

    def operands(self):
        return [self.ptr, self.src]

    def __str__(self) -> str:
        return f"{self.label}: *{self.ptr} = {self.src}"


@dataclass(frozen=True)
class Call(Stmt):
    dst: str | None
    callee: str
    args: tuple[str, ...]
    indirect: bool

    op = "call"

    def defs(self):
        return (self.dst,) if self.dst else ()

    def uses(self):
        return ((self.callee,) if self.indirect else ()) + self.args

    def operands(self):
        return [self.dst, self.callee, list(self.args), self.indirect]

    def __str__(self) -> str:
        lhs = f"{self.dst} = " if self.dst else ""
        star = "*" if self.indirect else ""
        return f"{self.label}: {lhs}call {star}{self.callee}({', '.join(self.args)})"


@dataclass(frozen=True)
class Ret(Stmt):
    val: str | None

    op = "ret"

    def uses(self):
        return (self.val,) if self.val else ()

    def operands(self):
        return [self.val]

    def __str__(self) -> str:
        return f"{self.label}: ret {self.val}" if self.val else f"{self.label}: ret"


@dataclass(frozen=True)
class Goto(Stmt):
    target: str

    op = "goto"

    def operands(self):
        return [self.target]

    def __str__(self) -> str:
        return f"{self.label}: goto {self.target}"


@dataclass(frozen=True)
class Branch(Stmt):
    t1: str
    t2: str

    op = "br"

    def operands(self):
        return [self.t1, self.t2]

    def __str__(self) -> str:
        return f"{self.label}: br {self.t1} {self.t2}"


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...]
    body: tuple[Stmt, ...]

    @property
    def return_var(self) -> str:
        # '$' cannot appear in source identifiers, so this never collides.
        # Declared as a variable only when some `ret v` assigns it.
        return f"{self.name}$ret"

    @property
    def entry(self) -> str | None:
        return self.body[0].label if self.body else None


@dataclass(frozen=True)
class Program:
    functions: tuple[Function, ...]
    variables: Mapping[str, Variable]
    statements: Mapping[str, Stmt]
    function_of: Mapping[str, str]
    successors: Mapping[str, tuple[str, ...]]
    label_index: Mapping[str, int] = field(repr=False)

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def labels(self) -> list[str]:
        return list(self.statements)

    def top_level(self) -> list[str]:
        return [v.name for v in self.variables.values() if not v.is_object]

    def objects(self) -> list[Variable]:
        return [v for v in self.variables.values() if v.is_object]

    def __iter__(self) -> Iterator[Stmt]:
        return iter(self.statements.values())


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(){},:=&*.])|(?P<bad>.)"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # "name", "punct" or "eof"
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("name", "punct"):
            toks.append(_Tok(kind, m.group(), line, col))
        elif kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", line, col)
    toks.append(_Tok("eof", "", line, len(text) - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.label: str | None = None

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, expected: str, tok: _Tok | None = None) -> ParseError:
        tok = tok or self.peek()
        got = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ParseError(f"expected {expected}, got {got}", tok.line, tok.col, self.label)

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind != "eof" and tok.text == text

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            raise self.error(repr(text))
        return self.next()

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != "name" or tok.text in RESERVED:
            raise self.error(what)
        return self.next().text

    def program(self) -> list[tuple[str, list[str], list[Stmt]]]:
        funcs = []
        while self.peek().kind != "eof":
            funcs.append(self.func())
        return funcs

    def func(self):
        self.label = None
        self.expect("func")
        name = self.ident("function name")
        self.expect("(")
        params: list[str] = []
        if not self.at(")"):
            params.append(self.ident("parameter"))
            while self.at(","):
                self.next()
                params.append(self.ident("parameter"))
        self.expect(")")
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek().kind == "eof":
                raise self.error("'}'")
            body.append(self.stmt())
        self.label = None
        self.expect("}")
        return name, params, body

    def stmt(self) -> Stmt:
        self.label = None
        label = self.ident("statement label")
        self.label = label
        self.expect(":")
        if self.at("*"):
            self.next()
            ptr = self.ident("pointer variable")
            self.expect("=")
            return Store(label, ptr, self.ident("source variable"))
        if self.at("call"):
            return self.call(label, None)
        if self.at("ret"):
            self.next()
            tok = self.peek()
            if tok.kind == "name" and tok.text not in RESERVED and not (
                self.peek(1).kind == "punct" and self.peek(1).text == ":"
            ):
                return Ret(label, self.next().text)
            return Ret(label, None)
        if self.at("goto"):
            self.next()
            return Goto(label, self.ident("target label"))
        if self.at("br"):
            self.next()
            t1 = self.ident("target label")
            return Branch(label, t1, self.ident("target label"))
        dst = self.ident("statement body")
        self.expect("=")
        if self.at("&"):
            self.next()
            name = self.ident("variable")
            if self.at("."):
                self.next()
                return Gep(label, dst, name, self.ident("field name"))
            marked = False
            if self.at("summary"):
                self.next()
                marked = True
            return Addr(label, dst, name, marked)
        if self.at("*"):
            self.next()
            return Load(label, dst, self.ident("pointer variable"))
        if self.at("call"):
            return self.call(label, dst)
        return Copy(label, dst, self.ident("source variable"))

    def call(self, label: str, dst: str | None) -> Call:
        self.expect("call")
        indirect = False
        if self.at("*"):
            self.next()
            indirect = True
        callee = self.ident("callee")
        self.expect("(")
        args: list[str] = []
        if not self.at(")"):
            args.append(self.ident("argument"))
            while self.at(","):
                self.next()
                args.append(self.ident("argument"))
        self.expect(")")
        return Call(label, dst, callee, tuple(args), indirect)


def parse_program(text: str, *, strict: bool = True, ssa: bool = False) -> Program:
    """Parse IR source text into a validated :class:`Program`.

    ``strict`` rejects reads of top-level variables that are never assigned
    (``strict=False`` auto-declares them).  ``ssa`` additionally rejects any
    top-level variable assigned by more than one statement.
    """
    raw = _Parser(text).program()
    return make_program(raw, strict=strict, ssa=ssa)


def make_program(
    raw: Iterable[tuple[str, list[str], list[Stmt]]], *, strict: bool = True, ssa: bool = False
) -> Program:
    raw = list(raw)
    fnames = {name for name, _, _ in raw}
    if len(fnames) != len(raw):
        raise ValidationError("duplicate function name")
    funcs: list[Function] = []
    for name, params, body in raw:
        # calling through a plain variable is an indirect call
        body = [Call(s.label, s.dst, s.callee, s.args, True)
                if isinstance(s, Call) and not s.indirect and s.callee not in fnames else s
                for s in body]
        if len(set(params)) != len(params):
            raise ValidationError(f"duplicate parameter in function {name!r}")
        funcs.append(Function(name, tuple(params), tuple(body)))

    statements: dict[str, Stmt] = {}
    function_of: dict[str, str] = {}
    for f in funcs:
        for s in f.body:
            if s.label in statements:
                raise ValidationError(f"duplicate label {s.label!r}")
            statements[s.label] = s
            function_of[s.label] = f.name

    successors: dict[str, tuple[str, ...]] = {}
    for f in funcs:
        own = {s.label for s in f.body}
        for i, s in enumerate(f.body):
            if isinstance(s, (Goto, Branch)):
                targets = (s.target,) if isinstance(s, Goto) else (s.t1, s.t2)
                for t in targets:
                    if t not in own:
                        raise ValidationError(f"undefined label {t!r} targeted at {s.label}")
                successors[s.label] = tuple(dict.fromkeys(targets))
            elif isinstance(s, Ret) or i + 1 == len(f.body):
                successors[s.label] = ()
            else:
                successors[s.label] = (f.body[i + 1].label,)

    objects: dict[str, bool] = {}
    addr_sites: dict[str, list[str]] = {}
    top: dict[str, None] = {}
    declared: set[str] = set()
    assigned: dict[str, int] = {}
    for f in funcs:
        for p in f.params:
            top.setdefault(p)
            declared.add(p)
        if any(isinstance(s, Ret) and s.val for s in f.body):
            top.setdefault(f.return_var)
            declared.add(f.return_var)
    taken_functions: set[str] = set()
    for s in statements.values():
        if isinstance(s, Addr) and s.obj in fnames:
            if s.marked_summary:
                raise ValidationError(f"function {s.obj!r} cannot be marked summary at {s.label}")
            taken_functions.add(s.obj)
        elif isinstance(s, Addr):
            objects[s.obj] = objects.get(s.obj, False) or s.marked_summary
            addr_sites.setdefault(s.obj, []).append(s.label)
        for d in s.defs():
            top.setdefault(d)
            declared.add(d)
            assigned[d] = assigned.get(d, 0) + 1

    for s in statements.values():
        if isinstance(s, Call) and not s.indirect:
            arity = len(next(f for f in funcs if f.name == s.callee).params)
            if arity != len(s.args):
                raise ValidationError(
                    f"call at {s.label} passes {len(s.args)} arguments to {s.callee!r} "
                    f"which takes {arity}")
        for u in s.uses():
            if u in fnames:
                raise ValidationError(f"function {u!r} used as a variable at {s.label}")
            if u not in declared:
                if strict:
                    raise ValidationError(f"use of undeclared variable {u!r} at {s.label}")
                top.setdefault(u)

    clash = (set(objects) & set(top)) | (fnames & set(top))
    if clash:
        raise ValidationError(f"names used both as objects and top-level variables: {sorted(clash)}")
    if ssa:
        multi = sorted(v for v, n in assigned.items() if n > 1)
        if multi:
            raise ValidationError(f"top-level variables assigned more than once: {multi}")

    in_loop = _labels_in_cycles(successors)
    variables: dict[str, Variable] = {}
    for name, marked in objects.items():
        looped = any(site in in_loop for site in addr_sites[name])
        variables[name] = Variable(name, VarKind.ADDRESS_TAKEN, summary=marked or looped)
    for f in funcs:
        # only functions whose address is taken become abstract objects
        if f.name in taken_functions:
            variables[f.name] = Variable(f.name, VarKind.ADDRESS_TAKEN, function=True)
    for name in top:
        variables[name] = Variable(name, VarKind.TOP_LEVEL)

    return Program(
        functions=tuple(funcs),
        variables=variables,
        statements=statements,
        function_of=function_of,
        successors=successors,
        label_index={lab: i for i, lab in enumerate(statements)},
    )


def _labels_in_cycles(succ: Mapping[str, tuple[str, ...]]) -> set[str]:
    cyclic: set[str] = set()
    for comp in strongly_connected_components(list(succ), lambda n: succ[n]):
        if len(comp) > 1 or comp[0] in succ[comp[0]]:
            cyclic.update(comp)
    return cyclic


def format_program(p: Program) -> str:
    lines = []
    for f in p.functions:
        lines.append(f"func {f.name}({', '.join(f.params)}) {{")
        lines.extend(f"  {s}" for s in f.body)
        lines.append("}")
    return "\n".join(lines) + "\n"


def program_to_json(p: Program) -> dict:
    return {
        "functions": [
            {
                "name": f.name,
                "params": list(f.params),
                "stmts": [{"label": s.label, "op": s.op, "operands": s.operands()} for s in f.body],
            }
            for f in p.functions
        ]
    }


def dumps_program(p: Program) -> str:
    return json.dumps(program_to_json(p), sort_keys=True, indent=2)


# -- control flow -------------------------------------------------------------


@dataclass(frozen=True)
class Cfg:
    """Interprocedural CFG: one node per statement label.

    A bound call site ``c`` gets an edge to the callee entry and edges from
    every callee exit back to ``c`` itself.
    """

    program: Program
    nodes: tuple[str, ...]
    intra_edges: frozenset[tuple[str, str]]
    call_edges: frozenset[tuple[str, str]]
    ret_edges: frozenset[tuple[str, str]]
    entry: Mapping[str, str]
    exits: Mapping[str, tuple[str, ...]]
    bindings: frozenset[tuple[str, str]]
    _succ: dict = field(default=None, repr=False, compare=False)
    _pred: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        pred: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in sorted(self.intra_edges | self.call_edges | self.ret_edges,
                           key=lambda e: (self.program.label_index[e[0]],
                                          self.program.label_index[e[1]])):
            if b not in succ[a]:
                succ[a].append(b)
                pred[b].append(a)
        object.__setattr__(self, "_succ", {n: tuple(v) for n, v in succ.items()})
        object.__setattr__(self, "_pred", {n: tuple(v) for n, v in pred.items()})

    def successors(self, label: str) -> tuple[str, ...]:
        return self._succ[label]

    def predecessors(self, label: str) -> tuple[str, ...]:
        return self._pred[label]

    def with_bindings(self, new: Iterable[tuple[str, str]]) -> Cfg:
        """Return a CFG extended with call/return edges for ``(call label, function)`` pairs."""
        bindings = set(self.bindings)
        calls, rets = set(self.call_edges), set(self.ret_edges)
        for site, fname in new:
            bindings.add((site, fname))
            if fname in self.entry:
                calls.add((site, self.entry[fname]))
                rets.update((x, site) for x in self.exits[fname])
        return Cfg(self.program, self.nodes, self.intra_edges, frozenset(calls),
                   frozenset(rets), self.entry, self.exits, frozenset(bindings))


def function_exits(f: Function, successors: Mapping[str, tuple[str, ...]]) -> tuple[str, ...]:
    """Ret statements plus a final statement that falls off the end."""
    out = [s.label for s in f.body if isinstance(s, Ret)]
    if f.body and not isinstance(f.body[-1], (Ret, Goto, Branch)):
        out.append(f.body[-1].label)
    return tuple(out)


def build_cfg(p: Program) -> Cfg:
    intra = frozenset((a, b) for a, succ in p.successors.items() for b in succ)
    entry = {f.name: f.entry for f in p.functions if f.body}
    exits = {f.name: function_exits(f, p.successors) for f in p.functions if f.body}
    for f in p.functions:
        if not f.body:
            continue
        seen, stack = {f.entry}, [f.entry]
        while stack:
            for n in p.successors[stack.pop()]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        for s in f.body:
            if s.label not in seen:
                log.warning("unreachable label %s in function %s", s.label, f.name)
    cfg = Cfg(p, tuple(p.statements), intra, frozenset(), frozenset(), entry, exits, frozenset())
    direct = [(s.label, s.callee) for s in p if isinstance(s, Call) and not s.indirect]
    return cfg.with_bindings(direct)
