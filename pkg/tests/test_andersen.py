from __future__ import annotations

import json
import logging

import pytest

from flowcg.andersen import analyze_fi, build_ficonsg, gep_object, wave_solve
from flowcg.consgraph import ConstraintGraphError, EdgeKind
from flowcg.ir import parse_program
from flowcg.oracle import naive_fi_solve


def edges(g):
    return sorted((e.kind.value, g.name(e.src), g.name(e.dst)) for e in g.edges)


def test_build_motiv(motiv):
    g = build_ficonsg(motiv)
    assert {g.name(n) for n in range(len(g))} == {"p", "q", "x", "y", "z", "a", "b", "o"}
    assert edges(g) == sorted([
        ("addr", "a", "p"), ("addr", "b", "q"), ("addr", "o", "x"),
        ("store", "p", "x"), ("load", "x", "y"), ("store", "q", "x"), ("load", "x", "z"),
    ])
    assert all(e.label is None for e in g.edges)


def test_build_gep():
    g = build_ficonsg(parse_program("func main() {\n l1: q = &p.f\n}", strict=False))
    (e,) = g.edges
    assert e.kind is EdgeKind.GEP and e.fld == "f"


def test_build_empty():
    g = build_ficonsg(parse_program(""))
    assert len(g) == 0 and g.edges == []


def test_solve_motiv(motiv):
    fi = analyze_fi(motiv)
    assert fi["p"] == {"a"} and fi["q"] == {"b"} and fi["x"] == {"o"}
    assert fi["o"] == fi["y"] == fi["z"] == {"a", "b"}


def test_single_addr():
    fi = analyze_fi(parse_program("func main() {\n l1: p = &a\n}"))
    assert fi["p"] == {"a"} and fi["a"] == frozenset()


def test_json_sorted(motiv):
    doc = json.loads(analyze_fi(motiv).dumps())
    assert doc["mode"] == "fi" and doc["pts"]["y"] == ["a", "b"]


def test_gep_object_rules():
    p = parse_program("func main() {\n l1: p = &o\n l2: s = &t summary\n}")
    g = build_ficonsg(p)
    o, t = g.node("o"), g.node("t")
    assert gep_object(g, o, "f") == gep_object(g, o, "f")
    assert g.variable(gep_object(g, t, "f")).summary
    with pytest.raises(ConstraintGraphError):
        gep_object(g, gep_object(g, o, "f"), "g")


def test_gep_on_field_is_skipped(caplog):
    text = "func main() {\n l1: p = &o\n l2: q = &p.f\n l3: r = &q.g\n}"
    with caplog.at_level(logging.WARNING):
        fi = analyze_fi(parse_program(text))
    assert fi["q"] == {"o.f"} and fi["r"] == frozenset()
    assert "nested field" in caplog.text


def test_indirect_call_resolution():
    text = """
    func id(a) {
      l1: ret a
    }
    func two(a, b) {
      l2: ret a
    }
    func main() {
      l3: x = &o
      l4: fp = &id
      l5: y = call *fp(x)
      l6: fp = &two
    }
    """
    fi = analyze_fi(parse_program(text))
    assert fi["y"] == {"o"}
    assert ("l5", "id") in fi.callgraph and ("l5", "two") not in fi.callgraph


def test_copy_cycle_and_store_load():
    text = """
    func main() {
      l1: p = &a
      l2: q = p
      l3: p = q
      l4: r = &b
      l5: *r = q
      l6: s = *r
    }
    """
    fi = analyze_fi(parse_program(text))
    assert fi["s"] == {"a"} and fi["b"] == {"a"}


def test_matches_naive_oracle_on_examples():
    from flowcg.genprog import GenConfig, generate
    for seed in range(60):
        p = generate(GenConfig(seed=seed, max_stmts=30, max_objects=5, gep_prob=0.2,
                               max_funcs=3, indirect_call_prob=0.3))
        fi = analyze_fi(p)
        naive = naive_fi_solve(p)
        for name in set(fi.pts) | set(naive.pts):
            assert fi.get(name) == naive.get(name), (seed, name)


def test_iteration_cap():
    from flowcg.andersen import SolverError
    text = "func main() {\n l1: p = &a\n l2: *p = p\n l3: q = *p\n l4: *q = q\n}"
    p = parse_program(text)
    with pytest.raises(SolverError):
        wave_solve(build_ficonsg(p), p, iter_cap=1)
