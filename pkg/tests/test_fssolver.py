from __future__ import annotations

import json

import pytest

from flowcg.andersen import analyze_fi, build_ficonsg, seed_addr
from flowcg.consgraph import EdgeKind
from flowcg.defuse import compute_indirect_defuse, compute_mod_ref
from flowcg.fsconsg import build_fsconsg, version_of
from flowcg.fssolver import (FsSolver, QueryError, analyze_fs, process_load, process_store,
                             query_pts, run_pipeline, update_call_graph)
from flowcg.ir import build_cfg, parse_program


def fresh_solver(p):
    cfg = build_cfg(p)
    fi = analyze_fi(p)
    fsg = build_fsconsg(cfg, fi, compute_indirect_defuse(cfg, compute_mod_ref(cfg, fi)))
    s = FsSolver(fsg, p)
    s.g.propagate(list(range(len(s.g))), seed_addr(s.g))
    return s


def edge(s, kind, label):
    return next(e for e in s.g.edges if e.kind is kind and e.label == label)


def test_motiv_golden(motiv):
    r = analyze_fs(motiv)
    assert r.pts == {"p": {"a"}, "q": {"b"}, "x": {"o"}, "y": {"a"}, "z": {"b"}}
    assert r.versions == {("o", "l7"): {"a"}, ("o", "l8"): {"a"},
                          ("o", "l9"): {"b"}, ("o", "l10"): {"b"}}
    assert r.su_labels == {"l9"}
    assert query_pts(r, ("o", "l9", "before")) == {"a"}
    assert query_pts(r, ("o", "l7", "before")) == frozenset()


def test_summary_object_blocks_kill(motiv_summary):
    r = analyze_fs(motiv_summary)
    assert r.su_labels == frozenset()
    assert r.pts["y"] == {"a"} and r.pts["z"] == {"a", "b"}
    assert query_pts(r, ("o", "l9", "after")) == {"a", "b"}


def test_copies_only_match_fi():
    text = "func main() {\n l1: p = &a\n l2: q = p\n l3: r = q\n l4: q = &b\n l5: p = r\n}"
    p = parse_program(text)
    fi = analyze_fi(p)
    assert analyze_fs(p).pts == {v: fi[v] for v in p.top_level()}


def test_process_store_strong(motiv):
    s = fresh_solver(motiv)
    assert process_store(s, edge(s, EdgeKind.STORE, "l9"))
    assert s.status[("l9", "o")] == "strong"
    inserted = s.g.edge_id(EdgeKind.COPY, s.g.node("q"), version_of(s.fsg, "o", "l9"))
    assert inserted is not None
    (kid,) = s.fsg.killable_in[version_of(s.fsg, "o", "l9")]
    assert not s.g.edges[kid].active
    # nothing new on a second visit
    assert not process_store(s, edge(s, EdgeKind.STORE, "l9"))


def test_process_store_weak_activates(motiv_summary):
    s = fresh_solver(motiv_summary)
    assert process_store(s, edge(s, EdgeKind.STORE, "l9"))
    assert s.status[("l9", "o")] == "weak"
    (kid,) = s.fsg.killable_in[version_of(s.fsg, "o", "l9")]
    assert s.g.edges[kid].active


def test_process_store_empty_pointer_is_noop():
    p = parse_program("func main() {\n l1: x = &o\n l2: p = &a\n l3: y = x\n l4: *w = p\n}",
                      strict=False)
    s = fresh_solver(p)
    assert not process_store(s, edge(s, EdgeKind.STORE, "l4"))
    assert s.status == {}


def test_process_load(motiv):
    s = fresh_solver(motiv)
    assert process_load(s, edge(s, EdgeKind.LOAD, "l8"))
    assert s.g.edge_id(EdgeKind.COPY, version_of(s.fsg, "o", "l8"), s.g.node("y")) is not None
    assert not process_load(s, edge(s, EdgeKind.LOAD, "l8"))


def test_update_call_graph_idempotent():
    text = """
    func f(a) {
      l1: ret a
    }
    func main() {
      l2: fp = &f
      l3: x = &o
      l4: y = call *fp(x)
    }
    """
    s = fresh_solver(parse_program(text))
    assert update_call_graph(s)
    assert ("l4", "f") in s.bound
    assert not update_call_graph(s)


def test_indirect_calls_carry_memory():
    text = """
    func set(ptr, val) {
      l1: *ptr = val
      l2: ret
    }
    func main() {
      l3: fp = &set
      l4: x = &o
      l5: a1 = &a
      l6: call *fp(x, a1)
      l7: y = *x
    }
    """
    r = analyze_fs(parse_program(text))
    assert r.pts["y"] == {"a"}
    assert ("l6", "set") in r.callgraph


def test_query_errors(motiv):
    r = analyze_fs(motiv)
    assert query_pts(r, "y") == {"a"}
    with pytest.raises(QueryError):
        query_pts(r, "nope")
    with pytest.raises(QueryError):
        query_pts(r, ("o", "l3", "after"))
    with pytest.raises(QueryError):
        query_pts(r, ("o", "l7", "during"))


def test_json_schema(motiv):
    doc = json.loads(analyze_fs(motiv).dumps())
    assert set(doc) == {"mode", "pts", "versions", "su_labels", "iterations", "fallbacks"}
    assert doc["versions"]["o@l7"] == ["a"] and doc["su_labels"] == ["l9"]
    assert doc["fallbacks"] == 0


def test_loop_store_keeps_own_state():
    text = """
    func main() {
      l1: x = &o
      l2: p = &a
      l3: *x = p
      l4: p = &b
      l5: br l3 l6
      l6: y = *x
    }
    """
    r = analyze_fs(parse_program(text))
    assert query_pts(r, ("o", "l3", "before")) == {"a", "b"}
    assert r.pts["y"] == {"a", "b"}


def test_pipeline_keeps_intermediates(motiv):
    pl = run_pipeline(motiv)
    assert len(pl.defuse) == 3 and pl.fsconsg.graph is not None
    assert pl.result.stats.versioned == 4


def test_ficonsg_unchanged_by_fs(motiv):
    before = len(build_ficonsg(motiv).edges)
    analyze_fs(motiv)
    assert len(build_ficonsg(motiv).edges) == before
