from __future__ import annotations

from flowcg.andersen import analyze_fi
from flowcg.defuse import (IndirectDefUseEdge, compute_indirect_defuse, compute_mod_ref,
                           format_defuse, reaching_defuse, self_reaching)
from flowcg.ir import build_cfg, parse_program
from flowcg.oracle import defuse_by_search


def chains(p):
    cfg = build_cfg(p)
    mr = compute_mod_ref(cfg, analyze_fi(p))
    return cfg, mr, compute_indirect_defuse(cfg, mr)


def test_motiv_mod_ref(motiv):
    _, mr, _ = chains(motiv)
    assert mr.may_def == {"l7": {"o"}, "l9": {"o"}}
    assert mr.may_use == {"l8": {"o"}, "l10": {"o"}}
    assert mr.accessed("l3") == frozenset()


def test_motiv_edges(motiv):
    _, _, du = chains(motiv)
    assert du == {IndirectDefUseEdge("l7", "l8", "o"), IndirectDefUseEdge("l7", "l9", "o"),
                  IndirectDefUseEdge("l9", "l10", "o")}


def test_diamond_join_feeds_load_twice():
    text = """
    func main() {
      l1: x = &o
      l2: p = &a
      l3: br l4 l6
      l4: *x = p
      l5: goto l7
      l6: *x = p
      l7: y = *x
    }
    """
    _, _, du = chains(parse_program(text))
    assert {e for e in du if e.use_label == "l7"} == {
        IndirectDefUseEdge("l4", "l7", "o"), IndirectDefUseEdge("l6", "l7", "o")}


def test_no_stores_no_edges():
    _, mr, du = chains(parse_program("func main() {\n l1: x = &o\n l2: y = *x\n}"))
    assert mr.may_def == {} and du == frozenset()


def test_loop_self_reach():
    text = """
    func main() {
      l1: x = &o
      l2: p = &a
      l3: *x = p
      l4: br l3 l5
      l5: y = *x
    }
    """
    cfg, mr, du = chains(parse_program(text))
    assert self_reaching(cfg, mr) == {("l3", "o")}
    assert IndirectDefUseEdge("l3", "l3", "o") in reaching_defuse(cfg, mr)
    assert all(e.def_label != e.use_label for e in du)
    assert du == {IndirectDefUseEdge("l3", "l5", "o")}


def test_matches_search(motiv):
    cfg, mr, du = chains(motiv)
    assert du == defuse_by_search(cfg, mr.may_def, mr.may_use)


def test_format(motiv):
    _, _, du = chains(motiv)
    assert format_defuse(du) == ("def l7 -> use l8 [o]\ndef l7 -> use l9 [o]\n"
                                 "def l9 -> use l10 [o]\n")
