from __future__ import annotations

import pytest

from flowcg.andersen import analyze_fi
from flowcg.consgraph import EdgeKind
from flowcg.defuse import compute_indirect_defuse, compute_mod_ref
from flowcg.fsconsg import FsConsGError, VersionError, build_fsconsg, version_of
from flowcg.genprog import GenConfig, generate
from flowcg.ir import Copy, Store, build_cfg, parse_program


def build(p):
    cfg = build_cfg(p)
    fi = analyze_fi(p)
    du = compute_indirect_defuse(cfg, compute_mod_ref(cfg, fi))
    return build_fsconsg(cfg, fi, du)


def named(fsg):
    g = fsg.graph
    return {(e.kind.value, g.name(e.src), g.name(e.dst), e.label, e.killable) for e in g.edges}


def test_motiv_edges(motiv):
    fsg = build(motiv)
    assert named(fsg) == {
        ("addr", "a", "p", None, False), ("addr", "b", "q", None, False),
        ("addr", "o", "x", None, False),
        ("store", "p", "x", "l7", False), ("load", "x", "y", "l8", False),
        ("store", "q", "x", "l9", False), ("load", "x", "z", "l10", False),
        ("copy", "o@l7", "o@l8", None, False), ("copy", "o@l7", "o@l9", None, True),
        ("copy", "o@l9", "o@l10", None, False),
    }
    killable = [e for e in fsg.graph.edges if e.killable]
    assert len(killable) == 1 and not killable[0].active
    assert fsg.killable_in == {version_of(fsg, "o", "l9"): [fsg.graph.edges.index(killable[0])]}


def test_symbols_and_versions(motiv):
    fsg = build(motiv)
    assert set(fsg.symbols) == {"p", "q", "x", "y", "z"}
    assert {fsg.graph.name(v) for v in fsg.version_nodes()} == {"o@l7", "o@l8", "o@l9", "o@l10"}


def test_no_memory_ops_means_no_versions():
    fsg = build(parse_program("func main() {\n l1: p = &a\n l2: q = p\n}"))
    assert fsg.versions_at == {} and fsg.graph.count_constraints().versioned == 0


def test_one_store_two_loads():
    text = "func main() {\n l1: x = &o\n l2: p = &a\n l3: *x = p\n l4: y = *x\n l5: z = *x\n}"
    fsg = build(parse_program(text))
    copies = {(fsg.graph.name(e.src), fsg.graph.name(e.dst))
              for e in fsg.graph.edges if e.kind is EdgeKind.COPY}
    assert copies == {("o@l3", "o@l4"), ("o@l3", "o@l5")}


def test_version_of(motiv):
    fsg = build(motiv)
    v = version_of(fsg, "o", "l7")
    assert fsg.graph.name(v) == "o@l7"
    with pytest.raises(VersionError):
        version_of(fsg, "o", "l3")
    with pytest.raises(KeyError):
        version_of(fsg, "a", "l7")


def test_add_defuse_rejects_unknown_labels(motiv):
    from flowcg.defuse import IndirectDefUseEdge
    fsg = build(motiv)
    with pytest.raises(FsConsGError):
        fsg.add_defuse(IndirectDefUseEdge("l7", "l99", "o"))
    with pytest.raises(FsConsGError):
        fsg.add_defuse(IndirectDefUseEdge("l3", "l8", "o"))


@pytest.mark.parametrize("seed", range(25))
def test_size_bounds(seed):
    p = generate(GenConfig(seed=seed, max_stmts=30, max_objects=5, branch_prob=0.3,
                           loop_prob=0.2))
    fsg = build(p)
    g = fsg.graph
    stats = g.count_constraints()
    accessed = sum(len(fsg.mod_ref.accessed(lab)) for lab in fsg.cfg.nodes)
    assert stats.versioned == accessed
    assert stats.nodes == len(fsg.fi.objects) + len(p.top_level())
    plain = {(s.src, s.dst) for s in p if isinstance(s, Copy)}
    assert stats.copy == len(fsg.defuse) + len(plain)
    # only copies into a store's version can be killed
    for e in g.edges:
        if e.killable:
            assert isinstance(p.statements[g.payloads[e.dst].at], Store)
