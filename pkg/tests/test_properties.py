"""Property checks over generated programs and random graphs."""

from __future__ import annotations

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from flowcg.andersen import analyze_fi
from flowcg.consgraph import ConstraintGraph, EdgeKind
from flowcg.fssolver import run_pipeline
from flowcg.genprog import GenConfig, generate
from flowcg.ir import Store, Variable, VarKind, build_cfg, format_program, parse_program
from flowcg.oracle import compare, dense_fs_solve, naive_fi_solve

SETTINGS = settings(max_examples=60, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])

configs = st.builds(
    GenConfig,
    seed=st.integers(0, 2 ** 32),
    max_stmts=st.integers(1, 30),
    max_objects=st.integers(0, 5),
    max_funcs=st.integers(1, 3),
    branch_prob=st.sampled_from([0.0, 0.2, 0.4]),
    loop_prob=st.sampled_from([0.0, 0.15, 0.3]),
    indirect_call_prob=st.sampled_from([0.0, 0.4]),
    summary_prob=st.sampled_from([0.0, 0.5, 1.0]),
    gep_prob=st.sampled_from([0.0, 0.1]),
)


@SETTINGS
@given(configs)
def test_round_trip(c):
    p = generate(c)
    text = format_program(p)
    assert format_program(parse_program(text)) == text


@SETTINGS
@given(configs)
def test_fi_matches_naive(c):
    p = generate(c)
    fi, naive = analyze_fi(p), naive_fi_solve(p)
    for v in set(fi.pts) | set(naive.pts):
        assert fi.get(v) == naive.get(v)


@SETTINGS
@given(configs)
def test_fs_within_fi_and_equal_to_dense(c):
    p = generate(c)
    pl = run_pipeline(p)
    r = pl.result
    for v, s in r.pts.items():
        assert s <= pl.fi.get(v)
    for (o, _), s in r.versions.items():
        assert s <= pl.fi.get(o)
    assert compare(r, dense_fs_solve(build_cfg(p), p)) == []


@SETTINGS
@given(configs)
def test_fixpoint_closed_under_active_copies(c):
    g = run_pipeline(generate(c)).fsconsg.graph
    for e in g.edges:
        if e.kind is EdgeKind.COPY and e.active:
            assert g.points_to(e.src) & ~g.points_to(e.dst) == 0


@SETTINGS
@given(configs)
def test_strong_update_exactness(c):
    pl = run_pipeline(generate(c))
    r, prog = pl.result, pl.program
    for label in r.su_labels:
        s = prog.statements[label]
        assert isinstance(s, Store)
        (o,) = r.pts[s.ptr]
        assert r.versions[(o, label)] == r.pts[s.src]


@SETTINGS
@given(configs)
def test_simplification_neutral(c):
    p = generate(c)
    assert run_pipeline(p).result.facts() == run_pipeline(p, simplify=False).result.facts()


@SETTINGS
@given(configs)
def test_memory_chains_are_sparse(c):
    pl = run_pipeline(generate(c))
    g = pl.fsconsg.graph
    for e in g.edges:
        if e.kind is EdgeKind.COPY and g.is_version(e.src) and g.is_version(e.dst):
            src, dst = g.payloads[e.src], g.payloads[e.dst]
            assert src.base == dst.base and src.at != dst.at


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1),
                                                       st.integers(0, n - 1)), max_size=30))))
def test_scc_collapse_invariants(data):
    n, pairs = data
    g = ConstraintGraph()
    for i in range(n):
        g.add_node(Variable(f"v{i}", VarKind.TOP_LEVEL))
    for a, b in pairs:
        if a != b:
            g.add_edge(EdgeKind.COPY, a, b)
    reach = {i: {i} for i in range(n)}
    changed = True
    while changed:
        changed = False
        for a, b in pairs:
            new = reach[a] | reach[b]
            if new != reach[a]:
                reach[a], changed = new, True
    res = g.scc_collapse()
    for i in range(n):
        for j in range(n):
            same = j in reach[i] and i in reach[j]
            assert (res.rep[i] == res.rep[j]) == same
        members = [j for j in range(n) if res.rep[j] == res.rep[i]]
        assert res.rep[i] == min(members)
    pos = {r: k for k, r in enumerate(res.topo_order)}
    for a, b in pairs:
        if res.rep[a] != res.rep[b]:
            assert pos[res.rep[a]] < pos[res.rep[b]]


@SETTINGS
@given(st.integers(0, 2 ** 32), st.integers(1, 40))
def test_straight_line_cfg_follows_text(seed, n):
    p = generate(GenConfig(seed=seed, max_stmts=n, branch_prob=0, loop_prob=0))
    cfg = build_cfg(p)
    order = list(p.statements)
    assert list(cfg.nodes) == order
    for a, b in zip(order, order[1:]):
        assert cfg.successors(a) == (b,)
