import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csdp.errors import CapacityExceeded
from csdp.mechanisms import ORACLE, MechanismSpec
from csdp.plan import (TreePlan, build_plan, ceil_root, max_levels, schedule, vstar, vstar_ids)
from csdp.privacy import PrivacyParams
from csdp.runtime import ShuffleRuntime

from oracles import brute_vstar, closed_prefix_formula


def ranges(nodes):
    return [(v.start, v.end) for v in nodes]


def test_binary_n8_nodes():
    plan = build_plan(8, binary=True)
    assert (plan.k, plan.d, plan.d_low) == (2, 2, 2)
    assert ranges(plan.nodes_at_level(1)) == [(1, 2), (3, 4), (5, 6), (7, 8)]
    assert ranges(plan.nodes_at_level(2)) == [(1, 4), (5, 8)]


def test_general_n32_k1():
    plan = build_plan(32, 1)
    assert (plan.d_low, plan.d) == (4, 8)
    assert ranges(plan.nodes) == [(s, s + 3) for s in range(1, 33, 4)]


def test_general_n9_k1():
    plan = build_plan(9, 1)
    assert (plan.d_low, plan.d) == (3, 3)
    assert ranges(plan.nodes) == [(1, 3), (4, 6), (7, 9)]


@pytest.mark.parametrize("n,k", [(8, 0), (8, 3), (1, 1), (2.5, 1)])
def test_build_plan_rejects(n, k):
    with pytest.raises(ValueError):
        build_plan(n, k)


def test_binary_needs_consistent_k():
    with pytest.raises(ValueError):
        build_plan(8, 1, binary=True)
    assert build_plan(8, 2, binary=True).k == 2
    with pytest.raises(ValueError):
        build_plan(2, binary=True)


def test_binary_padding():
    plan = build_plan(5, binary=True)
    assert plan.n_padded == 8 and plan.n == 5 and plan.k == 2


@pytest.mark.parametrize("n,p", [(27, 3), (28, 3), (1000, 3), (1001, 3), (64, 3), (2**16, 7), (10**12, 2)])
def test_ceil_root_exact(n, p):
    r = ceil_root(n, p)
    assert r**p >= n and (r - 1) ** p < n


def test_eight_leaf_binary_covers():
    plan = build_plan(8, binary=True)
    labels = lambda t: [v.label for v in vstar(plan, t)]
    assert labels(6) == ["v1^4", "v5^6"]
    assert labels(7) == ["v1^4", "v5^6"]
    assert labels(8) == ["v1^4", "v5^8"]
    assert labels(1) == []


def test_vstar_empty_before_first_close():
    for n, k in [(64, 1), (64, 2), (100, 3)]:
        plan = build_plan(n, k)
        for t in range(1, plan.d_low):
            assert vstar(plan, t) == []


def all_plans(max_n=64):
    for n in range(2, max_n + 1):
        for k in range(1, min(3, max_levels(n)) + 1):
            yield build_plan(n, k)
    for n in (4, 8, 16, 32, 64):
        yield build_plan(n, binary=True)


def test_vstar_matches_brute_force_everywhere():
    for plan in all_plans():
        for t in range(0, plan.n + 1):
            want = brute_vstar(plan, t)
            assert ranges(vstar(plan, t)) == want, (plan.n, plan.k, t)
            ids = vstar_ids(plan, t)
            assert [(plan.nodes[i].start, plan.nodes[i].end) for i in ids] == want


def test_cover_exactness_and_cardinality():
    for plan in all_plans():
        for t in range(1, plan.n + 1):
            cover = vstar(plan, t)
            covered = sum(v.size for v in cover)
            assert covered == closed_prefix_formula(plan, t)
            assert plan.closed_prefix(t) == covered
            if plan.binary:
                assert len(cover) <= (plan.n - 1).bit_length()
            elif t < plan.n:
                assert len(cover) <= plan.k * (plan.d - 1) or plan.d == 1
            else:
                assert len(cover) <= plan.d


def test_tree_structure_invariants():
    for plan in all_plans():
        low = plan.nodes_at_level(1)
        assert low[0].start == 1 and low[-1].end == plan.n_padded
        assert all(v.size <= plan.d_low for v in low)
        assert all(a.end + 1 == b.start for a, b in zip(low, low[1:]))
        for level in range(2, plan.k + 1):
            kids = plan.nodes_at_level(level - 1)
            for v in plan.nodes_at_level(level):
                inside = [c for c in kids if v.start <= c.start and c.end <= v.end]
                assert 1 <= len(inside) <= plan.d
                assert inside[0].start == v.start and inside[-1].end == v.end


def test_schedule_examples():
    s = schedule(build_plan(8, binary=True))
    acts, _ = s.at(5)
    assert sorted(ranges(acts)) == [(5, 6), (5, 8)]
    acts, _ = s.at(1)
    assert sorted(v.level for v in acts) == [1, 2]
    s = schedule(build_plan(32, 1))
    acts, execs = s.at(4)
    assert ranges(execs) == [(1, 4)] and acts == []
    acts, _ = s.at(5)
    assert ranges(acts) == [(5, 8)]


def test_schedule_replay_through_runtime():
    for plan in all_plans(40):
        specs = {v.node_id: MechanismSpec(ORACLE, v.size, PrivacyParams(1, 0.1)) for v in plan.nodes}
        rt = ShuffleRuntime(plan, specs, seed=0)
        for t in range(1, plan.n_padded + 1):
            rt.step(t, 0.0)
            assert rt.active_count() <= plan.k
        assert rt.active_count() == 0
        assert sorted(r.mechanism_id for r in rt.transcript) == list(range(len(plan.nodes)))


def test_runtime_with_too_few_slots():
    plan = build_plan(16, binary=True)
    specs = {v.node_id: MechanismSpec(ORACLE, v.size, PrivacyParams(1, 0.1)) for v in plan.nodes}
    rt = ShuffleRuntime(plan, specs, seed=0, capacity=plan.k - 1)
    with pytest.raises(CapacityExceeded):
        rt.step(1, 0.0)


def test_plan_round_trip():
    plan = build_plan(50, 2)
    again = TreePlan.from_dict(json.loads(plan.dumps()))
    assert again == plan
    assert again.dumps() == plan.dumps()


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 3000), data=st.data())
def test_random_plans_cover_all_leaves(n, data):
    k = data.draw(st.integers(1, min(5, max_levels(n))))
    plan = build_plan(n, k)
    assert plan.d_low ** (2 * k + 1) >= n
    assert plan.d_low * plan.d**k >= n
    top = plan.nodes_at_level(k)
    assert top[0].start == 1 and top[-1].end == n
    assert vstar(plan, n)[-1].end == n
