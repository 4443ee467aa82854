import numpy as np
import pytest
from scipy import stats

from csdp.errors import ProtocolViolation
from csdp.mechanisms import BINARY, ORACLE, VECTOR, MechanismSpec
from csdp.plan import build_plan
from csdp.privacy import PrivacyParams
from csdp.runtime import ShuffleRuntime, ShufflerSlot, Transcript

from oracles import permutation_index

BUDGET = PrivacyParams(1.0, 0.1)


def spec(m, kind=ORACLE):
    return MechanismSpec(kind, m, BUDGET)


def test_slot_lifecycle():
    slot = ShufflerSlot(1)
    slot.activate(spec(4))
    assert slot.active and slot.remaining == 4
    with pytest.raises(ProtocolViolation):
        slot.activate(spec(4))
    slot.submit(np.array([[1.0]]))
    slot.submit(np.array([[2.0]]))
    assert slot.execute_if_full(np.random.default_rng(0)) is None
    assert slot.remaining == 2


def test_slot_m1_executes_immediately():
    slot = ShufflerSlot(1)
    slot.activate(spec(1))
    slot.submit(np.array([[3.0]]))
    out = slot.execute_if_full(np.random.default_rng(0))
    assert out.tolist() == [[3.0]]
    assert not slot.active


def test_submit_errors():
    slot = ShufflerSlot(2)
    with pytest.raises(ProtocolViolation):
        slot.submit(np.array([1]))
    slot.activate(spec(1))
    slot.submit(np.array([[1.0]]))
    with pytest.raises(ProtocolViolation):
        slot.submit(np.array([[1.0]]))


def test_multiset_preserved():
    slot = ShufflerSlot(1)
    slot.activate(spec(3, BINARY))
    for m in ([0], [1], [1]):
        slot.submit(np.array(m))
    out = slot.execute_if_full(np.random.default_rng(3))
    assert sorted(out.tolist()) == [0, 1, 1]


def test_shuffle_uniform_over_24_orders():
    counts = np.zeros(24)
    for i in range(20000):
        slot = ShufflerSlot(1)
        slot.activate(spec(4))
        for v in range(4):
            slot.submit(np.array([[float(v)]]))
        out = slot.execute_if_full(np.random.default_rng([5, i]))
        counts[permutation_index(out[:, 0].astype(int))] += 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_binary_n8_execution_times():
    plan = build_plan(8, binary=True)
    specs = {v.node_id: MechanismSpec(ORACLE, v.size, BUDGET) for v in plan.nodes}
    rt = ShuffleRuntime(plan, specs, seed=1)
    assert rt.step(1, 1.0) == []
    recs = rt.step(2, 0.0)
    assert [(r.slot_id, r.m) for r in recs] == [(1, 2)]
    assert sorted(recs[0].messages[:, 0].tolist()) == [0.0, 1.0]
    rt.step(3, 1.0)
    recs = rt.step(4, 1.0)
    assert [(r.slot_id, r.m) for r in recs] == [(1, 2), (2, 4)]


def test_time_must_advance_by_one():
    plan = build_plan(8, 1)
    specs = {v.node_id: MechanismSpec(ORACLE, v.size, BUDGET) for v in plan.nodes}
    rt = ShuffleRuntime(plan, specs, seed=1)
    with pytest.raises(ProtocolViolation):
        rt.step(2, 0.0)


def test_adaptive_activation_unsupported():
    plan = build_plan(8, 1)
    rt = ShuffleRuntime(plan, {}, seed=0)
    with pytest.raises(NotImplementedError):
        rt.activate_adaptive(1, spec(2))


@pytest.mark.parametrize("kind", [BINARY, VECTOR, ORACLE])
def test_randomized_runs_preserve_multisets_and_replay(kind):
    rng = np.random.default_rng(9)
    for n, k in [(64, 1), (200, 2), (512, 3)]:
        plan = build_plan(n, k)
        budget = PrivacyParams(8.0, 0.1)
        specs = {v.node_id: MechanismSpec(kind, v.size, budget) for v in plan.nodes}
        values = rng.integers(0, 2, n) if kind == BINARY else rng.random(n)
        runs = []
        for _ in range(2):
            rt = ShuffleRuntime(plan, specs, seed=42)
            for t, b in enumerate(values, start=1):
                rt.step(t, b)
            runs.append(rt.transcript.dumps("r"))
            assert rt.active_count() == 0
            assert len(rt.transcript) == len(plan.nodes)
        assert runs[0] == runs[1]
        if kind == ORACLE:
            for rec in Transcript.loads(runs[0]):
                v = plan.nodes[rec.mechanism_id]
                assert sorted(rec.messages.ravel().tolist()) == sorted(values[v.start - 1 : v.end].tolist())


def test_transcript_order_and_round_trip():
    plan = build_plan(16, binary=True)
    specs = {v.node_id: MechanismSpec(BINARY, v.size, PrivacyParams(20.0, 0.1)) for v in plan.nodes}
    rt = ShuffleRuntime(plan, specs, seed=3)
    for t in range(1, 17):
        rt.step(t, t % 2)
    keys = [(r.close_time, r.slot_id) for r in rt.transcript]
    assert keys == sorted(keys)
    text = rt.transcript.dumps("x")
    assert Transcript.loads(text).dumps("x") == text
    with pytest.raises(ProtocolViolation):
        rt.transcript.append(rt.transcript.records[0])
