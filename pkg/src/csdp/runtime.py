"""k shuffler slots driven by a static plan, and the transcript they emit.

Each time step runs, in order: activations scheduled at t, encoding and
submission of user t's value to every active slot, execution of slots that
became full (in slot order). Output estimates are the estimator's business.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from . import kernels
from .errors import CapacityExceeded, ProtocolViolation
from .mechanisms import ORACLE, MechanismSpec
from .plan import Node, TreePlan, schedule


def node_rng(seed: int, stream: int, node_id: int) -> np.random.Generator:
    """Independent generator per (seed, stream, mechanism)."""
    return np.random.default_rng([int(seed), int(stream), int(node_id)])


ENCODER_STREAM = 0
SHUFFLER_STREAM = 1


class ShufflerSlot:
    """One shuffler: Inactive, or Active with a spec and a partly filled buffer."""

    def __init__(self, slot_id: int):
        self.slot_id = slot_id
        self.spec: MechanismSpec | None = None
        self.mechanism_id: int | None = None
        self.buffer: list[np.ndarray] = []
        self.remaining = 0

    @property
    def active(self) -> bool:
        return self.spec is not None

    def activate(self, spec: MechanismSpec, mechanism_id: int = 0) -> None:
        if self.active:
            raise ProtocolViolation(f"slot {self.slot_id} is already active")
        self.spec = spec
        self.mechanism_id = mechanism_id
        self.buffer = []
        self.remaining = spec.m

    def submit(self, messages) -> None:
        if not self.active:
            raise ProtocolViolation(f"slot {self.slot_id} is inactive")
        if self.remaining < 1:
            raise ProtocolViolation(f"slot {self.slot_id} is already full")
        self.buffer.append(np.asarray(messages))
        self.remaining -= 1

    def execute_if_full(self, rng: np.random.Generator) -> np.ndarray | None:
        """If full, return the uniformly permuted messages and deactivate."""
        if not self.active or self.remaining > 0:
            return None
        flat = np.concatenate(self.buffer, axis=0) if self.buffer else np.zeros(0, dtype=np.int64)
        out = flat[kernels.permutation(len(flat), rng)]
        self.spec = None
        self.mechanism_id = None
        self.buffer = []
        return out


@dataclass
class TranscriptRecord:
    close_time: int
    slot_id: int
    mechanism_id: int
    kind: str
    m: int
    d: int
    gamma: float
    messages: np.ndarray

    def to_json(self, run_id: str | None = None) -> str:
        rec = {
            "close_time": self.close_time,
            "slot_id": self.slot_id,
            "mechanism_id": self.mechanism_id,
            "kind": self.kind,
            "m": self.m,
            "d": self.d,
            "gamma": self.gamma,
            "messages": self.messages.tolist(),
        }
        if run_id is not None:
            rec["run_id"] = run_id
        return json.dumps(rec, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TranscriptRecord":
        rec = json.loads(line)
        dtype = np.float64 if rec["kind"] == ORACLE else np.int64
        return cls(
            rec["close_time"], rec["slot_id"], rec["mechanism_id"], rec["kind"],
            rec["m"], rec["d"], rec["gamma"], np.asarray(rec["messages"], dtype=dtype),
        )


@dataclass
class Transcript:
    """Executed batches ordered by close time, then slot id."""

    records: list[TranscriptRecord] = field(default_factory=list)

    def append(self, rec: TranscriptRecord) -> None:
        if self.records:
            last = self.records[-1]
            if (rec.close_time, rec.slot_id) <= (last.close_time, last.slot_id):
                raise ProtocolViolation("transcript records must arrive in (close_time, slot_id) order")
        self.records.append(rec)

    def __iter__(self) -> Iterator[TranscriptRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def dumps(self, run_id: str | None = None) -> str:
        return "".join(r.to_json(run_id) + "\n" for r in self.records)

    def write(self, path, run_id: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps(run_id))

    @classmethod
    def loads(cls, text: str) -> "Transcript":
        return cls([TranscriptRecord.from_json(line) for line in text.splitlines() if line.strip()])


class ShuffleRuntime:
    """Single-owner state machine running a static plan on ``plan.k`` slots.

    ``specs`` maps node id to the mechanism assigned to that node. Node level l
    runs on slot l.
    """

    def __init__(self, plan: TreePlan, specs: Mapping[int, MechanismSpec], seed: int,
                 capacity: int | None = None):
        self.plan = plan
        self.specs = specs
        self.seed = int(seed)
        self.capacity = plan.k if capacity is None else capacity
        self.slots = [ShufflerSlot(i) for i in range(1, self.capacity + 1)]
        self.schedule = schedule(plan)
        self.transcript = Transcript()
        self.t = 0
        self._nodes: dict[int, Node] = {}
        self._encoders: dict[int, np.random.Generator] = {}

    def _slot(self, level: int) -> ShufflerSlot:
        if level > self.capacity:
            raise CapacityExceeded(f"plan needs slot {level} but only {self.capacity} exist")
        return self.slots[level - 1]

    def active_count(self) -> int:
        return sum(s.active for s in self.slots)

    def activate_adaptive(self, slot_id: int, spec: MechanismSpec,
                          chooser: Callable[[Transcript], MechanismSpec] | None = None) -> None:
        """Server-chosen activation based on earlier outputs. Not supported: plans are static."""
        raise NotImplementedError("only plan-driven (static) schedules are supported")

    def step(self, t: int, value) -> list[TranscriptRecord]:
        """Process user ``t`` and return the batches executed at time ``t``."""
        if t != self.t + 1:
            raise ProtocolViolation(f"expected time {self.t + 1}, got {t}")
        if t > self.plan.n_padded:
            raise ProtocolViolation(f"time {t} is past the horizon {self.plan.n_padded}")
        self.t = t
        activations, _ = self.schedule.at(t)
        for node in activations:
            self._slot(node.level).activate(self.specs[node.node_id], node.node_id)
            self._nodes[node.node_id] = node
        for slot in self.slots:
            if not slot.active:
                continue
            node = self._nodes[slot.mechanism_id]
            if not node.contains(t):
                raise ProtocolViolation(f"user {t} is outside active node {node.label}")
            spec = slot.spec
            if spec.kind == ORACLE:
                msgs = spec.encode(value)
            else:
                rng = self._encoders.get(node.node_id)
                if rng is None:
                    rng = self._encoders[node.node_id] = node_rng(self.seed, ENCODER_STREAM, node.node_id)
                msgs = spec.encode(value, rng)
            slot.submit(msgs)
        executed = []
        for slot in self.slots:
            if slot.active and slot.remaining == 0:
                spec, mech_id = slot.spec, slot.mechanism_id
                out = slot.execute_if_full(node_rng(self.seed, SHUFFLER_STREAM, mech_id))
                rec = TranscriptRecord(t, slot.slot_id, mech_id, spec.kind, spec.m, spec.d,
                                       spec.gamma, out)
                self.transcript.append(rec)
                self._encoders.pop(mech_id, None)
                executed.append(rec)
        return executed
