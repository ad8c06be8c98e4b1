from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager

OP_CLASSES = (
    "train_seq",
    "predict_seq",
    "train_init",
    "predict_init",
    "train_DQN",
    "predict_1",
    "predict_32",
)


class OpTimer:
    """Accumulates wall time (ns) and call counts per operation class."""

    def __init__(self):
        self.total_ns: dict[str, int] = defaultdict(int)
        self.calls: dict[str, int] = defaultdict(int)

    @contextmanager
    def time(self, op: str):
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            self.total_ns[op] += time.perf_counter_ns() - start
            self.calls[op] += 1

    def merge(self, other: "OpTimer") -> None:
        for k, v in other.total_ns.items():
            self.total_ns[k] += v
        for k, v in other.calls.items():
            self.calls[k] += v

    def as_dict(self) -> dict[str, int]:
        return {op: int(self.total_ns.get(op, 0)) for op in OP_CLASSES}
