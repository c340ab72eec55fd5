"""Byzantine-tolerant SWMR atomic register emulation over SWSR registers,
with a deterministic adversarial execution engine and a property checker."""

from .core import (
    Config,
    FullTimestamp,
    InformSet,
    OrderVerdict,
    PartialTimestamp,
    ProcessId,
    TaggedValue,
    WitnessEntry,
    WitnessSet,
    WRITER,
    mapsto_compare,
    partial_timestamp,
    vec_compare,
    ws_of,
)
from .engine import (
    ExecutionHistory,
    RoundRobin,
    SeededRandom,
    Scripted,
    StepLimitExhausted,
    Workload,
    enumerate_schedules,
    run,
)

__all__ = [
    "Config",
    "ExecutionHistory",
    "FullTimestamp",
    "InformSet",
    "OrderVerdict",
    "PartialTimestamp",
    "ProcessId",
    "RoundRobin",
    "SeededRandom",
    "Scripted",
    "StepLimitExhausted",
    "TaggedValue",
    "WRITER",
    "WitnessEntry",
    "WitnessSet",
    "Workload",
    "enumerate_schedules",
    "mapsto_compare",
    "partial_timestamp",
    "run",
    "vec_compare",
    "ws_of",
]
