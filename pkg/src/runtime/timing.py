"""
Per-primitive wall-clock and traffic accounting
"""

import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional

import psutil
from pydantic import BaseModel, Field
from rich.table import Table


class Primitive(str, Enum):
    HOM_CONV = "HomConv"
    RELU_GC = "ReLU-GC"
    SQUARE_MT = "Square-MT"
    AVG_POOL = "AvgPool"
    MAXPOOL_GC = "MaxPool-GC"
    ARGMAX_GC = "Argmax-GC"
    TRUNCATION = "Truncation"
    SETUP = "Setup"
    TRANSPORT = "transport"


@dataclass
class _Frame:
    primitive: Primitive
    start: float
    excluded: float = 0.0


@dataclass
class TimingLedger:
    """
    Cumulative seconds, bytes and element counts per primitive

    Transport time is booked to TRANSPORT and subtracted from whatever
    primitive is running; nested primitives are subtracted from their parent.
    """

    seconds: Dict[Primitive, float] = field(default_factory=lambda: {p: 0.0 for p in Primitive})
    bytes: Dict[Primitive, int] = field(default_factory=lambda: {p: 0 for p in Primitive})
    elements: Dict[Primitive, int] = field(default_factory=lambda: {p: 0 for p in Primitive})
    batch_seconds: Dict[int, Dict[Primitive, float]] = field(default_factory=dict)
    batch_and_gates: Dict[int, int] = field(default_factory=dict)
    bytes_sent: int = 0
    bytes_received: int = 0
    batch: int = 0
    _stack: List[_Frame] = field(default_factory=list, repr=False)

    def _book(self, primitive: Primitive, seconds: float) -> None:
        self.seconds[primitive] += seconds
        per_batch = self.batch_seconds.setdefault(self.batch, {})
        per_batch[primitive] = per_batch.get(primitive, 0.0) + seconds

    @contextmanager
    def primitive(self, primitive: Primitive, elements: int = 0) -> Iterator[None]:
        frame = _Frame(primitive, time.perf_counter())
        self._stack.append(frame)
        try:
            yield
        finally:
            self._stack.pop()
            elapsed = time.perf_counter() - frame.start
            self._book(primitive, max(0.0, elapsed - frame.excluded))
            self.elements[primitive] += elements
            if self._stack:
                self._stack[-1].excluded += elapsed

    def transport(self, seconds: float, nbytes: int, sent: bool) -> None:
        self._book(Primitive.TRANSPORT, seconds)
        self.bytes[Primitive.TRANSPORT] += nbytes
        if self._stack:
            self._stack[-1].excluded += seconds
            self.bytes[self._stack[-1].primitive] += nbytes
        if sent:
            self.bytes_sent += nbytes
        else:
            self.bytes_received += nbytes

    def record_gates(self, and_gates: int) -> None:
        self.batch_and_gates[self.batch] = self.batch_and_gates.get(self.batch, 0) + and_gates

    @property
    def total(self) -> float:
        return sum(self.seconds.values())

    def per_element(self, primitive: Primitive) -> float:
        count = self.elements[primitive]
        return self.seconds[primitive] / count if count else 0.0


class PrimitiveRow(BaseModel):
    primitive: str
    seconds: float
    bytes: int
    elements: int
    percent: float


class BatchRow(BaseModel):
    batch: int
    seconds: Dict[str, float]
    and_gates: int = 0
    table_rows: int = 0


class TimingReport(BaseModel):
    """Machine-readable timing summary of one party's run"""

    party: str
    total_seconds: float
    bytes_sent: int
    bytes_received: int
    primitives: List[PrimitiveRow]
    batches: List[BatchRow]
    metadata: Dict[str, Any] = Field(default_factory=dict)
    host: Dict[str, Any] = Field(default_factory=dict)

    def share(self, primitive: Primitive) -> float:
        for row in self.primitives:
            if row.primitive == primitive.value:
                return row.percent
        return 0.0

    def seconds(self, primitive: Primitive) -> float:
        for row in self.primitives:
            if row.primitive == primitive.value:
                return row.seconds
        return 0.0

    def elements(self, primitive: Primitive) -> int:
        for row in self.primitives:
            if row.primitive == primitive.value:
                return row.elements
        return 0

    def per_element(self, primitive: Primitive) -> float:
        """Seconds per processed element, 0 when the primitive never ran"""
        count = self.elements(primitive)
        return self.seconds(primitive) / count if count else 0.0


def host_info() -> Dict[str, Any]:
    memory = psutil.virtual_memory()
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_gb": round(memory.total / 1024**3, 2),
    }


def timing_report(
    ledger: TimingLedger, party: str, metadata: Optional[Dict[str, Any]] = None
) -> TimingReport:
    """
    Summarize a ledger

    Percentages are shares of the ledger total and sum to 100 up to rounding.
    """
    total = ledger.total
    rows = [
        PrimitiveRow(
            primitive=p.value,
            seconds=round(ledger.seconds[p], 6),
            bytes=ledger.bytes[p],
            elements=ledger.elements[p],
            percent=round(100.0 * ledger.seconds[p] / total, 3) if total > 0 else 0.0,
        )
        for p in Primitive
    ]
    batches = [
        BatchRow(
            batch=b,
            seconds={p.value: round(s, 6) for p, s in ledger.batch_seconds[b].items()},
            and_gates=ledger.batch_and_gates.get(b, 0),
            table_rows=4 * ledger.batch_and_gates.get(b, 0),
        )
        for b in sorted(ledger.batch_seconds)
    ]
    return TimingReport(
        party=party,
        total_seconds=round(total, 6),
        bytes_sent=ledger.bytes_sent,
        bytes_received=ledger.bytes_received,
        primitives=rows,
        batches=batches,
        metadata=dict(metadata or {}),
        host=host_info(),
    )


def render_table(report: TimingReport) -> Table:
    table = Table(title=f"Timing ({report.party}, total {report.total_seconds:.2f}s)")
    table.add_column("Primitive")
    table.add_column("Seconds", justify="right")
    table.add_column("Share %", justify="right")
    table.add_column("Bytes", justify="right")
    table.add_column("Elements", justify="right")
    for row in report.primitives:
        table.add_row(
            row.primitive,
            f"{row.seconds:.3f}",
            f"{row.percent:.1f}",
            f"{row.bytes:,}",
            f"{row.elements:,}",
        )
    return table
