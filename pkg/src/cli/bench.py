"""
Variant benchmark: the same scaled UNET under each activation/pooling assignment
"""

import statistics
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, Field
from rich.table import Table

from src.pahe.keys import keygen
from src.ring.params import RingParams
from src.runtime.harness import run_two_party
from src.runtime.schedule import rotation_steps_for
from src.runtime.timing import Primitive, host_info
from src.unet.quant import calibrate_shifts, gen_synthetic_input, gen_synthetic_weights
from src.unet.spec import QuantParams, Variant, build_unet_architecture
from src.utils.logger import get_logger
from src.utils.settings import Settings, TruncationMode

logger = get_logger(__name__)

GC_PRIMITIVES = (Primitive.RELU_GC, Primitive.MAXPOOL_GC, Primitive.ARGMAX_GC)


class VariantRow(BaseModel):
    variant: str
    seconds: List[float]
    mean_seconds: float
    speedup: float = 1.0
    primitive_seconds: Dict[str, float]
    primitive_elements: Dict[str, int]
    primitive_shares: Dict[str, float]
    gc_share: float
    and_gates: Dict[int, int]
    table_rows: Dict[int, int]

    def per_element(self, primitive: Primitive) -> float:
        """Mean seconds per element of one primitive, 0 when it never ran"""
        count = self.primitive_elements.get(primitive.value, 0)
        return self.primitive_seconds[primitive.value] / count if count else 0.0


class BenchReport(BaseModel):
    input_dims: List[int]
    labels: int
    base_channels: int
    truncation: str
    repetitions: int
    seed: int
    dealer_seed: int
    params_hash: str
    reference: str
    variants: List[VariantRow]
    host: Dict[str, Any] = Field(default_factory=dict)

    def row(self, variant: Variant) -> VariantRow:
        for row in self.variants:
            if row.variant == variant.value:
                return row
        raise KeyError(variant.value)


def run_bench(
    input_dims: Sequence[int],
    variants: Sequence[Variant],
    params: RingParams,
    repetitions: int = 1,
    mode: TruncationMode = TruncationMode.PROBABILISTIC,
    seed: int = 0,
    dealer_seed: int = 1,
    labels: int = 3,
    base_channels: int = 4,
    quant: Optional[QuantParams] = None,
    settings: Optional[Settings] = None,
) -> BenchReport:
    """
    Time every variant on identical synthetic weights and input

    Speedups are reference mean over variant mean, the reference being the
    baseline variant when it is in the list and the first variant otherwise.
    """
    if not variants:
        raise ValueError("Bench needs at least one variant")
    rows: List[VariantRow] = []
    for variant in variants:
        spec = build_unet_architecture(input_dims, labels, variant, quant, base_channels)
        weights = gen_synthetic_weights(spec, seed)
        image = gen_synthetic_input(spec, seed)
        spec = calibrate_shifts(spec, weights, image)
        keys = keygen(params, rotation_steps_for(spec, params), seed=seed)
        seconds: List[float] = []
        per_primitive: Dict[str, List[float]] = {p.value: [] for p in Primitive}
        last = None
        for rep in range(repetitions):
            result = run_two_party(
                spec,
                image,
                weights,
                params,
                mode=mode,
                seed=seed,
                dealer_seed=dealer_seed,
                settings=settings,
                keys=keys,
            )
            last = result.alice.report
            seconds.append(last.total_seconds)
            for p in Primitive:
                per_primitive[p.value].append(last.seconds(p))
            logger.info(f"{variant.value} run {rep + 1}/{repetitions}: {last.total_seconds:.2f}s")
        assert last is not None
        mean = statistics.fmean(seconds)
        primitive_seconds = {k: statistics.fmean(v) for k, v in per_primitive.items()}
        compute = sum(s for k, s in primitive_seconds.items() if k != Primitive.TRANSPORT.value)
        shares = {
            k: (100.0 * s / compute if compute > 0 else 0.0)
            for k, s in primitive_seconds.items()
            if k != Primitive.TRANSPORT.value
        }
        rows.append(
            VariantRow(
                variant=variant.value,
                seconds=seconds,
                mean_seconds=mean,
                primitive_seconds=primitive_seconds,
                primitive_elements={p.value: last.elements(p) for p in Primitive},
                primitive_shares=shares,
                gc_share=sum(shares[p.value] for p in GC_PRIMITIVES),
                and_gates={b.batch: b.and_gates for b in last.batches},
                table_rows={b.batch: b.table_rows for b in last.batches},
            )
        )

    reference = Variant.BASELINE if Variant.BASELINE in variants else variants[0]
    ref_mean = next(r.mean_seconds for r in rows if r.variant == reference.value)
    for row in rows:
        row.speedup = ref_mean / row.mean_seconds if row.mean_seconds > 0 else 1.0
    return BenchReport(
        input_dims=list(input_dims),
        labels=labels,
        base_channels=base_channels,
        truncation=mode.value,
        repetitions=repetitions,
        seed=seed,
        dealer_seed=dealer_seed,
        params_hash=params.fingerprint(),
        reference=reference.value,
        variants=rows,
        host=host_info(),
    )


def render_bench(report: BenchReport) -> Table:
    table = Table(title=f"Variants vs {report.reference} ({report.truncation} truncation)")
    table.add_column("Variant")
    table.add_column("Mean s", justify="right")
    table.add_column("Speedup", justify="right")
    table.add_column("GC %", justify="right")
    table.add_column("HomConv %", justify="right")
    table.add_column("Square-MT %", justify="right")
    table.add_column("GC table rows", justify="right")
    table.add_column("µs/ReLU", justify="right")
    table.add_column("µs/square", justify="right")
    for row in report.variants:
        table.add_row(
            row.variant,
            f"{row.mean_seconds:.3f}",
            f"{row.speedup:.2f}x",
            f"{row.gc_share:.1f}",
            f"{row.primitive_shares[Primitive.HOM_CONV.value]:.1f}",
            f"{row.primitive_shares[Primitive.SQUARE_MT.value]:.1f}",
            f"{sum(row.table_rows.values()):,}",
            f"{1e6 * row.per_element(Primitive.RELU_GC):.1f}",
            f"{1e6 * row.per_element(Primitive.SQUARE_MT):.1f}",
        )
    return table
