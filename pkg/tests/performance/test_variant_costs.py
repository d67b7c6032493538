"""
Relative cost of the activation variants on a scaled-down network
"""

import pytest

from src.cli.bench import run_bench
from src.ring.params import RingParams
from src.runtime.timing import Primitive
from src.unet.spec import Variant
from src.utils.settings import Settings, TruncationMode

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def bench():
    params = RingParams.generate(n=256, p_bits=20, q_bits=60)
    return run_bench(
        (1, 8, 8),
        [Variant.BASELINE, Variant.RELU_AVG, Variant.HYBRID, Variant.SQUARE],
        params,
        mode=TruncationMode.PROBABILISTIC,
        base_channels=2,
        repetitions=5,
        settings=Settings(_env_file=None, transport_timeout=300.0),
    )


def test_garbled_gates_shrink_with_fewer_relus(bench):
    """Test AND-gate totals order the variants by their ReLU count"""
    gates = {v: sum(bench.row(v).and_gates.values()) for v in Variant}
    assert gates[Variant.SQUARE] < gates[Variant.HYBRID] < gates[Variant.RELU_AVG]
    assert gates[Variant.RELU_AVG] < gates[Variant.BASELINE]


def test_square_network_is_fastest(bench):
    """Test replacing every ReLU with a square beats the baseline"""
    assert bench.row(Variant.SQUARE).mean_seconds < bench.row(Variant.BASELINE).mean_seconds
    assert bench.row(Variant.SQUARE).speedup > 1.0
    assert bench.row(Variant.BASELINE).speedup == pytest.approx(1.0)


def test_relu_costs_more_per_element_than_square(bench):
    """Test a garbled ReLU costs at least twice a Beaver square"""
    row = bench.row(Variant.HYBRID)
    assert row.primitive_elements[Primitive.RELU_GC.value] > 0
    assert row.primitive_elements[Primitive.SQUARE_MT.value] > 0
    assert row.per_element(Primitive.RELU_GC) >= 2 * row.per_element(Primitive.SQUARE_MT)


def test_fewer_relus_run_faster_every_repetition(bench):
    """Test square < hybrid < all-ReLU in each of five runs"""
    square, hybrid, relu = (
        bench.row(v).seconds for v in (Variant.SQUARE, Variant.HYBRID, Variant.RELU_AVG)
    )
    assert len(square) == len(hybrid) == len(relu) == 5
    for rep in range(5):
        assert square[rep] < hybrid[rep] < relu[rep], rep


def test_garbled_circuits_dominate_the_baseline(bench):
    """Test GC dominates the baseline"""
    assert bench.row(Variant.BASELINE).gc_share > 50.0
    assert bench.row(Variant.SQUARE).gc_share < bench.row(Variant.BASELINE).gc_share


def test_table_rows_track_gates(bench):
    """Test four garbled rows per AND gate in every batch"""
    row = bench.row(Variant.HYBRID)
    assert all(row.table_rows[b] == 4 * gates for b, gates in row.and_gates.items())
