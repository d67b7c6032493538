"""
blindseg command line

    blindseg spec --dims 1,16,16 --variant hybrid --out unet.yaml
    blindseg synth --spec unet.yaml --weights-out w.bunw --image-out x.bunt
    blindseg oracle --spec unet.yaml --weights w.bunw --image x.bunt --out labels.bunt
    blindseg run --spec unet.yaml --image x.bunt --weights w.bunw --out labels.bunt
    blindseg bench --dims 1,16,16 --variant baseline --variant square
"""

import functools
from pathlib import Path
from typing import Callable, Optional, Tuple

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.cli.bench import render_bench, run_bench
from src.cli.config import RingConfig, Role, RunConfig
from src.mpc.dealer import DealerTape
from src.mpc.sharing import Party
from src.pahe.keys import keygen
from src.pahe.serialization import load_keys, save_keys
from src.runtime.executor import run_secure_inference
from src.runtime.harness import open_session, run_two_party
from src.runtime.schedule import plan_correlations, rotation_steps_for
from src.runtime.timing import render_table
from src.runtime.transport import connect, listen
from src.unet.oracle import oracle_infer
from src.unet.quant import (
    analyze_headroom,
    calibrate_shifts,
    gen_synthetic_input,
    gen_synthetic_weights,
)
from src.unet.spec import (
    NetworkSpec,
    QuantParams,
    Variant,
    activation_counts,
    build_unet_architecture,
    layer_census,
)
from src.unet.tensor_io import load_tensor, load_weights, save_tensor, save_weights
from src.utils.errors import BlindSegError
from src.utils.logger import get_logger
from src.utils.settings import TruncationMode, get_settings

logger = get_logger(__name__)
console = Console()

VARIANTS = [v.value for v in Variant]
TRUNCATION = [m.value for m in TruncationMode]


def _fail_cleanly(func: Callable) -> Callable:
    """Turn library errors into a diagnostic and a nonzero exit code"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as e:
            raise click.UsageError(str(e)) from e
        except (BlindSegError, ValueError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise click.ClickException(f"{type(e).__name__}: {e}") from e

    return wrapper


def _ring_options(func: Callable) -> Callable:
    options = [
        click.option("--n", "ring_n", default=2048, show_default=True, help="Ring dimension"),
        click.option("--p-bits", default=20, show_default=True, help="Plaintext modulus bits"),
        click.option("--q-bits", default=60, show_default=True, help="Ciphertext modulus bits"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _parse_dims(value: str) -> Tuple[int, ...]:
    try:
        return tuple(int(x) for x in value.split(","))
    except ValueError as e:
        raise click.BadParameter(f"Expected comma-separated integers, got '{value}'") from e


def _parse_quant(value: Optional[str]) -> Optional[QuantParams]:
    """'W/A' weight and activation bits"""
    if value is None:
        return None
    try:
        weight_bits, activation_bits = (int(x) for x in value.split("/"))
    except ValueError as e:
        raise click.BadParameter(f"Expected WEIGHT/ACTIVATION bits like 4/6, got '{value}'") from e
    return QuantParams(weight_bits=weight_bits, activation_bits=activation_bits)


def _spec_option(func: Callable) -> Callable:
    return click.option(
        "--spec",
        "spec_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="Architecture YAML",
    )(func)


@click.group()
def cli() -> None:
    """Blind UNET segmentation between an image owner and a model owner"""


@cli.command("spec")
@click.option("--dims", required=True, help="C,H,W or C,D,H,W of the input")
@click.option("--labels", default=3, show_default=True)
@click.option("--variant", type=click.Choice(VARIANTS), default=Variant.BASELINE.value)
@click.option("--base-channels", default=64, show_default=True)
@click.option("--quant-bits", default=None, help="Weight/activation bits, e.g. 4/6")
@click.option("--bias/--no-bias", default=False)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def spec_cmd(
    dims: str,
    labels: int,
    variant: str,
    base_channels: int,
    quant_bits: Optional[str],
    bias: bool,
    out: Path,
) -> None:
    """Write the segmentation architecture as YAML"""
    spec = build_unet_architecture(
        _parse_dims(dims), labels, Variant(variant), _parse_quant(quant_bits), base_channels, bias
    )
    spec.save(out)
    table = Table(title=f"{spec.name} ({spec.variant.value})")
    table.add_column("Layers")
    table.add_column("Count", justify="right")
    for kind, count in layer_census(spec).items():
        table.add_row(kind, str(count))
    for batch, count in activation_counts(spec).items():
        table.add_row(f"activations b{batch}", f"{count:,}")
    console.print(table)
    console.print(f"Wrote {out}")


@cli.command("synth")
@_spec_option
@click.option("--seed", default=0, show_default=True)
@click.option("--weights-out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--image-out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--calibrate-to",
    default=None,
    type=click.Path(dir_okay=False, path_type=Path),
    help="Write the spec with shifts calibrated on the synthetic input",
)
@_fail_cleanly
def synth_cmd(
    spec_path: Path, seed: int, weights_out: Path, image_out: Path, calibrate_to: Optional[Path]
) -> None:
    """Synthetic weights and input within the quantization budget"""
    spec = NetworkSpec.load(spec_path)
    weights = gen_synthetic_weights(spec, seed)
    image = gen_synthetic_input(spec, seed)
    save_weights(weights_out, weights)
    save_tensor(image_out, image)
    if calibrate_to is not None:
        calibrate_shifts(spec, weights, image).save(calibrate_to)
        console.print(f"Calibrated spec written to {calibrate_to}")
    console.print(f"Wrote {len(weights)} filter banks to {weights_out}, input to {image_out}")


@cli.command("keygen")
@_spec_option
@_ring_options
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def keygen_cmd(
    spec_path: Path, ring_n: int, p_bits: int, q_bits: int, seed: int, out: Path
) -> None:
    """Alice's secret key and the rotation keys the spec's pooling needs"""
    spec = NetworkSpec.load(spec_path)
    params = RingConfig(n=ring_n, p_bits=p_bits, q_bits=q_bits).params()
    steps = rotation_steps_for(spec, params)
    sk, rotation = keygen(params, steps, seed=seed)
    save_keys(out, sk, rotation)
    console.print(f"Params {params.fingerprint()[:16]} n={params.n} p={params.p} q={params.q}")
    console.print(f"Rotation steps: {steps or 'none'}")
    console.print(f"Wrote {out}")


@cli.command("dealer")
@_spec_option
@_ring_options
@click.option("--trunc", type=click.Choice(TRUNCATION), default=TruncationMode.EXACT.value)
@click.option("--dealer-seed", default=1, show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@_fail_cleanly
def dealer_cmd(
    spec_path: Path,
    ring_n: int,
    p_bits: int,
    q_bits: int,
    trunc: str,
    dealer_seed: int,
    out_dir: Path,
) -> None:
    """Correlation-limited dealer tapes for both parties"""
    spec = NetworkSpec.load(spec_path)
    params = RingConfig(n=ring_n, p_bits=p_bits, q_bits=q_bits).params()
    plan = plan_correlations(spec, params, TruncationMode(trunc), get_settings().flood_bits)
    for party in Party:
        DealerTape(dealer_seed, party, params.p, plan).save(out_dir / f"{party.value}.tape")
    table = Table(title=f"Correlations per inference ({trunc} truncation)")
    table.add_column("Kind")
    table.add_column("Elements", justify="right")
    for kind, count in plan.items():
        table.add_row(kind.value, f"{count:,}")
    console.print(table)
    console.print(f"Wrote tapes to {out_dir}")


@cli.command("oracle")
@_spec_option
@click.option(
    "--weights", "weights_path", required=True, type=click.Path(exists=True, path_type=Path)
)
@click.option(
    "--image", "image_path", required=True, type=click.Path(exists=True, path_type=Path)
)
@_ring_options
@click.option("--trunc", type=click.Choice(TRUNCATION), default=TruncationMode.EXACT.value)
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--dump-dir", default=None, type=click.Path(file_okay=False, path_type=Path))
@click.option(
    "--dealer-seed",
    default=None,
    type=int,
    help="With --trunc prob, replay this dealer's carries to reproduce a secure run",
)
@_fail_cleanly
def oracle_cmd(
    spec_path: Path,
    weights_path: Path,
    image_path: Path,
    ring_n: int,
    p_bits: int,
    q_bits: int,
    trunc: str,
    out: Path,
    dump_dir: Optional[Path],
    dealer_seed: Optional[int],
) -> None:
    """Plaintext reference inference"""
    spec = NetworkSpec.load(spec_path)
    params = RingConfig(n=ring_n, p_bits=p_bits, q_bits=q_bits).params()
    mode = TruncationMode(trunc)
    for row in analyze_headroom(spec, params.p, mode):
        if not row.ok:
            logger.warning(f"{row.layer} may overflow: {row.bits} bits of {row.limit}")
    result = oracle_infer(
        spec, load_weights(weights_path), load_tensor(image_path), params.p, mode, dealer_seed
    )
    save_tensor(out, result.labels)
    if dump_dir is not None:
        for name, values in result.intermediates.items():
            save_tensor(dump_dir / f"{name}.bunt", values)
        console.print(f"Dumped {len(result.intermediates)} intermediates to {dump_dir}")
    console.print(f"Wrote label map {tuple(result.labels.shape)} to {out}")


@cli.command("run")
@_spec_option
@click.option("--role", type=click.Choice([r.value for r in Role]), default=Role.BOTH.value)
@click.option("--transport", default="mem", show_default=True, help="mem or tcp:HOST:PORT")
@click.option("--image", "image_path", default=None, type=click.Path(exists=True, path_type=Path))
@click.option(
    "--weights", "weights_path", default=None, type=click.Path(exists=True, path_type=Path)
)
@click.option("--keys", "keys_path", default=None, type=click.Path(exists=True, path_type=Path))
@_ring_options
@click.option("--seed", default=0, show_default=True)
@click.option(
    "--dealer-seed",
    default=1,
    show_default=True,
    help="Shared dealer seed; a local and test convenience, it opens every mask",
)
@click.option("--trunc", type=click.Choice(TRUNCATION), default=None)
@click.option("--out", default=None, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--report", default=None, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def run_cmd(
    spec_path: Path,
    role: str,
    transport: str,
    image_path: Optional[Path],
    weights_path: Optional[Path],
    keys_path: Optional[Path],
    ring_n: int,
    p_bits: int,
    q_bits: int,
    seed: int,
    dealer_seed: int,
    trunc: Optional[str],
    out: Optional[Path],
    report: Optional[Path],
) -> None:
    """Secure inference as Alice, Bob or both"""
    settings = get_settings()
    config = RunConfig(
        spec_path=spec_path,
        role=Role(role),
        transport=transport,
        image_path=image_path,
        weights_path=weights_path,
        keys_path=keys_path,
        ring=RingConfig(n=ring_n, p_bits=p_bits, q_bits=q_bits),
        seed=seed,
        dealer_seed=dealer_seed,
        truncation=TruncationMode(trunc) if trunc else settings.truncation_mode,
        out=out,
        report=report,
    )
    spec = NetworkSpec.load(config.spec_path)
    params = config.ring.params()
    image = load_tensor(config.image_path) if config.image_path else None
    weights = load_weights(config.weights_path) if config.weights_path else None
    keys = load_keys(config.keys_path, params) if config.keys_path else None

    if config.role == Role.BOTH:
        assert image is not None and weights is not None
        both = run_two_party(
            spec,
            image,
            weights,
            params,
            mode=config.truncation,
            seed=config.seed,
            dealer_seed=config.dealer_seed,
            settings=settings,
            transport=config.transport_kind,
            keys=keys,
            address=config.address,
        )
        result = both.alice
    else:
        party = Party(config.role.value)
        assert config.address is not None
        if party is Party.ALICE:
            end = connect(config.address)
        else:
            end = listen(config.address)
        session = open_session(
            party,
            end,
            spec,
            params,
            mode=config.truncation,
            seed=config.seed,
            dealer_seed=config.dealer_seed,
            settings=settings,
            keys=keys,
        )
        result = run_secure_inference(
            session, spec, config.truncation, image=image, weights=weights
        )

    result.report.metadata.update(
        {"seed": config.seed, "dealer_seed": config.dealer_seed, "role": config.role.value}
    )
    if result.labels is not None and config.out is not None:
        save_tensor(config.out, result.labels)
        console.print(f"Wrote label map to {config.out}")
    if config.report is not None:
        config.report.parent.mkdir(parents=True, exist_ok=True)
        config.report.write_text(result.report.model_dump_json(indent=2))
    console.print(render_table(result.report))
    console.print(f"Transcript {result.transcript[:16]} verified")


@cli.command("bench")
@click.option("--dims", required=True, help="C,H,W or C,D,H,W of the input")
@click.option(
    "--variant",
    "variants",
    multiple=True,
    type=click.Choice(VARIANTS),
    help="Repeatable; all variants when omitted",
)
@click.option("--labels", default=3, show_default=True)
@click.option("--base-channels", default=4, show_default=True)
@click.option("--quant-bits", default=None, help="Weight/activation bits, e.g. 4/6")
@click.option("--repetitions", default=1, show_default=True, type=click.IntRange(min=1))
@_ring_options
@click.option("--trunc", type=click.Choice(TRUNCATION), default=TruncationMode.PROBABILISTIC.value)
@click.option("--seed", default=0, show_default=True)
@click.option("--dealer-seed", default=1, show_default=True)
@click.option("--report", default=None, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def bench_cmd(
    dims: str,
    variants: Tuple[str, ...],
    labels: int,
    base_channels: int,
    quant_bits: Optional[str],
    repetitions: int,
    ring_n: int,
    p_bits: int,
    q_bits: int,
    trunc: str,
    seed: int,
    dealer_seed: int,
    report: Optional[Path],
) -> None:
    """Compare the variants on one synthetic input"""
    chosen = [Variant(v) for v in variants] or list(Variant)
    result = run_bench(
        _parse_dims(dims),
        chosen,
        RingConfig(n=ring_n, p_bits=p_bits, q_bits=q_bits).params(),
        repetitions=repetitions,
        mode=TruncationMode(trunc),
        seed=seed,
        dealer_seed=dealer_seed,
        labels=labels,
        base_channels=base_channels,
        quant=_parse_quant(quant_bits),
    )
    if report is not None:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(result.model_dump_json(indent=2))
    console.print(render_bench(result))


def main() -> None:
    cli(prog_name="blindseg")


if __name__ == "__main__":
    main()
