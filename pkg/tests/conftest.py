"""
Test configuration for pytest
"""

import sys
import threading
from pathlib import Path
from typing import Callable, Tuple

import numpy as np
import pytest

# Repo root on the path so `src.` imports resolve without installing
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.ring.params import RingParams  # noqa: E402
from src.unet.quant import (  # noqa: E402
    calibrate_shifts,
    gen_synthetic_input,
    gen_synthetic_weights,
)
from src.unet.spec import Variant, build_unet_architecture  # noqa: E402
from src.utils.settings import Settings  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator so failures reproduce"""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_params():
    """n = 16 ring with p = 97, enough for algebra checks"""
    return RingParams.generate(n=16, p=97, q_bits=50)


@pytest.fixture(scope="session")
def params():
    """Production parameters: n = 2048, 60-bit q, 20-bit p"""
    return RingParams.default()


@pytest.fixture
def settings():
    """Settings isolated from the environment's .env file"""
    return Settings(_env_file=None, transport_timeout=60.0)


def tiny_unet(
    variant: Variant = Variant.RELU_AVG, seed: int = 0, dims=(1, 8, 8), base_channels: int = 2
):
    """Three-label UNET calibrated on its own synthetic input"""
    spec = build_unet_architecture(dims, labels=3, variant=variant, base_channels=base_channels)
    weights = gen_synthetic_weights(spec, seed)
    image = gen_synthetic_input(spec, seed + 100)
    spec = calibrate_shifts(spec, weights, image)
    return spec, weights, image


@pytest.fixture(scope="session")
def tiny_relu_unet():
    return tiny_unet(Variant.RELU_AVG)


@pytest.fixture(scope="session")
def tiny_hybrid_unet():
    return tiny_unet(Variant.HYBRID)


def run_pair(alice_fn: Callable, bob_fn: Callable, timeout: float = 120.0) -> Tuple:
    """
    Run the two roles of a protocol step on threads

    Returns (alice result, bob result); the first raised error is re-raised.
    """
    results: dict = {}
    errors: dict = {}

    def wrap(key: str, fn: Callable) -> None:
        try:
            results[key] = fn()
        except BaseException as e:
            errors[key] = e

    threads = [
        threading.Thread(target=wrap, args=("alice", alice_fn), daemon=True),
        threading.Thread(target=wrap, args=("bob", bob_fn), daemon=True),
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout)
    if errors:
        raise errors.get("alice") or errors["bob"]
    return results["alice"], results["bob"]


def make_sessions(
    params, modulus=None, dealer_seed=5, settings=None, rotation_steps=(), tamper=None
):
    """
    Linked Alice/Bob sessions over in-process queues, handshake not yet run

    Dealer tapes use `modulus` (default p) and carry no limits. Bob starts
    with the evaluation keys instead of receiving them.
    """
    from src.mpc.dealer import DealerTape
    from src.mpc.sharing import Party
    from src.pahe.keys import keygen
    from src.runtime.session import Session
    from src.runtime.transport import transport_pair

    settings = settings or Settings(_env_file=None, transport_timeout=60.0)
    modulus = modulus or params.p
    a_end, b_end = transport_pair("mem", tamper=tamper, timeout=settings.transport_timeout)
    sk, rot_keys = keygen(params, rotation_steps, seed=0)
    alice = Session(
        Party.ALICE,
        a_end,
        params,
        DealerTape(dealer_seed, Party.ALICE, modulus),
        "test-spec",
        seed=11,
        secret_key=sk,
        rotation_keys=rot_keys,
        settings=settings,
    )
    bob = Session(
        Party.BOB,
        b_end,
        params,
        DealerTape(dealer_seed, Party.BOB, modulus),
        "test-spec",
        seed=12,
        rotation_keys=rot_keys,
        settings=settings,
    )
    bob.public_key = sk.public
    return alice, bob
