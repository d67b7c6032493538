"""
In-process two-party runs: both roles on threads over a linked transport pair
"""

import threading
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.mpc.dealer import DealerTape
from src.mpc.sharing import Party
from src.pahe.keys import RotationKeySet, SecretKey, keygen
from src.protocols.conv import ConvWeights
from src.ring.params import RingParams
from src.runtime.executor import InferenceResult, run_secure_inference, session_fingerprint
from src.runtime.schedule import build_schedule, rotation_steps_for, schedule_correlations
from src.runtime.session import Session
from src.runtime.transport import FrameTamper, Transport, transport_pair
from src.unet.spec import NetworkSpec
from src.utils.errors import ProtocolError
from src.utils.logger import get_logger
from src.utils.settings import Settings, TruncationMode, get_settings

logger = get_logger(__name__)


@dataclass
class TwoPartyResult:
    alice: InferenceResult
    bob: InferenceResult

    @property
    def labels(self) -> np.ndarray:
        assert self.alice.labels is not None
        return self.alice.labels


def open_session(
    party: Party,
    end: Transport,
    spec: NetworkSpec,
    params: RingParams,
    mode: Optional[TruncationMode] = None,
    seed: int = 0,
    dealer_seed: int = 1,
    settings: Optional[Settings] = None,
    keys: Optional[Tuple[SecretKey, RotationKeySet]] = None,
    record_trace: bool = False,
) -> Session:
    """
    One party's session over a connected transport end

    Alice's key material derives from `seed` unless `keys` is given; the
    parties' private randomness from seed + 1 and seed + 2.
    """
    settings = settings or get_settings()
    mode = mode or settings.truncation_mode
    steps = build_schedule(spec, params, settings.flood_bits)
    limits = schedule_correlations(steps, params.p, mode)
    sk: Optional[SecretKey] = None
    rotation: Optional[RotationKeySet] = None
    if party is Party.ALICE:
        sk, rotation = keys or keygen(params, rotation_steps_for(spec, params), seed=seed)
    return Session(
        party,
        end,
        params,
        DealerTape(dealer_seed, party, params.p, limits),
        session_fingerprint(spec, mode, settings),
        seed=seed + (1 if party is Party.ALICE else 2),
        secret_key=sk,
        rotation_keys=rotation,
        settings=settings,
        record_trace=record_trace,
    )


def prepare_sessions(
    spec: NetworkSpec,
    params: RingParams,
    mode: Optional[TruncationMode] = None,
    seed: int = 0,
    dealer_seed: int = 1,
    settings: Optional[Settings] = None,
    transport: str = "mem",
    tamper: Optional[FrameTamper] = None,
    record_trace: bool = False,
    keys: Optional[Tuple[SecretKey, RotationKeySet]] = None,
    address: Optional[str] = None,
) -> Tuple[Session, Session]:
    """Linked Alice and Bob sessions with keys and correlation-limited dealer tapes"""
    settings = settings or get_settings()
    a_end, b_end = transport_pair(
        transport,
        address=address,
        tamper=tamper,
        max_frame_bytes=settings.max_frame_bytes,
        timeout=settings.transport_timeout,
    )
    alice = open_session(
        Party.ALICE, a_end, spec, params, mode, seed, dealer_seed, settings, keys, record_trace
    )
    bob = open_session(
        Party.BOB, b_end, spec, params, mode, seed, dealer_seed, settings, None, record_trace
    )
    return alice, bob


def run_sessions(
    alice: Session,
    bob: Session,
    spec: NetworkSpec,
    image: np.ndarray,
    weights: Mapping[str, ConvWeights],
    mode: Optional[TruncationMode] = None,
) -> TwoPartyResult:
    """
    Drive both sessions to completion

    Raises:
        BlindSegError: whatever a party raised, Alice's error first
    """
    results: Dict[Party, InferenceResult] = {}
    errors: Dict[Party, BaseException] = {}

    def party(session: Session, **kwargs) -> None:
        try:
            results[session.party] = run_secure_inference(session, mode=mode, **kwargs)
        except BaseException as e:
            errors[session.party] = e

    threads = [
        threading.Thread(
            target=party, args=(alice,), kwargs={"spec": spec, "image": image}, name="alice"
        ),
        threading.Thread(
            target=party,
            args=(bob,),
            kwargs={"spec": spec, "weights": weights},
            name="bob",
        ),
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    if errors:
        raise errors.get(Party.ALICE) or errors[Party.BOB]
    if len(results) != 2:
        raise ProtocolError("A party finished without a result")
    return TwoPartyResult(results[Party.ALICE], results[Party.BOB])


def run_two_party(
    spec: NetworkSpec,
    image: np.ndarray,
    weights: Mapping[str, ConvWeights],
    params: RingParams,
    mode: Optional[TruncationMode] = None,
    seed: int = 0,
    dealer_seed: int = 1,
    settings: Optional[Settings] = None,
    transport: str = "mem",
    tamper: Optional[FrameTamper] = None,
    record_trace: bool = False,
    keys: Optional[Tuple[SecretKey, RotationKeySet]] = None,
    address: Optional[str] = None,
) -> TwoPartyResult:
    """Both roles in one process; Alice holds the image, Bob the weights"""
    alice, bob = prepare_sessions(
        spec,
        params,
        mode=mode,
        seed=seed,
        dealer_seed=dealer_seed,
        settings=settings,
        transport=transport,
        tamper=tamper,
        record_trace=record_trace,
        keys=keys,
        address=address,
    )
    result = run_sessions(alice, bob, spec, image, weights, mode=mode)
    logger.info(
        f"Two-party run of {spec.name}: Alice {result.alice.report.total_seconds:.2f}s, "
        f"Bob {result.bob.report.total_seconds:.2f}s"
    )
    return result
