"""
Validated run configuration for the command line
"""

from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from src.ring.params import RingParams
from src.utils.settings import TruncationMode


class Role(str, Enum):
    ALICE = "alice"
    BOB = "bob"
    BOTH = "both"


class RingConfig(BaseModel):
    """Ring dimension and modulus widths; the primes are searched deterministically"""

    n: int = Field(default=2048, ge=8)
    p_bits: int = Field(default=20, ge=4, le=30)
    q_bits: int = Field(default=60, ge=20, le=62)

    def params(self) -> RingParams:
        return RingParams.generate(self.n, self.p_bits, self.q_bits)


def parse_transport(value: str) -> Tuple[str, Optional[str]]:
    """'mem' or 'tcp:HOST:PORT' -> (kind, address)"""
    if value == "mem":
        return "mem", None
    if value.startswith("tcp:") and value.count(":") == 2:
        return "socket", value[len("tcp:") :]
    raise ValueError(f"Transport must be 'mem' or 'tcp:HOST:PORT', got '{value}'")


class RunConfig(BaseModel):
    """
    Everything one `run` invocation needs

    Alice needs the image, Bob the weights; 'both' needs both. Single-role
    runs need a TCP transport since the peer lives in another process.
    """

    spec_path: Path
    role: Role = Role.BOTH
    transport: str = "mem"
    image_path: Optional[Path] = None
    weights_path: Optional[Path] = None
    keys_path: Optional[Path] = None
    ring: RingConfig = Field(default_factory=RingConfig)
    seed: int = 0
    dealer_seed: int = 1
    truncation: TruncationMode = TruncationMode.EXACT
    out: Optional[Path] = None
    report: Optional[Path] = None

    @model_validator(mode="after")
    def check_role_inputs(self) -> "RunConfig":
        kind, _ = parse_transport(self.transport)
        if self.role in (Role.ALICE, Role.BOTH) and self.image_path is None:
            raise ValueError(f"Role {self.role.value} needs --image")
        if self.role in (Role.BOB, Role.BOTH) and self.weights_path is None:
            raise ValueError(f"Role {self.role.value} needs --weights")
        if self.role != Role.BOTH and kind != "socket":
            raise ValueError("A single-role run needs --transport tcp:HOST:PORT")
        return self

    @property
    def transport_kind(self) -> str:
        return parse_transport(self.transport)[0]

    @property
    def address(self) -> Optional[str]:
        return parse_transport(self.transport)[1]
