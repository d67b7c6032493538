"""
Number-theoretic transforms over q and p

Cyclic and negacyclic styles share one iterative Cooley-Tukey kernel that
is vectorized per stage. Inputs are bit-reversed, outputs are in natural
order: index j of a cyclic transform is the evaluation at omega^j, index j of
a negacyclic transform is the evaluation at psi^(2j+1).
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from src.ring.modarith import add_mod, as_residues, mul_shoup, shoup_precompute, sub_mod
from src.ring.params import ModulusId, RingParams
from src.utils.errors import ParameterError


class Domain(str, Enum):
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


class ConvStyle(str, Enum):
    CYCLIC = "cyclic"
    NEGACYCLIC = "negacyclic"
    LINEAR = "linear"


@dataclass(frozen=True)
class ModPoly:
    """n residues under q or p, tagged with the domain they are expressed in"""

    coeffs: np.ndarray
    domain: Domain
    modulus_id: ModulusId

    def __post_init__(self) -> None:
        if self.coeffs.dtype != np.uint64 or self.coeffs.ndim != 1:
            raise ParameterError("ModPoly coefficients must be a flat uint64 array")

    @classmethod
    def from_ints(
        cls,
        values: Sequence[int],
        params: RingParams,
        modulus_id: ModulusId,
        domain: Domain = Domain.COEFFICIENT,
    ) -> "ModPoly":
        """Reduce arbitrary (possibly negative) integers into a polynomial"""
        arr = np.asarray(values, dtype=object if _needs_object(values) else np.int64)
        if arr.shape != (params.n,):
            raise ParameterError(f"Expected {params.n} coefficients, got {arr.shape}")
        return cls(as_residues(arr, params.modulus(modulus_id)), domain, modulus_id)

    @classmethod
    def zeros(cls, params: RingParams, modulus_id: ModulusId, domain: Domain) -> "ModPoly":
        return cls(np.zeros(params.n, dtype=np.uint64), domain, modulus_id)

    def __len__(self) -> int:
        return int(self.coeffs.shape[0])


def _needs_object(values: Sequence[int]) -> bool:
    arr = np.asarray(values)
    return arr.dtype == object


class NttTables:
    """Twiddles and Shoup constants for one (n, modulus, psi)"""

    def __init__(self, n: int, modulus: int, psi: int):
        self.n = n
        self.modulus = modulus
        self.psi = psi
        omega = psi * psi % modulus
        omega_inv = pow(omega, -1, modulus)
        psi_inv = pow(psi, -1, modulus)
        n_inv = pow(n, -1, modulus)

        self.bitrev = _bit_reverse_permutation(n)
        self.forward_stages = self._stages(omega)
        self.inverse_stages = self._stages(omega_inv)

        twist = _powers(psi, n, modulus)
        untwist = [x * n_inv % modulus for x in _powers(psi_inv, n, modulus)]
        self.twist = self._with_shoup(twist)
        self.untwist = self._with_shoup(untwist)
        self.n_inv = self._with_shoup([n_inv] * n)

    def _with_shoup(self, values: List[int]) -> Tuple[np.ndarray, np.ndarray]:
        arr = np.array(values, dtype=np.uint64)
        return arr, shoup_precompute(arr, self.modulus)

    def _stages(self, root: int) -> List[Tuple[np.ndarray, np.ndarray]]:
        n = self.n
        pows = _powers(root, n // 2, self.modulus)
        stages = []
        h = 1
        while h < n:
            stages.append(self._with_shoup(pows[:: n // (2 * h)][:h]))
            h *= 2
        return stages


def _powers(base: int, count: int, modulus: int) -> List[int]:
    out = [1] * count
    for i in range(1, count):
        out[i] = out[i - 1] * base % modulus
    return out


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=32)
def get_tables(n: int, modulus: int, psi: int) -> NttTables:
    return NttTables(n, modulus, psi)


def tables_for(params: RingParams, modulus_id: ModulusId) -> NttTables:
    return get_tables(params.n, params.modulus(modulus_id), params.psi(modulus_id))


def _butterflies(x: np.ndarray, stages, modulus: int) -> np.ndarray:
    n = x.shape[0]
    h = 1
    for w, w_shoup in stages:
        blocks = x.reshape(-1, 2, h)
        u = blocks[:, 0, :]
        v = mul_shoup(blocks[:, 1, :], w, w_shoup, modulus)
        x = np.stack([add_mod(u, v, modulus), sub_mod(u, v, modulus)], axis=1).reshape(n)
        h *= 2
    return x


def forward_array(a: np.ndarray, tables: NttTables, style: ConvStyle) -> np.ndarray:
    """Transform a raw uint64 coefficient array"""
    m = tables.modulus
    if style == ConvStyle.NEGACYCLIC:
        a = mul_shoup(a, tables.twist[0], tables.twist[1], m)
    return _butterflies(a[tables.bitrev], tables.forward_stages, m)


def inverse_array(a: np.ndarray, tables: NttTables, style: ConvStyle) -> np.ndarray:
    """Inverse of forward_array including the n^-1 scaling"""
    m = tables.modulus
    x = _butterflies(a[tables.bitrev], tables.inverse_stages, m)
    scale = tables.untwist if style == ConvStyle.NEGACYCLIC else tables.n_inv
    return mul_shoup(x, scale[0], scale[1], m)


def _check_style(style: ConvStyle) -> None:
    if style == ConvStyle.LINEAR:
        raise ParameterError("Linear convolution has no transform of its own; pad and use cyclic")


def ntt_forward(
    poly: ModPoly, params: RingParams, style: ConvStyle = ConvStyle.NEGACYCLIC
) -> ModPoly:
    """
    Coefficient form to evaluation form

    Args:
        poly: Polynomial in coefficient form
        params: Ring parameters holding the roots of unity
        style: cyclic (roots omega^j) or negacyclic (roots psi^(2j+1))

    Returns:
        Polynomial in evaluation form
    """
    _check_style(style)
    if poly.domain != Domain.COEFFICIENT:
        raise ParameterError("ntt_forward expects coefficient form")
    if len(poly) != params.n:
        raise ParameterError(f"Polynomial length {len(poly)} does not match n = {params.n}")
    out = forward_array(poly.coeffs, tables_for(params, poly.modulus_id), style)
    return ModPoly(out, Domain.EVALUATION, poly.modulus_id)


def ntt_inverse(
    poly: ModPoly, params: RingParams, style: ConvStyle = ConvStyle.NEGACYCLIC
) -> ModPoly:
    """Evaluation form back to coefficient form"""
    _check_style(style)
    if poly.domain != Domain.EVALUATION:
        raise ParameterError("ntt_inverse expects evaluation form")
    if len(poly) != params.n:
        raise ParameterError(f"Polynomial length {len(poly)} does not match n = {params.n}")
    out = inverse_array(poly.coeffs, tables_for(params, poly.modulus_id), style)
    return ModPoly(out, Domain.COEFFICIENT, poly.modulus_id)


def pointwise_mul(a: ModPoly, b: ModPoly, params: RingParams) -> ModPoly:
    """Slot-wise product of two evaluation-form polynomials"""
    if a.domain != Domain.EVALUATION or b.domain != Domain.EVALUATION:
        raise ParameterError("pointwise_mul expects evaluation form")
    if a.modulus_id != b.modulus_id:
        raise ParameterError("Operands live under different moduli")
    modulus = params.modulus(a.modulus_id)
    out = mul_shoup(a.coeffs, b.coeffs, shoup_precompute(b.coeffs, modulus), modulus)
    return ModPoly(out, Domain.EVALUATION, a.modulus_id)


def poly_multiply(
    a: ModPoly, b: ModPoly, params: RingParams, style: ConvStyle = ConvStyle.NEGACYCLIC
) -> ModPoly:
    """Ring product of two coefficient-form polynomials via the transform"""
    prod = pointwise_mul(ntt_forward(a, params, style), ntt_forward(b, params, style), params)
    return ntt_inverse(prod, params, style)


def poly_conv_reference(
    x: Sequence[int], w: Sequence[int], modulus: int, style: ConvStyle = ConvStyle.LINEAR
) -> np.ndarray:
    """
    Schoolbook convolution mod modulus

    Linear output has len(x) + len(w) - 1 entries. Cyclic and negacyclic
    outputs fold the linear result onto max(len(x), len(w)) entries.
    """
    xa = np.asarray(x, dtype=object) % modulus
    wa = np.asarray(w, dtype=object) % modulus
    if len(xa) == 0 or len(wa) == 0:
        return np.zeros(0, dtype=object)
    linear = np.zeros(len(xa) + len(wa) - 1, dtype=object)
    for i, wi in enumerate(wa):
        if wi:
            linear[i : i + len(xa)] += wi * xa
    if style == ConvStyle.LINEAR:
        return linear % modulus

    size = max(len(xa), len(wa))
    folded = np.zeros(size, dtype=object)
    sign = -1 if style == ConvStyle.NEGACYCLIC else 1
    folded[: min(size, len(linear))] += linear[:size]
    if len(linear) > size:
        folded[: len(linear) - size] += sign * linear[size:]
    return folded % modulus
