"""
Prime and root-of-unity search for NTT-friendly moduli
"""

from functools import lru_cache
from typing import Optional

from sympy import isprime

from src.utils.errors import ParameterError


def is_prime(n: int) -> bool:
    return bool(isprime(int(n)))


@lru_cache(maxsize=64)
def find_ntt_prime(bits: int, step: int) -> int:
    """
    Largest prime below 2^bits congruent to 1 modulo step

    Args:
        bits: Upper bit bound (the prime has exactly this many bits when one exists)
        step: Required congruence modulus (2n, or 2n*p for the ciphertext modulus)

    Returns:
        The prime
    """
    k = ((1 << bits) - 2) // step
    lower = 1 << (bits - 1)
    while k > 0:
        candidate = k * step + 1
        if candidate < lower:
            break
        if is_prime(candidate):
            return candidate
        k -= 1
    raise ParameterError(f"No {bits}-bit prime congruent to 1 mod {step}")


@lru_cache(maxsize=64)
def find_psi(modulus: int, n: int) -> int:
    """
    Primitive 2n-th root of unity, found by scanning generators 2, 3, ...

    The scan order is fixed so both parties derive the same root.
    """
    order = 2 * n
    if (modulus - 1) % order != 0:
        raise ParameterError(f"Modulus {modulus} has no primitive {order}-th root of unity")
    exponent = (modulus - 1) // order
    for x in range(2, modulus):
        psi = pow(x, exponent, modulus)
        if pow(psi, n, modulus) == modulus - 1:
            return psi
    raise ParameterError(f"No primitive {order}-th root of unity modulo {modulus}")


def has_root_of_order(modulus: int, order: int, psi: Optional[int] = None) -> bool:
    """True when psi (or some element) has the given power-of-two order"""
    if (modulus - 1) % order != 0:
        return False
    if psi is None:
        return True
    return pow(psi, order, modulus) == 1 and pow(psi, order // 2, modulus) == modulus - 1
