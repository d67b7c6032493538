"""
Secret sharing, homomorphic secret sharing, Beaver products and the dealer
"""

from src.mpc.beaver import beaver_hadamard, square_activation
from src.mpc.dealer import BeaverTriple, CorrelationKind, DealerTape, TruncPair, dealer_generate
from src.mpc.hss import hss_rec, hss_share, mask_ciphertext
from src.mpc.sharing import Party, ShareVector, rec, rec_signed, share, split

__all__ = [
    "BeaverTriple",
    "CorrelationKind",
    "DealerTape",
    "Party",
    "ShareVector",
    "TruncPair",
    "beaver_hadamard",
    "dealer_generate",
    "hss_rec",
    "hss_share",
    "mask_ciphertext",
    "rec",
    "rec_signed",
    "share",
    "split",
    "square_activation",
]
