"""Privacy amplification: entropy bounds from the measured CHSH value
and Toeplitz universal hashing.

The eavesdropper's information per bit is bounded from the Bell
statistic alone:

    I_E(S) = h((1 + sqrt(S^2/4 - 1)) / 2)

which is 0 at |S| = 2*sqrt(2) and 1 at |S| = 2.  The final key length is
n*(1 - I_E) minus the reconciliation leakage and a configurable
finite-size deduction; compression to that length uses a seeded Toeplitz
matrix over GF(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

S_MAX = 2.0 * math.sqrt(2.0)


class InsecureRegimeError(Exception):
    """|S| below the classical bound: no secrecy can be extracted."""


def binary_entropy(x):
    """Shannon entropy h(x) = -x log2 x - (1-x) log2 (1-x); h(0)=h(1)=0."""
    arr = np.asarray(x, dtype=float)
    if arr.size and ((arr < 0.0) | (arr > 1.0)).any():
        raise ValueError("binary_entropy domain is [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(arr > 0, arr * np.log2(np.where(arr > 0, arr, 1)), 0.0)
        q = 1.0 - arr
        h -= np.where(q > 0, q * np.log2(np.where(q > 0, q, 1)), 0.0)
    return float(h) if np.ndim(x) == 0 else h


def eve_information(s_value: float) -> float:
    """Per-bit information bound for an eavesdropper, from the CHSH S.

    Uses |S|, clamped to the quantum maximum 2*sqrt(2) against numeric
    overshoot.  Raises InsecureRegimeError for |S| < 2; returns exactly
    1.0 at |S| = 2 and exactly 0.0 at |S| = 2*sqrt(2).
    """
    s_abs = abs(float(s_value))
    if s_abs < 2.0:
        raise InsecureRegimeError(f"|S| = {s_abs:.4f} <= 2: no Bell violation")
    s_abs = min(s_abs, S_MAX)
    arg = s_abs * s_abs / 4.0 - 1.0
    x = (1.0 + math.sqrt(max(arg, 0.0))) / 2.0
    return binary_entropy(min(x, 1.0))


@dataclass(frozen=True)
class SecurityEstimate:
    """Key-length budget for one reconciled block."""

    n: int
    s_value: float
    i_eve: float
    leak_ec: int
    finite_deduction: int
    rate_multiplier: float
    final_length: int

    @property
    def secret_fraction_value(self) -> float:
        return self.final_length / self.n if self.n else 0.0


def secret_fraction(
    n: int,
    leak_ec: int,
    s_value: float,
    finite_deduction: int = 0,
    rate_multiplier: float = 1.0,
) -> SecurityEstimate:
    """Distillable key length after reconciliation leakage.

    final_length = max(0, floor((n*(1 - I_E) - leak_ec) * rate_multiplier
                                - finite_deduction))

    ``rate_multiplier`` models finite-key penalties as a simple scaling
    (1.0 = asymptotic); ``finite_deduction`` is an absolute deduction.
    """
    if n < 0 or leak_ec < 0 or finite_deduction < 0:
        raise ValueError("n, leak_ec and finite_deduction must be >= 0")
    if not 0.0 < rate_multiplier <= 1.0:
        raise ValueError("rate_multiplier must be in (0, 1]")
    i_eve = eve_information(s_value)
    raw = (n * (1.0 - i_eve) - leak_ec) * rate_multiplier - finite_deduction
    final = max(0, math.floor(raw))
    return SecurityEstimate(
        n=n,
        s_value=float(s_value),
        i_eve=i_eve,
        leak_ec=leak_ec,
        finite_deduction=finite_deduction,
        rate_multiplier=rate_multiplier,
        final_length=final,
    )


def toeplitz_seed_length(n: int, m: int) -> int:
    return n + m - 1


def generate_toeplitz_seed(n: int, m: int, seed) -> np.ndarray:
    """Seed bits (length n + m - 1) for an m x n Toeplitz matrix."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=toeplitz_seed_length(n, m), dtype=np.uint8)


def toeplitz_hash(bits: np.ndarray, seed_bits: np.ndarray, m: int) -> np.ndarray:
    """Compress ``bits`` to ``m`` bits with a Toeplitz matrix over GF(2).

    ``seed_bits`` (length len(bits) + m - 1) holds the matrix diagonals:
    entry T[i, j] = seed_bits[j - i + m - 1], i.e. the first m - 1 seed
    bits are the first column bottom-to-top and the rest are the first
    row.  The map is linear: T(x xor y) = T(x) xor T(y).
    """
    x = np.asarray(bits, dtype=np.uint8)
    s = np.asarray(seed_bits, dtype=np.uint8)
    n = len(x)
    if m < 0 or m > n:
        raise ValueError("output length m must satisfy 0 <= m <= n")
    if len(s) != toeplitz_seed_length(n, m):
        raise ValueError(f"seed must have length n + m - 1 = {toeplitz_seed_length(n, m)}")
    if m == 0:
        return np.empty(0, dtype=np.uint8)
    # Row i of the matrix is s[m-1-i : m-1-i+n]; exact integer dot via
    # float64 is safe for n < 2**53.
    windows = np.lib.stride_tricks.sliding_window_view(s, n)  # shape (m, n)
    xf = x.astype(np.float64)
    out = np.empty(m, dtype=np.uint8)
    chunk = max(1, min(1024, (1 << 24) // max(n, 1)))
    for i in range(0, m, chunk):
        rows = windows[i : i + chunk].astype(np.float64)
        out[i : i + chunk] = (rows @ xf).astype(np.int64) & 1
    # windows[t] corresponds to row m-1-t, so flip into row order.
    return out[::-1].copy()


def pack_key_bits(bits: np.ndarray) -> bytes:
    """MSB-first byte packing; trailing bits of the last byte are zero."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()
