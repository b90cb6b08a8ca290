"""Photon-noise model of a binary SPAD pixel and closed-form decoding errors.

Flux values are photo-electron rates (100% quantum efficiency, fill factor
ignored). A pixel reads 1 when at least one photo-electron or dark count
arrives during the exposure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class FluxCondition:
    """Operating point of the camera/projector pair.

    Attributes:
        phi_a: ambient photo-electron rate (1/s).
        phi_p: projector photo-electron rate at full brightness (1/s).
        t_exp: exposure time of one binary frame (s).
        r_q: dark-count rate (1/s).
    """

    phi_a: float
    phi_p: float
    t_exp: float = 1e-4
    r_q: float = 0.0

    def __post_init__(self):
        for name in ("phi_a", "phi_p", "t_exp", "r_q"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.phi_a < 0 or self.phi_p < 0 or self.r_q < 0:
            raise ValueError(f"flux and dark-count rates must be >= 0: {self}")
        if self.t_exp <= 0:
            raise ValueError(f"t_exp must be > 0, got {self.t_exp}")


@dataclass(frozen=True)
class FlipProbs:
    """Bit-flip probabilities of the asymmetric binary channel.

    ``p_bright`` is the chance that a lit pixel reads 0, ``p_dark`` the chance
    that an unlit pixel reads 1.
    """

    p_bright: float
    p_dark: float

    def __post_init__(self):
        for name in ("p_bright", "p_dark"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


# Measured operating points of the lab prototype at t_exp = 1e-4 s.
DARK_ROOM = FlipProbs(p_bright=0.22, p_dark=0.021)
INDOOR_LAMP = FlipProbs(p_bright=0.19, p_dark=0.23)
SPOT_LAMP = FlipProbs(p_bright=0.06, p_dark=0.75)
NOISELESS = FlipProbs(p_bright=0.0, p_dark=0.0)

NAMED_CONDITIONS = {
    "dark-room": DARK_ROOM,
    "indoor-lamp": INDOOR_LAMP,
    "spot-lamp": SPOT_LAMP,
    "noiseless": NOISELESS,
}


def flip_probabilities(cond: FluxCondition) -> FlipProbs:
    """Flip probabilities implied by a flux condition."""
    if not isinstance(cond, FluxCondition):
        raise TypeError("cond must be a FluxCondition")
    p_bright = math.exp(-(cond.phi_a + cond.phi_p + cond.r_q) * cond.t_exp)
    p_dark = -math.expm1(-(cond.phi_a + cond.r_q) * cond.t_exp)
    return FlipProbs(p_bright=p_bright, p_dark=p_dark)


def ambient_flux_for_dark_flip(p_dark: float, t_exp: float = 1e-4, r_q: float = 0.0) -> float:
    """Ambient rate that produces the requested dark-pixel flip probability."""
    if not (0.0 <= p_dark < 1.0):
        raise ValueError("p_dark must lie in [0, 1)")
    return max(-math.log1p(-p_dark) / t_exp - r_q, 0.0)


def condition_for(probs: FlipProbs, t_exp: float = 1e-4, r_q: float = 0.0) -> FluxCondition:
    """Invert :func:`flip_probabilities` to a flux condition.

    Only pairs with ``p_bright <= 1 - p_dark`` are reachable (the projector can
    only add photons), otherwise ``ValueError`` is raised. A zero ``p_bright``
    maps to a projector flux large enough to underflow the exponential.
    """
    phi_a = ambient_flux_for_dark_flip(probs.p_dark, t_exp, r_q)
    if probs.p_bright > 1.0 - probs.p_dark + 1e-12:
        raise ValueError(f"unreachable flip probabilities {probs}")
    if probs.p_bright == 0.0:
        phi_p = 1e4 / t_exp
    else:
        phi_p = max(-math.log(probs.p_bright) / t_exp - phi_a - r_q, 0.0)
    return FluxCondition(phi_a=phi_a, phi_p=phi_p, t_exp=t_exp, r_q=r_q)


def _check_length(L: int, name: str = "L") -> None:
    if int(L) != L or L < 1:
        raise ValueError(f"{name} must be a positive integer, got {L}")


def _combine(per_bit_bright: float, per_bit_dark: float, L: int) -> float:
    # Messages uniform over {0,1}^L: each bit is a one or a zero with prob 1/2.
    return 1.0 - (1.0 - (per_bit_bright + per_bit_dark) / 2.0) ** L


def gray_error(probs: FlipProbs, L: int) -> float:
    """Probability that an unprotected L-bit code is decoded wrongly."""
    _check_length(L)
    return _combine(probs.p_bright, probs.p_dark, L)


def binomial_pmf(n: int, p: float) -> np.ndarray:
    """Exact Binomial(n, p) probabilities for 0..n as float64."""
    if n == 0:
        return np.ones(1)
    q = 1.0 - p
    return np.array([math.comb(n, j) * p**j * q ** (n - j) for j in range(n + 1)])


def majority_flip_prob(p: float, r: int) -> float:
    """Post-vote flip probability of one bit repeated r times.

    The vote fails once ceil(r/2) copies are flipped, so a tie at even r is
    counted as an error.
    """
    _check_length(r, "r")
    start = (r + 1) // 2
    q = 1.0 - p
    return math.fsum(math.comb(r, j) * p**j * q ** (r - j) for j in range(start, r + 1))


def repetition_error(probs: FlipProbs, L: int, r: int) -> float:
    """Decoding error of an L-bit code repeated r times with majority voting."""
    _check_length(L)
    _check_length(r, "r")
    return _combine(majority_flip_prob(probs.p_bright, r), majority_flip_prob(probs.p_dark, r), L)


def flip_count_tail(ones: int, zeros: int, probs: FlipProbs, t: int) -> float:
    """P[flips on ones + flips on zeros > t] for one codeword."""
    dist = np.convolve(binomial_pmf(ones, probs.p_bright), binomial_pmf(zeros, probs.p_dark))
    if t + 1 >= dist.size:
        return 0.0
    return min(math.fsum(dist[t + 1:]), 1.0)


def bch_bounded_error(probs: FlipProbs, code, codeword_weights: Iterable[Sequence[int]]) -> float:
    """Error of a decoder that only corrects up to floor((d-1)/2) flips.

    ``code`` is anything with a ``t`` attribute (a ``BchCode``) or a plain
    integer correction radius. ``codeword_weights`` holds ``(ones, zeros)``
    per transmitted codeword; the result is their uniform average.
    """
    t = code if isinstance(code, (int, np.integer)) else code.t
    weights = [tuple(map(int, w)) for w in codeword_weights]
    if not weights:
        raise ValueError("codeword_weights must not be empty")
    # Many codewords share a weight profile.
    cache: dict[tuple[int, int], float] = {}
    total = []
    for w in weights:
        if w not in cache:
            cache[w] = flip_count_tail(w[0], w[1], probs, t)
        total.append(cache[w])
    return math.fsum(total) / len(total)


def prob_x_geq_y(n: int, p_x: float, p_y: float) -> float:
    """P[X >= Y] for independent X ~ Bin(n, p_x), Y ~ Bin(n, p_y)."""
    px = binomial_pmf(n, p_x)
    cdf_y = np.cumsum(binomial_pmf(n, p_y))
    return min(math.fsum(px * cdf_y), 1.0)


def binary_shift_error_bound(probs: FlipProbs, l_shift: int) -> float:
    """Union-bound estimate of the mean |error| (pixels) of shift decoding.

    Displacing the matched-filter window by r frames trades r ON frames for r
    OFF frames; the bound sums ``2 r P[X_r >= Y_r]`` over all displacements of
    the ``2**(l_shift+1)``-frame sequence.
    """
    _check_length(l_shift, "l_shift")
    period = 2 ** (l_shift + 1)
    return math.fsum(
        2 * r * prob_x_geq_y(r, probs.p_dark, 1.0 - probs.p_bright) for r in range(1, period)
    )
