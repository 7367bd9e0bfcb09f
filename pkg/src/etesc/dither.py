"""Sinusoidal perturbation / demodulation signals and the probing-frequency checks."""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

MAX_DENOMINATOR = 10**6
# exact LCM arithmetic is unbounded in python; cap it so periods stay float-representable
MAX_LCM = 2**53


def rationalize(x, max_den=MAX_DENOMINATOR, rtol=1e-9):
    """Fraction close to float x with denominator <= max_den, or ConfigError."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    f = Fraction(x).limit_denominator(max_den)
    if abs(float(f) - x) > rtol * abs(x):
        raise ConfigError(f"frequency {x!r} is not representable with denominator <= {max_den}")
    return f


class DitherSpec:
    """Amplitudes a_i, exact frequency ratios w'_i and base frequency w (rad/s).

    Channel i runs at w_i = w'_i * w. A DitherSpec does not run the
    frequency test itself; callers (scenario loading) decide when.
    """

    def __init__(self, amplitudes, freq_ratios, base_freq, max_den=MAX_DENOMINATOR):
        a = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        ratios = [rationalize(r, max_den) for r in freq_ratios]
        if len(ratios) != a.shape[0]:
            raise ConfigError("amplitudes and frequency ratios differ in length")
        if np.any(a == 0.0):
            raise ConfigError("dither amplitudes must be nonzero")
        if any(r <= 0 for r in ratios):
            raise ConfigError("frequency ratios must be positive")
        if not base_freq > 0:
            raise ConfigError("base frequency must be positive")
        a.setflags(write=False)
        self.amplitudes = a
        self.freq_ratios = tuple(ratios)
        self.base_freq = float(base_freq)
        w = np.array([float(r) for r in ratios]) * self.base_freq
        w.setflags(write=False)
        self.omegas = w

    @classmethod
    def from_frequencies(cls, amplitudes, omegas, base_freq=1.0, max_den=MAX_DENOMINATOR):
        """Build from float frequencies in rad/s, rationalized relative to base_freq."""
        ratios = [rationalize(w / base_freq, max_den) for w in omegas]
        return cls(amplitudes, ratios, base_freq, max_den)

    @property
    def n(self):
        return self.amplitudes.shape[0]

    def scaled(self, factor):
        """Same ratios and amplitudes, base frequency multiplied by factor."""
        return DitherSpec(self.amplitudes, self.freq_ratios, self.base_freq * factor)

    def __repr__(self):
        r = ", ".join(str(x) for x in self.freq_ratios)
        return f"DitherSpec(a={self.amplitudes.tolist()}, ratios=[{r}], base={self.base_freq})"


def s_vector(spec: DitherSpec, t) -> np.ndarray:
    return spec.amplitudes * np.sin(spec.omegas * t)


def m_vector(spec: DitherSpec, t) -> np.ndarray:
    return (2.0 / spec.amplitudes) * np.sin(spec.omegas * t)


def delta_matrix(spec: DitherSpec, t) -> np.ndarray:
    """Oscillating part of M(t) S(t)^T H*: diag -cos(2 w_i t), off-diag 2 a_j/a_i sin sin."""
    s = np.sin(spec.omegas * t)
    a = spec.amplitudes
    D = 2.0 * np.outer(s / a, s * a)
    np.fill_diagonal(D, -np.cos(2.0 * spec.omegas * t))
    return D


@dataclass(frozen=True)
class FrequencyViolation:
    clause: str
    indices: tuple

    def __str__(self):
        return f"frequency clause '{self.clause}' violated at indices {self.indices}"


def validate_frequencies(spec: DitherSpec):
    """Exhaustive exact check of the probing-frequency exclusion set.

    Returns None when the set is admissible, else the first FrequencyViolation.
    Tuples with i == j are skipped: there the first clause is the identity.
    """
    w = spec.freq_ratios
    n = len(w)
    idx = range(n)
    skipped = 0
    for i, j in product(idx, idx):
        if i == j:
            skipped += 1
            continue
        if w[i] == w[j]:
            return FrequencyViolation("w_i = w_j", (i, j))
        for k in idx:
            if w[i] == (w[j] + w[k]) / 2:
                return FrequencyViolation("w_i = (w_j + w_k)/2", (i, j, k))
            if w[i] == w[j] + 2 * w[k]:
                return FrequencyViolation("w_i = w_j + 2 w_k", (i, j, k))
    # the +/- clause does not involve j
    for i, k, l in product(idx, idx, idx):
        if w[i] == w[k] + w[l]:
            return FrequencyViolation("w_i = w_k + w_l", (i, k, l))
    for i, k, l in product(idx, idx, idx):
        if w[i] == w[k] - w[l]:
            return FrequencyViolation("w_i = w_k - w_l", (i, k, l))
    log.debug("frequency check skipped %d tuples with i == j", skipped)
    return None


def common_period(spec: DitherSpec):
    """(T, 2 pi / T) with T = 2 pi LCM{1/w_i}, computed exactly over the ratios."""
    # 1/w'_i = q_i/p_i; LCM of fractions = LCM(numerators)/GCD(denominators)
    nums = [r.denominator for r in spec.freq_ratios]
    dens = [r.numerator for r in spec.freq_ratios]
    lcm = 1
    for q in nums:
        lcm = lcm * q // math.gcd(lcm, q)
        if lcm > MAX_LCM:
            raise ConfigError("common period overflow; use frequency ratios with smaller denominators")
    g = 0
    for p in dens:
        g = math.gcd(g, p)
    T = 2.0 * math.pi * (Fraction(lcm, g) / Fraction(spec.base_freq))
    T = float(T)
    return T, 2.0 * math.pi / T
