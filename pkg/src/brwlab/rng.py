"""Counter-based random streams.

Every random number is a pure function of (seed, stream tag, coordinates),
obtained by chaining the SplitMix64 finalizer over the words. A replica's
draws therefore do not depend on how replicas are batched or on how many
worker processes share the work.
"""

from __future__ import annotations

import enum
import math

import numba
import numpy as np
from scipy.special import bdtr

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 2.0**-53
MAX_SEED = 2**64 - 1


class Stream(enum.IntEnum):
    OFFSPRING = 1
    STEP = 2
    POPULATION = 3
    WALK = 4
    JUMP = 5


def _fmix(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    return z ^ (z >> _S31)


def _as_u64(values) -> np.ndarray:
    return np.asarray(values).astype(np.uint64)


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream_key(seed: int, stream: int, *coords) -> np.ndarray:
    """Hash (seed, stream, *coords) to uint64 words; coords broadcast together."""
    with np.errstate(over="ignore"):
        h = _fmix(np.atleast_1d(np.uint64(check_seed(seed))) + _GOLDEN)
        h = _fmix(h ^ _fmix(np.uint64(int(stream)) + _GOLDEN))
        for c in coords:
            h = _fmix(h ^ _fmix(_as_u64(c) + _GOLDEN))
    return h


def uniforms(seed: int, stream: int, *coords) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), one per broadcast coordinate."""
    bits = stream_key(seed, stream, *coords)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def categorical(u: np.ndarray, values: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw from a finite law given uniforms."""
    cum = np.cumsum(probs)
    slot = np.minimum(np.searchsorted(cum, u, side="left"), len(values) - 1)
    return values[slot]


@numba.njit(cache=True)
def _walk_from_mode(u, n, p, mode, f_mode):
    out = np.empty(u.shape[0], dtype=np.int64)
    log_p = math.log(p)
    log_q = math.log1p(-p)
    odds = p / (1.0 - p)
    for i in range(u.shape[0]):
        trials = n[i]
        k = mode[i]
        big_f = f_mode[i]
        pm = math.exp(
            math.lgamma(trials + 1.0)
            - math.lgamma(k + 1.0)
            - math.lgamma(trials - k + 1.0)
            + k * log_p
            + (trials - k) * log_q
        )
        if u[i] <= big_f:
            while k > 0:
                prev = big_f - pm
                if prev < u[i]:
                    break
                pm = pm * k / ((trials - k + 1.0) * odds)
                big_f = prev
                k -= 1
        else:
            while k < trials:
                pm = pm * (trials - k) / (k + 1.0) * odds
                big_f += pm
                k += 1
                if big_f >= u[i]:
                    break
        out[i] = k
    return out


def binomial_from_uniform(u: np.ndarray, n: np.ndarray, p: float) -> np.ndarray:
    """Exact Binomial(n, p) inverse CDF at u, vectorized over u and n.

    The CDF at the mode comes from the regularized incomplete beta
    function; the inversion then walks outward from the mode, so the cost
    per draw is of order one standard deviation.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    n = np.ascontiguousarray(n, dtype=np.int64)
    out = np.zeros(n.shape, dtype=np.int64)
    if p <= 0.0 or n.size == 0:
        return out
    if p >= 1.0:
        return n.copy()
    live = n > 0
    if not live.any():
        return out
    nl = n[live]
    mode = np.minimum(np.floor((nl + 1) * p).astype(np.int64), nl)
    f_mode = bdtr(mode, nl, p)
    out[live] = _walk_from_mode(u[live], nl, p, mode, f_mode)
    return out


def multinomial_total(u_columns: np.ndarray, counts: np.ndarray, values: np.ndarray, probs: np.ndarray):
    """Sum of ``counts`` iid draws from a finite law on ``values``, via conditional binomials.

    ``u_columns`` has one uniform column per support value but the last.
    Returns sum_k values[k] * N_k where (N_k) ~ Multinomial(counts, probs).
    """
    remaining = np.asarray(counts, dtype=np.int64).copy()
    total = np.zeros_like(remaining)
    mass_left = 1.0
    for j in range(len(values) - 1):
        share = min(1.0, probs[j] / mass_left) if mass_left > 0 else 1.0
        taken = binomial_from_uniform(u_columns[:, j], remaining, share)
        total += values[j] * taken
        remaining -= taken
        mass_left -= probs[j]
    total += values[-1] * remaining
    return total
