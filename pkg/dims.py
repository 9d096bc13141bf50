"""
Expected dimensions of Fano schemes of conditionally generic intersections.

All quantities are exact integers. For a multidegree d = (d_1, ..., d_s) the
symbol binom(d + k, k) stands for sum_i C(d_i + k, k), the codimension of the
forms vanishing on a fixed k-plane.
"""

import math
from typing import List, Sequence, Tuple

from models import (DifferenceRow, EpochThresholds, FanoParams, MultiDegree,
                    ParameterError, StratRow, UnsupportedRegime)
from logger import get_logger

logger = get_logger(__name__)


def _binom(top: int, bottom: int) -> int:
    """C(top, bottom) with C(r, -1) = 0"""
    if bottom < 0 or top < 0:
        return 0
    return math.comb(top, bottom)


def multidegree_binom(d: MultiDegree, k: int) -> int:
    """sum_i C(d_i + k, k); zero at k = -1"""
    if k < -1:
        raise ParameterError(f"need k >= -1, got {k}")
    return sum(_binom(di + k, k) for di in d.degrees)


def _multidegree_binom_shifted(d: MultiDegree, k_prime: int, lower: int) -> int:
    # sum_i C(d_i + k', lower)
    return sum(_binom(di + k_prime, lower) for di in d.degrees)


def delta(p: FanoParams) -> int:
    """delta(n, d, k) = (k+1)(n-k) - binom(d+k, k)"""
    return p.grassmannian_dim - multidegree_binom(p.d, p.k)


def delta_quadrics(n: int, s: int, k: int) -> int:
    """delta(n, s, k) = (k+1)(n-k) - s*C(k+2, 2) for s quadrics"""
    return (k + 1) * (n - k) - s * math.comb(k + 2, 2)


def delta_strat(p: FanoParams, k_prime: int) -> int:
    """Expected dimension of the stratum F_{k,k'} of planes meeting the fixed plane in dimension k'"""
    if not -1 <= k_prime <= p.k:
        raise ParameterError(f"k' must lie in [-1, {p.k}], got {k_prime}")
    n, k = p.n, p.k
    return ((k - k_prime) * (n - k + k_prime + 1)
            + multidegree_binom(p.d, k_prime) - multidegree_binom(p.d, k))


def forward_differences(p: FanoParams) -> List[DifferenceRow]:
    """Closed-form first and second forward differences of delta_strat in k'"""
    p.d.require_not_single_quadric()
    n, k = p.n, p.k
    rows = []
    for k_prime in range(-1, k):
        first = -2 * k_prime - n + 2 * k - 2 + _multidegree_binom_shifted(p.d, k_prime, k_prime + 1)
        second = -2 + _multidegree_binom_shifted(p.d, k_prime, k_prime + 2)
        rows.append(DifferenceRow(k_prime, first, second))
    return rows


def schubert_codim(partition: Sequence[int], n: int, k: int) -> int:
    """Codimension of the Schubert cell Sigma_lambda in Gr(k, n): the sum of the parts"""
    parts = tuple(partition)
    if len(parts) > k + 1:
        raise ParameterError(f"a partition for Gr({k},{n}) has at most {k + 1} parts, got {parts}")
    if any(part < 0 or part > n - k for part in parts):
        raise ParameterError(f"parts must lie in [0, {n - k}], got {parts}")
    if any(a < b for a, b in zip(parts, parts[1:])):
        raise ParameterError(f"partition must be non-increasing, got {parts}")
    return sum(parts)


def fano_ambient_dim(p: FanoParams) -> int:
    """dim P S_{Lambda'}(d): projective space of s-tuples vanishing on the fixed plane"""
    return multidegree_binom(p.d, p.n) - multidegree_binom(p.d, p.k) - 1


def incidence_dim(p: FanoParams, k_prime: int) -> int:
    """dim I_{k,k'} of the stratified incidence correspondence"""
    n, k = p.n, p.k
    return ((k + 1) * (n - k) - (k_prime + 1) * (n - 2 * k + k_prime)
            + multidegree_binom(p.d, n) - 2 * multidegree_binom(p.d, k)
            + multidegree_binom(p.d, k_prime) - 1)


def stratification_table(p: FanoParams) -> List[StratRow]:
    """One row per k' in [-1, k]: expected dimension, Schubert cell and incidence bookkeeping"""
    n, k = p.n, p.k
    ambient = fano_ambient_dim(p)
    rows = []
    for k_prime in range(-1, k + 1):
        part = n - 2 * k + k_prime
        lam = (part,) * (k_prime + 1)
        degenerate = part < 0
        if degenerate:
            logger.debug(f"stratum k'={k_prime} of {p.to_dict()} has negative Schubert part {part}")
            codim = sum(lam)
        else:
            codim = schubert_codim(tuple(x for x in lam if x), n, k)
        rows.append(StratRow(
            k_prime=k_prime,
            expected_dim=delta_strat(p, k_prime),
            schubert_lambda=lam,
            schubert_codim=codim,
            incidence_dim=incidence_dim(p, k_prime),
            ambient_dim=ambient,
            degenerate=degenerate,
        ))
    return rows


def identifiable(p: FanoParams) -> bool:
    """F_k(V(f)) = [Lambda'] for conditionally generic f iff delta < 0"""
    p.d.require_not_single_quadric()
    return delta(p) < 0


def require_rank_regime(k: int, r: int, n: int = None):
    if r < 2 * k + 2:
        raise UnsupportedRegime(f"rank r={r} violates r >= 2k+2 (r < 2k+2 with k={k})")
    if n is not None and r > n + 1:
        raise ParameterError(f"rank r={r} exceeds n+1={n + 1}")


def identifiable_rank_constrained(n: int, s: int, k: int, r: int) -> bool:
    """Identifiability for s rank-r quadrics through a k-plane (requires r >= 2k+2)"""
    if s < 2:
        raise UnsupportedRegime(f"need s >= 2 quadrics, got s={s} (a single quadric is excluded)")
    if not 0 <= k < n:
        raise ParameterError(f"need 0 <= k < n, got n={n}, k={k}")
    require_rank_regime(k, r)
    return delta_quadrics(n, s, k) < 0


def min_epoch_differences(n: int, k: int) -> EpochThresholds:
    """Smallest s for the delta criterion, ceil(2(n-k)/(k+1)) and the coarse bound ceil((n+2)/k)"""
    if not 0 <= k < n:
        raise ParameterError(f"need 0 <= k < n, got n={n}, k={k}")
    per_quadric = math.comb(k + 2, 2)
    delta_based = (k + 1) * (n - k) // per_quadric + 1
    closed_form = -(-2 * (n - k) // (k + 1))
    coarse_bound = -(-(n + 2) // k) if k >= 1 else None
    return EpochThresholds(delta_based=delta_based, closed_form=closed_form, coarse_bound=coarse_bound)


def threshold_table(n_max: int) -> List[Tuple[int, int, EpochThresholds]]:
    """min_epoch_differences over all 1 <= k < n <= n_max"""
    return [(n, k, min_epoch_differences(n, k)) for n in range(2, n_max + 1) for k in range(1, n)]
