"""
k-planes in P^n: canonical RREF representatives, the affine chart around a
base plane, intersections, finite-field enumeration and float subspace metrics.
"""

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from exactla import FieldDesc, Matrix, inverse, rank_exact, rank_numeric, rref
from models import BudgetExceeded, ParameterError
from logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class Plane:
    """A k-plane in P^n, stored as a full-rank (k+1) x (n+1) row basis (RREF over exact fields)"""
    n: int
    k: int
    basis: Matrix

    def __post_init__(self):
        if self.basis.shape != (self.k + 1, self.n + 1):
            raise ParameterError(f"basis of a {self.k}-plane in P^{self.n} must be "
                                 f"{self.k + 1}x{self.n + 1}, got {self.basis.shape}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], field: FieldDesc) -> "Plane":
        return canonicalize(Matrix.from_rows(rows, field))

    @property
    def field(self) -> FieldDesc:
        return self.basis.field

    @property
    def is_coordinate(self) -> bool:
        """True for span(e_0, ..., e_k)"""
        f = self.field
        return all(self.basis[a, j] == (f.one if a == j else f.zero)
                   for a in range(self.k + 1) for j in range(self.n + 1))

    def with_field(self, field: FieldDesc) -> "Plane":
        return canonicalize(self.basis.with_field(field))

    def to_json(self) -> List[list]:
        return self.basis.to_json()

    def __str__(self):
        return "span(" + ", ".join("(" + " ".join(str(x) for x in row) + ")" for row in self.basis.rows) + ")"


@dataclass(frozen=True)
class ChartPoint:
    """Coordinates X ((k+1) x (n-k)) on the affine patch of Gr(k, n) centred at base"""
    base: Plane
    X: Matrix

    def __post_init__(self):
        expected = (self.base.k + 1, self.base.n - self.base.k)
        if self.X.shape != expected:
            raise ParameterError(f"chart coordinates must be {expected[0]}x{expected[1]}, got {self.X.shape}")


def canonicalize(m: Matrix) -> Plane:
    """RREF representative of the row space; floats keep the given basis"""
    if m.nrows == 0:
        raise ParameterError("a plane needs at least one basis row")
    if not m.field.is_exact:
        if rank_numeric(m) < m.nrows:
            raise ParameterError("basis rows are linearly dependent")
        return Plane(m.ncols - 1, m.nrows - 1, m)
    reduced, pivots = rref(m)
    if len(pivots) < m.nrows:
        raise ParameterError(f"basis has rank {len(pivots)} < {m.nrows}")
    return Plane(m.ncols - 1, m.nrows - 1, reduced)


def coordinate_plane(n: int, k: int, field: FieldDesc) -> Plane:
    """span(e_0, ..., e_k)"""
    rows = [[1 if a == j else 0 for j in range(n + 1)] for a in range(k + 1)]
    return Plane(n, k, Matrix.from_rows(rows, field))


def pivot_columns(L: Plane) -> Tuple[int, ...]:
    f = L.field
    return tuple(next(j for j, x in enumerate(row) if not f.is_zero(x)) for row in L.basis.rows)


def adapted_basis(L: Plane) -> Matrix:
    """Invertible (n+1) x (n+1) matrix whose first k+1 rows are L's basis"""
    if not L.field.is_exact:
        complement = scipy.linalg.null_space(L.basis.to_numpy())
        return Matrix.from_numpy(np.vstack([L.basis.to_numpy(), complement.T]))
    pivots = set(pivot_columns(L))
    f = L.field
    extra = tuple(tuple(f.one if j == c else f.zero for j in range(L.n + 1))
                  for c in range(L.n + 1) if c not in pivots)
    return Matrix(f, L.basis.rows + extra, L.n + 1)


def chart_plane(c: ChartPoint) -> Plane:
    """Row space of (I | X) written in the basis adapted to the base plane"""
    base = c.base
    M = adapted_basis(base)
    f = M.field
    k = base.k
    rows = []
    for a in range(k + 1):
        row = list(M.rows[a])
        for b in range(base.n - k):
            x = c.X[a, b]
            if not f.is_zero(x):
                row = [f.reduce(r + x * m) for r, m in zip(row, M.rows[k + 1 + b])]
        rows.append(row)
    return canonicalize(Matrix(f, tuple(tuple(row) for row in rows), base.n + 1))


def chart_coordinates(base: Plane, L: Plane) -> ChartPoint:
    """Inverse of chart_plane; fails when L lies outside the patch around base"""
    _same_ambient(base, L)
    M = adapted_basis(base)
    Y = L.basis @ inverse(M)
    k = base.k
    Y1 = Y.submatrix(range(k + 1), range(k + 1))
    Y2 = Y.submatrix(range(k + 1), range(k + 1, base.n + 1))
    try:
        X = inverse(Y1) @ Y2
    except ParameterError:
        raise ParameterError("plane lies outside the chart centred at the base plane")
    return ChartPoint(base, X)


def _same_ambient(L1: Plane, L2: Plane):
    if L1.n != L2.n:
        raise ParameterError(f"planes live in different ambient spaces: P^{L1.n} vs P^{L2.n}")


def intersection_dim(L1: Plane, L2: Plane) -> int:
    """Projective dimension of the intersection; -1 when disjoint"""
    _same_ambient(L1, L2)
    stacked = L1.basis.vstack(L2.basis)
    rank = rank_exact(stacked) if stacked.field.is_exact else rank_numeric(stacked)
    return (L1.k + 1) + (L2.k + 1) - rank - 1


def gaussian_binomial(n: int, k: int, q: int) -> int:
    """Number of k-planes in P^n(F_q), i.e. [n+1 choose k+1]_q"""
    if not 0 <= k <= n:
        return 0
    numerator = math.prod(q ** (n + 1 - i) - 1 for i in range(k + 1))
    denominator = math.prod(q ** (i + 1) - 1 for i in range(k + 1))
    return numerator // denominator


def check_budget(n: int, k: int, q: int, budget: int, allow_large: bool = False) -> int:
    total = gaussian_binomial(n, k, q)
    if total > budget and not allow_large:
        raise BudgetExceeded(f"enumerating {total} {k}-planes of P^{n}(F_{q}) exceeds the budget {budget}")
    return total


def _free_positions(pivots: Sequence[int], n: int) -> List[Tuple[int, int]]:
    pivot_set = set(pivots)
    return [(row, col) for row, p in enumerate(pivots) for col in range(p + 1, n + 1) if col not in pivot_set]


def plane_batches(n: int, k: int, q: int, chunk_size: int = 1 << 17,
                  index_range: Optional[Tuple[int, int]] = None) -> Iterator[Tuple[int, np.ndarray]]:
    """
    Indexed stream of RREF bases over F_q as int64 arrays of shape (N, k+1, n+1).

    Global index order is (pivot set, free entries), both lexicographic, so disjoint
    index ranges can be processed independently and merged by start index.
    """
    FieldDesc.prime(q)
    total = gaussian_binomial(n, k, q)
    lo, hi = index_range if index_range is not None else (0, total)
    offset = 0
    for pivots in combinations(range(n + 1), k + 1):
        free = _free_positions(pivots, n)
        size = q ** len(free)
        start, stop = max(lo, offset), min(hi, offset + size)
        if start < stop:
            template = np.zeros((k + 1, n + 1), dtype=np.int64)
            template[np.arange(k + 1), list(pivots)] = 1
            if free:
                powers = q ** np.arange(len(free) - 1, -1, -1, dtype=np.int64)
                free_rows, free_cols = (list(axis) for axis in zip(*free))
            for a in range(start, stop, chunk_size):
                b = min(stop, a + chunk_size)
                batch = np.broadcast_to(template, (b - a, k + 1, n + 1)).copy()
                if free:
                    local = np.arange(a - offset, b - offset, dtype=np.int64)
                    batch[:, free_rows, free_cols] = (local[:, None] // powers[None, :]) % q
                yield a, batch
        offset += size
        if offset >= hi:
            break


def enumeration_key(L: Plane) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Sort key reproducing the global order of plane_batches"""
    pivots = pivot_columns(L)
    return pivots, tuple(int(L.basis[row, col]) for row, col in _free_positions(pivots, L.n))


def planes_from_batch(batch: np.ndarray, q: int) -> List[Plane]:
    field = FieldDesc.prime(q)
    _, rows, cols = batch.shape
    return [Plane(cols - 1, rows - 1, Matrix(field, tuple(tuple(int(x) for x in r) for r in basis), cols))
            for basis in batch]


def enumerate_planes(n: int, k: int, q: int, budget: int = 10 ** 7,
                     allow_large: bool = False) -> Iterator[Plane]:
    """Every k-plane of P^n(F_q) exactly once, in (pivot set, free entries) order"""
    check_budget(n, k, q, budget, allow_large)
    for _, batch in plane_batches(n, k, q):
        yield from planes_from_batch(batch, q)


def partition_ranges(total: int, parts: int) -> List[Tuple[int, int]]:
    """Split [0, total) into contiguous index ranges for independent workers"""
    if parts < 1:
        raise ParameterError("parts must be >= 1")
    step = -(-total // parts) if total else 0
    return [(a, min(total, a + step)) for a in range(0, total, step)] if step else []


def _orthonormal_columns(L: Plane) -> np.ndarray:
    Q = scipy.linalg.orth(L.basis.to_numpy().T)
    if Q.shape[1] != L.k + 1:
        raise ParameterError("plane basis is rank-deficient")
    return Q


def subspace_distance(L1: Plane, L2: Plane) -> Tuple[float, float]:
    """(chordal distance, largest principal angle) between two planes of equal dimension"""
    _same_ambient(L1, L2)
    if L1.k != L2.k:
        raise ParameterError(f"planes have different dimensions {L1.k} and {L2.k}")
    Q1, Q2 = _orthonormal_columns(L1), _orthonormal_columns(L2)
    chordal = float(np.linalg.norm(Q1 @ Q1.T - Q2 @ Q2.T) / math.sqrt(2))
    angles = scipy.linalg.subspace_angles(Q1, Q2)
    return chordal, float(np.max(angles))


def float_plane(rows) -> Plane:
    return canonicalize(Matrix.from_numpy(np.asarray(rows, dtype=float)))


def random_plane(n: int, k: int, rng: np.random.Generator, field: Optional[FieldDesc] = None,
                 bound: int = 10) -> Plane:
    """Random k-plane; integer entries in [-bound, bound] over exact fields, orthonormal rows over floats"""
    field = field or FieldDesc.rational()
    if not field.is_exact:
        Q, _ = np.linalg.qr(rng.standard_normal((n + 1, k + 1)))
        return float_plane(Q.T)
    while True:
        rows = rng.integers(-bound, bound + 1, size=(k + 1, n + 1)).tolist()
        try:
            return Plane.from_rows(rows, field)
        except ParameterError:
            logger.debug("rank-deficient random basis, redrawing")
