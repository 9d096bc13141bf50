"""
Scalar fields and the linear-algebra kernels shared by every other module.

Three scalar fields are supported: the rationals (``fractions.Fraction``),
prime fields F_p for odd p (python ints reduced mod p) and float64. Exact
kernels (rank, rref, determinant, inverse, null space) run over the first
two; the float path goes through numpy/scipy singular values.
"""

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from sympy import isprime

from models import ParameterError
from logger import get_logger

logger = get_logger(__name__)

DEFAULT_TOLERANCE = 1e-8


class FieldKind(Enum):
    RATIONAL = "rational"
    PRIME = "prime"
    FLOAT64 = "float64"


@dataclass(frozen=True)
class FieldDesc:
    """A scalar field: the rationals, F_p (p an odd prime) or float64"""
    kind: FieldKind
    p: Optional[int] = None

    def __post_init__(self):
        if self.kind == FieldKind.PRIME:
            if self.p is None or not isprime(self.p):
                raise ParameterError(f"prime field needs a prime p, got {self.p}")
            if self.p == 2:
                raise ParameterError("characteristic 2 is not supported (quadric polarization divides by 2)")
        elif self.p is not None:
            raise ParameterError(f"{self.kind.value} field takes no p")

    @classmethod
    def rational(cls) -> "FieldDesc":
        return cls(FieldKind.RATIONAL)

    @classmethod
    def prime(cls, p: int) -> "FieldDesc":
        return cls(FieldKind.PRIME, int(p))

    @classmethod
    def float64(cls) -> "FieldDesc":
        return cls(FieldKind.FLOAT64)

    @classmethod
    def parse(cls, text: str) -> "FieldDesc":
        """Parse 'rational', 'float', 'float64', 'prime:11' or '11'"""
        text = text.strip().lower()
        if text in ("rational", "q"):
            return cls.rational()
        if text in ("float", "float64"):
            return cls.float64()
        if text.startswith("prime"):
            text = text.split(":", 1)[-1] if ":" in text else text[len("prime"):]
        try:
            return cls.prime(int(text))
        except ValueError:
            raise ParameterError(f"unknown field '{text}'")

    @property
    def is_exact(self) -> bool:
        return self.kind != FieldKind.FLOAT64

    @property
    def zero(self):
        if self.kind == FieldKind.RATIONAL:
            return Fraction(0)
        if self.kind == FieldKind.PRIME:
            return 0
        return 0.0

    @property
    def one(self):
        if self.kind == FieldKind.RATIONAL:
            return Fraction(1)
        if self.kind == FieldKind.PRIME:
            return 1
        return 1.0

    def coerce(self, value):
        """Convert an int, Fraction, 'num/den' string or float into this field"""
        if self.kind == FieldKind.FLOAT64:
            return float(Fraction(value)) if isinstance(value, str) else float(value)
        if isinstance(value, float):
            if not math.isfinite(value):
                raise ParameterError(f"non-finite scalar {value}")
            value = Fraction(value)
        elif isinstance(value, (np.integer,)):
            value = int(value)
        value = Fraction(value)
        if self.kind == FieldKind.RATIONAL:
            return value
        if value.denominator % self.p == 0:
            raise ParameterError(f"denominator of {value} vanishes mod {self.p}")
        return value.numerator * pow(value.denominator, -1, self.p) % self.p

    def reduce(self, value):
        """Normalize the result of a ring operation"""
        if self.kind == FieldKind.PRIME:
            return value % self.p
        return value

    def inv(self, value):
        if self.is_zero(value):
            raise ZeroDivisionError("inverse of zero")
        if self.kind == FieldKind.PRIME:
            return pow(value, -1, self.p)
        return 1 / value

    def is_zero(self, value) -> bool:
        if self.kind == FieldKind.PRIME:
            return value % self.p == 0
        return value == 0

    def to_json_scalar(self, value):
        if self.kind == FieldKind.RATIONAL:
            return str(value)
        if self.kind == FieldKind.PRIME:
            return int(value)
        return float(value)

    def to_json(self) -> dict:
        if self.kind == FieldKind.PRIME:
            return {"kind": "prime", "p": self.p}
        return {"kind": self.kind.value}

    @classmethod
    def from_json(cls, data: dict) -> "FieldDesc":
        kind = data.get("kind")
        if kind == "prime":
            return cls.prime(data["p"])
        if kind == "rational":
            return cls.rational()
        if kind in ("float", "float64"):
            return cls.float64()
        raise ParameterError(f"unknown field kind {kind!r}")

    def __str__(self):
        return f"F_{self.p}" if self.kind == FieldKind.PRIME else self.kind.value


@dataclass(frozen=True)
class Matrix:
    """Dense rectangular matrix over one FieldDesc; immutable"""
    field: FieldDesc
    rows: Tuple[tuple, ...]
    ncols: int

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence], field: FieldDesc, ncols: Optional[int] = None) -> "Matrix":
        coerced = tuple(tuple(field.coerce(x) for x in row) for row in rows)
        if ncols is None:
            if not coerced:
                raise ParameterError("ncols is required for a matrix without rows")
            ncols = len(coerced[0])
        if any(len(row) != ncols for row in coerced):
            raise ParameterError("matrix rows must all have the same length")
        return cls(field, coerced, ncols)

    @classmethod
    def zeros(cls, nrows: int, ncols: int, field: FieldDesc) -> "Matrix":
        return cls(field, tuple((field.zero,) * ncols for _ in range(nrows)), ncols)

    @classmethod
    def identity(cls, size: int, field: FieldDesc) -> "Matrix":
        return cls(field, tuple(tuple(field.one if i == j else field.zero for j in range(size))
                                for i in range(size)), size)

    @classmethod
    def from_numpy(cls, array: np.ndarray) -> "Matrix":
        array = np.atleast_2d(np.asarray(array, dtype=float))
        return cls(FieldDesc.float64(), tuple(tuple(float(x) for x in row) for row in array), array.shape[1])

    @property
    def nrows(self) -> int:
        return len(self.rows)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nrows, self.ncols)

    def __getitem__(self, index):
        i, j = index
        return self.rows[i][j]

    def transpose(self) -> "Matrix":
        if not self.rows:
            return Matrix.zeros(self.ncols, 0, self.field)
        return Matrix(self.field, tuple(zip(*self.rows)), self.nrows)

    def __matmul__(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.nrows:
            raise ParameterError(f"cannot multiply {self.shape} by {other.shape}")
        f = self.field
        columns = list(zip(*other.rows)) if other.rows else [() for _ in range(other.ncols)]
        out = tuple(
            tuple(f.reduce(sum((a * b for a, b in zip(row, col)), f.zero)) for col in columns)
            for row in self.rows
        )
        return Matrix(f, out, other.ncols)

    def vstack(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.ncols:
            raise ParameterError("vstack needs equal column counts")
        return Matrix(self.field, self.rows + other.rows, self.ncols)

    def submatrix(self, row_indices: Sequence[int], col_indices: Sequence[int]) -> "Matrix":
        return Matrix(self.field, tuple(tuple(self.rows[i][j] for j in col_indices) for i in row_indices),
                      len(col_indices))

    def scale(self, factor) -> "Matrix":
        f = self.field
        return Matrix(f, tuple(tuple(f.reduce(factor * x) for x in row) for row in self.rows), self.ncols)

    def with_field(self, field: FieldDesc) -> "Matrix":
        """Re-coerce every entry, e.g. reduce an integer matrix mod p"""
        return Matrix.from_rows(self.rows, field, self.ncols)

    def is_symmetric(self) -> bool:
        return self.nrows == self.ncols and all(
            self.rows[i][j] == self.rows[j][i] for i in range(self.nrows) for j in range(i))

    def is_zero(self) -> bool:
        return all(self.field.is_zero(x) for row in self.rows for x in row)

    def to_numpy(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.ncols))
        return np.array([[float(x) for x in row] for row in self.rows], dtype=float)

    def to_json(self) -> List[list]:
        return [[self.field.to_json_scalar(x) for x in row] for row in self.rows]

    def __str__(self):
        return "\n".join("[" + ", ".join(str(x) for x in row) + "]" for row in self.rows)


def _require_exact(m: Matrix, op: str):
    if not m.field.is_exact:
        raise ParameterError(f"{op} needs an exact field (rational or prime); use the numeric variant for floats")


def _integer_rows(m: Matrix) -> Tuple[List[List[int]], List[int]]:
    """Clear denominators row by row; returns the integer rows and row scalings"""
    rows, scales = [], []
    for row in m.rows:
        scale = reduce(math.lcm, (x.denominator for x in row), 1)
        rows.append([int(x * scale) for x in row])
        scales.append(scale)
    return rows, scales


def _bareiss(rows: List[List[int]], ncols: int) -> Tuple[int, int]:
    """Fraction-free elimination in place; returns (rank, sign of row swaps)"""
    nrows = len(rows)
    previous, rank, sign = 1, 0, 1
    for c in range(ncols):
        if rank == nrows:
            break
        pivot = next((i for i in range(rank, nrows) if rows[i][c] != 0), None)
        if pivot is None:
            continue
        if pivot != rank:
            rows[rank], rows[pivot] = rows[pivot], rows[rank]
            sign = -sign
        p = rows[rank][c]
        for i in range(rank + 1, nrows):
            a = rows[i][c]
            row_i, row_r = rows[i], rows[rank]
            for j in range(c + 1, ncols):
                row_i[j] = (row_i[j] * p - a * row_r[j]) // previous
            row_i[c] = 0
        previous = p
        rank += 1
    return rank, sign


def _gauss_jordan(m: Matrix) -> Tuple[List[list], List[int]]:
    f = m.field
    rows = [list(row) for row in m.rows]
    pivots: List[int] = []
    r = 0
    for c in range(m.ncols):
        if r == len(rows):
            break
        pivot = next((i for i in range(r, len(rows)) if not f.is_zero(rows[i][c])), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        scale = f.inv(rows[r][c])
        rows[r] = [f.reduce(x * scale) for x in rows[r]]
        for i in range(len(rows)):
            factor = rows[i][c]
            if i != r and not f.is_zero(factor):
                rows[i] = [f.reduce(a - factor * b) for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    return rows, pivots


def rref(m: Matrix) -> Tuple[Matrix, Tuple[int, ...]]:
    """Reduced row-echelon form and pivot columns (exact fields only)"""
    _require_exact(m, "rref")
    rows, pivots = _gauss_jordan(m)
    return Matrix(m.field, tuple(tuple(row) for row in rows), m.ncols), tuple(pivots)


def rank_exact(m: Matrix) -> int:
    """Rank over Q (fraction-free Bareiss) or over F_p (modular elimination)"""
    _require_exact(m, "rank_exact")
    if m.nrows == 0 or m.ncols == 0:
        return 0
    if m.field.kind == FieldKind.RATIONAL:
        rows, _ = _integer_rows(m)
        rank, _ = _bareiss(rows, m.ncols)
        return rank
    return len(_gauss_jordan(m)[1])


def rank_numeric(m: Matrix, tol: float = DEFAULT_TOLERANCE) -> int:
    """Number of singular values above tol * sigma_max"""
    if tol <= 0:
        raise ParameterError("tol must be > 0")
    array = m.to_numpy()
    if not np.all(np.isfinite(array)):
        raise ParameterError("matrix has non-finite entries")
    if array.size == 0:
        return 0
    singular = np.linalg.svd(array, compute_uv=False)
    if singular[0] == 0:
        return 0
    return int(np.sum(singular > tol * singular[0]))


def det(m: Matrix):
    """Determinant over an exact field"""
    _require_exact(m, "det")
    if m.nrows != m.ncols:
        raise ParameterError(f"det needs a square matrix, got {m.shape}")
    size = m.nrows
    if size == 0:
        return m.field.one
    f = m.field
    if f.kind == FieldKind.RATIONAL:
        rows, scales = _integer_rows(m)
        rank, sign = _bareiss(rows, size)
        if rank < size:
            return Fraction(0)
        return Fraction(sign * rows[-1][-1], math.prod(scales))
    rows = [list(row) for row in m.rows]
    result = 1
    for c in range(size):
        pivot = next((i for i in range(c, size) if rows[i][c] % f.p), None)
        if pivot is None:
            return 0
        if pivot != c:
            rows[c], rows[pivot] = rows[pivot], rows[c]
            result = -result
        result = result * rows[c][c] % f.p
        inv = pow(rows[c][c], -1, f.p)
        for i in range(c + 1, size):
            factor = rows[i][c] * inv % f.p
            if factor:
                rows[i] = [(a - factor * b) % f.p for a, b in zip(rows[i], rows[c])]
    return result % f.p


def minor(m: Matrix, row_indices: Sequence[int], col_indices: Sequence[int]):
    return det(m.submatrix(row_indices, col_indices))


def inverse(m: Matrix) -> Matrix:
    """Inverse via Gauss-Jordan on [M | I]"""
    _require_exact(m, "inverse")
    if m.nrows != m.ncols:
        raise ParameterError(f"inverse needs a square matrix, got {m.shape}")
    size = m.nrows
    eye = Matrix.identity(size, m.field)
    augmented = Matrix(m.field, tuple(a + b for a, b in zip(m.rows, eye.rows)), 2 * size)
    rows, pivots = _gauss_jordan(augmented)
    if tuple(pivots[:size]) != tuple(range(size)):
        raise ParameterError("matrix is not invertible")
    return Matrix(m.field, tuple(tuple(row[size:]) for row in rows), size)


def nullspace(m: Matrix, tol: float = DEFAULT_TOLERANCE) -> Matrix:
    """Rows form a basis of the right null space (orthonormal on the float path)"""
    if not m.field.is_exact:
        array = m.to_numpy()
        if array.shape[0] == 0:
            return Matrix.identity(m.ncols, m.field)
        basis = scipy.linalg.null_space(array, rcond=tol)
        return Matrix(m.field, tuple(tuple(float(x) for x in col) for col in basis.T), m.ncols)
    f = m.field
    reduced, pivots = rref(m)
    free = [c for c in range(m.ncols) if c not in pivots]
    basis = []
    for c in free:
        vector = [f.zero] * m.ncols
        vector[c] = f.one
        for row_index, pivot in enumerate(pivots):
            vector[pivot] = f.reduce(-reduced.rows[row_index][c])
        basis.append(tuple(vector))
    return Matrix(f, tuple(basis), m.ncols)
