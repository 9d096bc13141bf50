"""
Homogeneous forms, Gram matrices of quadrics and conditionally generic samplers.

Coefficients are stored densely keyed by exponent vectors. Substitution of a
linear change of variables (``pullback``) is the single engine behind plane
restriction, change of basis and the batched finite-field census: it only
needs scalars supporting + and *, so Fractions, ints mod p, floats and numpy
arrays all flow through it.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from dims import require_rank_regime
from exactla import FieldDesc, Matrix, det, inverse, rank_exact
from grass import Plane, adapted_basis, canonicalize
from models import ContractViolation, MultiDegree, ParameterError
from logger import get_logger

logger = get_logger(__name__)

Exponent = Tuple[int, ...]


@lru_cache(maxsize=None)
def monomials(nvars: int, degree: int) -> Tuple[Exponent, ...]:
    """Exponent vectors of degree-d monomials in nvars variables, descending lexicographic"""
    if nvars == 0:
        return ((),) if degree == 0 else ()
    if nvars == 1:
        return ((degree,),)
    out = []
    for first in range(degree, -1, -1):
        out.extend((first,) + rest for rest in monomials(nvars - 1, degree - first))
    return tuple(out)


@dataclass(frozen=True, eq=True)
class Form:
    """Homogeneous polynomial of the given degree in x_0..x_n"""
    n: int
    degree: int
    coeffs: Dict[Exponent, object]
    field: FieldDesc

    __hash__ = None

    @classmethod
    def from_dict(cls, n: int, degree: int, coeffs: Dict[Sequence[int], object], field: FieldDesc) -> "Form":
        if degree < 1:
            raise ParameterError(f"form degree must be >= 1, got {degree}")
        clean = {}
        for exponent, value in coeffs.items():
            exponent = tuple(int(e) for e in exponent)
            if len(exponent) != n + 1 or any(e < 0 for e in exponent) or sum(exponent) != degree:
                raise ParameterError(f"exponent {exponent} is not a degree-{degree} monomial in {n + 1} variables")
            value = field.coerce(value)
            if not field.is_zero(value):
                clean[exponent] = field.reduce(clean.get(exponent, field.zero) + value)
        clean = {e: v for e, v in clean.items() if not field.is_zero(v)}
        return cls(n, degree, clean, field)

    @property
    def nvars(self) -> int:
        return self.n + 1

    def coefficient(self, exponent: Sequence[int]):
        return self.coeffs.get(tuple(exponent), self.field.zero)

    def is_zero(self) -> bool:
        return not self.coeffs

    def evaluate(self, point: Sequence):
        f = self.field
        total = f.zero
        for exponent, c in self.coeffs.items():
            term = c
            for x, e in zip(point, exponent):
                term = f.reduce(term * f.coerce(x) ** e) if e else term
            total = f.reduce(total + term)
        return total

    def with_field(self, field: FieldDesc) -> "Form":
        return Form.from_dict(self.n, self.degree, self.coeffs, field)

    def reduce_mod(self, p: int) -> "Form":
        return self.with_field(FieldDesc.prime(p))

    def __str__(self):
        terms = []
        for exponent in monomials(self.nvars, self.degree):
            if exponent in self.coeffs:
                mono = "*".join(f"x{j}" + (f"^{e}" if e > 1 else "") for j, e in enumerate(exponent) if e)
                terms.append(f"{self.coeffs[exponent]}*{mono}")
        return " + ".join(terms) if terms else "0"


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric Q with q(x) = x^T Q x"""
    matrix: Matrix

    def __post_init__(self):
        if not self.matrix.is_symmetric():
            raise ParameterError("Gram matrix must be symmetric")

    @property
    def n(self) -> int:
        return self.matrix.nrows - 1

    @property
    def field(self) -> FieldDesc:
        return self.matrix.field

    def entry(self, u: int, v: int):
        return self.matrix[u, v]

    def rank(self) -> int:
        return rank_exact(self.matrix)


@dataclass(frozen=True)
class PolySystem:
    """Ordered, nonempty list of forms in the same n variables"""
    forms: Tuple[Form, ...]

    def __post_init__(self):
        object.__setattr__(self, "forms", tuple(self.forms))
        if not self.forms:
            raise ParameterError("a polynomial system needs at least one form")
        if len({f.n for f in self.forms}) != 1:
            raise ParameterError("all forms of a system must share n")
        if len({f.field for f in self.forms}) != 1:
            raise ParameterError("all forms of a system must share the scalar field")

    @property
    def n(self) -> int:
        return self.forms[0].n

    @property
    def field(self) -> FieldDesc:
        return self.forms[0].field

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(f.degree for f in self.forms)

    @property
    def multidegree(self) -> MultiDegree:
        return MultiDegree(self.degrees)

    def reduce_mod(self, p: int) -> "PolySystem":
        return PolySystem(tuple(f.reduce_mod(p) for f in self.forms))

    def __len__(self):
        return len(self.forms)

    def __iter__(self):
        return iter(self.forms)


def _times_linear(poly: dict, linear: Sequence, reduce: Callable) -> dict:
    out = {}
    for mono, value in poly.items():
        for a, coeff in enumerate(linear):
            if isinstance(coeff, (int, float, Fraction)) and coeff == 0:
                continue
            key = mono[:a] + (mono[a] + 1,) + mono[a + 1:]
            term = value * coeff
            out[key] = out[key] + term if key in out else term
    return {key: reduce(value) for key, value in out.items()}


def expand_substitution(coeffs: Dict[Exponent, object], columns: Sequence[Sequence], nout: int,
                        reduce: Callable = lambda v: v) -> Dict[Exponent, object]:
    """
    Coefficients of f(A t) where x_j = sum_a columns[j][a] * t_a.

    Scalars may be numpy arrays, which evaluates a whole batch of substitutions at once.
    """
    result: Dict[Exponent, object] = {}
    origin = (0,) * nout
    for exponent, c in coeffs.items():
        poly = {origin: c}
        for j, e in enumerate(exponent):
            for _ in range(e):
                poly = _times_linear(poly, columns[j], reduce)
        for key, value in poly.items():
            result[key] = reduce(result[key] + value) if key in result else value
    return result


def pullback(f: Form, A: Matrix) -> Form:
    """The form t -> f(A t) for an (n+1) x m matrix A"""
    if A.nrows != f.nvars:
        raise ParameterError(f"substitution matrix has {A.nrows} rows, form has {f.nvars} variables")
    if A.field != f.field:
        raise ParameterError(f"field mismatch: form over {f.field}, matrix over {A.field}")
    field = f.field
    expanded = expand_substitution(f.coeffs, A.rows, A.ncols, field.reduce)
    return Form.from_dict(A.ncols - 1, f.degree, expanded, field)


def restrict_to_plane(f: Form, L: Plane) -> Tuple:
    """Coefficients of f(t B_L) in the descending-lex degree-d basis of t_0..t_k"""
    if L.n != f.n:
        raise ParameterError(f"plane lives in P^{L.n}, form in P^{f.n}")
    restricted = pullback(f, L.basis.transpose() if L.field == f.field else L.with_field(f.field).basis.transpose())
    return tuple(restricted.coefficient(m) for m in monomials(L.k + 1, f.degree))


def vanishes_on(f: Form, L: Plane) -> bool:
    return all(f.field.is_zero(c) for c in restrict_to_plane(f, L))


def change_of_basis_to(L: Plane) -> Matrix:
    """T with y = T x, where y are coordinates in which L = span(e_0..e_k)"""
    return inverse(adapted_basis(L).transpose())


def gram_of(f: Form) -> GramMatrix:
    """Gram matrix of a quadric: q_uu = coeff(x_u^2), q_uv = coeff(x_u x_v) / 2"""
    if f.degree != 2:
        raise ParameterError(f"Gram matrices exist for quadrics only, got degree {f.degree}")
    field = f.field
    half = field.inv(field.coerce(2))
    size = f.nvars
    rows = [[field.zero] * size for _ in range(size)]
    for exponent, c in f.coeffs.items():
        support = [j for j, e in enumerate(exponent) if e]
        if len(support) == 1:
            rows[support[0]][support[0]] = c
        else:
            u, v = support
            rows[u][v] = rows[v][u] = field.reduce(c * half)
    return GramMatrix(Matrix(field, tuple(tuple(row) for row in rows), size))


def form_of(Q: GramMatrix) -> Form:
    """The quadric x^T Q x"""
    field = Q.field
    size = Q.n + 1
    coeffs = {}
    for u in range(size):
        for v in range(u, size):
            exponent = [0] * size
            exponent[u] += 1
            exponent[v] += 1
            value = Q.entry(u, v) if u == v else field.reduce(2 * Q.entry(u, v))
            coeffs[tuple(exponent)] = value
    return Form.from_dict(Q.n, 2, coeffs, field)


def congruence(Q: GramMatrix, T: Matrix) -> GramMatrix:
    """Gram matrix of x -> q(T x), i.e. T^T Q T"""
    return GramMatrix(T.transpose() @ Q.matrix @ T)


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _nonzero_int(rng: np.random.Generator, bound: int) -> int:
    magnitude = int(rng.integers(1, bound + 1))
    return magnitude if rng.integers(0, 2) else -magnitude


def random_vanishing_form(n: int, d: int, L: Plane, bound: int = 1000, rng=None,
                          field: Optional[FieldDesc] = None) -> Form:
    """
    Random degree-d form containing L.

    In coordinates adapted to L the C(d+k, k) monomials in the first k+1 variables
    are excluded; every other coefficient is a uniform nonzero integer in [-bound, bound].
    """
    rng = _as_rng(rng)
    field = field or FieldDesc.rational()
    if L.n != n:
        raise ParameterError(f"plane lives in P^{L.n}, requested forms in P^{n}")
    if bound < 1:
        raise ParameterError("bound must be >= 1")
    k = L.k
    coeffs = {e: _nonzero_int(rng, bound) for e in monomials(n + 1, d) if any(e[k + 1:])}
    adapted = Form.from_dict(n, d, coeffs, field)
    if L.is_coordinate:
        return adapted
    return pullback(adapted, change_of_basis_to(L.with_field(field)))


def random_vanishing_system(n: int, degrees: Sequence[int], L: Plane, bound: int = 1000, rng=None,
                            field: Optional[FieldDesc] = None) -> PolySystem:
    rng = _as_rng(rng)
    return PolySystem(tuple(random_vanishing_form(n, d, L, bound, rng, field) for d in degrees))


PartialGram = Sequence[Sequence[Optional[object]]]


def complete_rank_r(partial: Union[GramMatrix, PartialGram], r: int,
                    field: Optional[FieldDesc] = None) -> GramMatrix:
    """
    Fill the bottom-right (n+1-r) x (n+1-r) corner so the Gram matrix has rank r.

    Each corner entry q_uv is the unique value killing the bordered minor on rows
    {0..r-1, u} and columns {0..r-1, v}; its denominator is the leading r x r minor.
    """
    if isinstance(partial, GramMatrix):
        field = partial.field
        rows = [list(row) for row in partial.matrix.rows]
    else:
        field = field or FieldDesc.rational()
        rows = [[None if x is None else field.coerce(x) for x in row] for row in partial]
    if not field.is_exact:
        raise ParameterError("rank-r completion needs an exact field")
    size = len(rows)
    if any(len(row) != size for row in rows):
        raise ParameterError("partial Gram matrix must be square")
    if not 1 <= r <= size:
        raise ParameterError(f"rank r={r} must lie in [1, {size}]")
    for u in range(size):
        for v in range(size):
            if min(u, v) < r:
                if rows[u][v] is None:
                    raise ParameterError(f"free Gram entry q[{u},{v}] is unset")
                if rows[u][v] != rows[v][u]:
                    raise ParameterError(f"partial Gram matrix is not symmetric at ({u},{v})")
            else:
                rows[u][v] = field.zero

    def as_matrix() -> Matrix:
        return Matrix(field, tuple(tuple(row) for row in rows), size)

    leading = det(as_matrix().submatrix(range(r), range(r)))
    if field.is_zero(leading):
        raise ParameterError("leading r x r minor vanishes: outside the chart U_r, resample the free entries")
    inv_leading = field.inv(leading)
    head = list(range(r))
    for u in range(r, size):
        for v in range(u, size):
            bordered = det(as_matrix().submatrix(head + [u], head + [v]))
            value = field.reduce(-bordered * inv_leading)
            rows[u][v] = rows[v][u] = value
    completed = GramMatrix(as_matrix())
    if completed.rank() != r:
        raise ContractViolation(f"completion has rank {completed.rank()}, expected {r}")
    return completed


def antidiagonal_witness(n: int, r: int, offset: int, field: Optional[FieldDesc] = None) -> List[list]:
    """Partial Gram with q_uv = 1 iff u + v = offset on the free entries, corner unset"""
    field = field or FieldDesc.rational()
    size = n + 1
    return [[None if min(u, v) >= r else (field.one if u + v == offset else field.zero)
             for v in range(size)] for u in range(size)]


def random_rank_r_vanishing_quadric(n: int, k: int, r: int, L: Plane, bound: int = 1000, rng=None,
                                    field: Optional[FieldDesc] = None, attempts: int = 100) -> GramMatrix:
    """Random rank-r quadric containing L; zero top-left block, corner completed in the chart U_r"""
    rng = _as_rng(rng)
    field = field or FieldDesc.rational()
    require_rank_regime(k, r, n)
    if L.n != n or L.k != k:
        raise ParameterError(f"plane is a {L.k}-plane in P^{L.n}, expected a {k}-plane in P^{n}")
    size = n + 1
    for attempt in range(attempts):
        partial = [[None] * size for _ in range(size)]
        for u in range(size):
            for v in range(u, size):
                if v <= k:
                    value = 0
                elif u >= r:
                    continue
                else:
                    value = _nonzero_int(rng, bound)
                partial[u][v] = partial[v][u] = value
        try:
            if r == size:
                gram = GramMatrix(Matrix.from_rows(partial, field))
                if gram.rank() != size:
                    raise ParameterError("sampled full-rank quadric is singular")
            else:
                gram = complete_rank_r(partial, r, field)
        except ParameterError as e:
            logger.debug(f"rank-{r} sample {attempt + 1} rejected: {e}")
            continue
        if L.is_coordinate:
            return gram
        return congruence(gram, change_of_basis_to(L.with_field(field)))
    raise ContractViolation(f"no rank-{r} sample inside the chart U_r after {attempts} attempts")


def random_rank_r_system(n: int, k: int, r: int, s: int, L: Plane, bound: int = 1000, rng=None,
                         field: Optional[FieldDesc] = None, attempts: int = 100) -> PolySystem:
    rng = _as_rng(rng)
    return PolySystem(tuple(form_of(random_rank_r_vanishing_quadric(n, k, r, L, bound, rng, field, attempts))
                            for _ in range(s)))


# -- instance JSON -----------------------------------------------------------

def _exponent_key(exponent: Exponent) -> str:
    return " ".join(str(e) for e in exponent)


def form_to_json(f: Form, as_gram: bool = False) -> dict:
    if as_gram and f.degree == 2:
        return {"degree": 2, "gram": gram_of(f).matrix.to_json()}
    return {
        "degree": f.degree,
        "coeffs": {_exponent_key(e): f.field.to_json_scalar(f.coeffs[e])
                   for e in monomials(f.nvars, f.degree) if e in f.coeffs},
    }


def form_from_json(data: dict, n: int, field: FieldDesc) -> Form:
    degree = int(data["degree"])
    if "gram" in data:
        if degree != 2:
            raise ParameterError("only quadrics may be given by a Gram matrix")
        gram = GramMatrix(Matrix.from_rows(data["gram"], field))
        if gram.n != n:
            raise ParameterError(f"Gram matrix is for P^{gram.n}, instance is in P^{n}")
        return form_of(gram)
    coeffs = {tuple(int(e) for e in key.split()): value for key, value in data.get("coeffs", {}).items()}
    return Form.from_dict(n, degree, coeffs, field)


def system_to_json(system: PolySystem, plane: Optional[Plane] = None, as_gram: bool = False) -> dict:
    data = {
        "field": system.field.to_json(),
        "n": system.n,
        "forms": [form_to_json(f, as_gram) for f in system],
    }
    if plane is not None:
        data["k"] = plane.k
        data["plane"] = plane.to_json()
    return data


def system_from_json(data: dict) -> Tuple[PolySystem, Optional[Plane]]:
    try:
        field = FieldDesc.from_json(data.get("field", {"kind": "rational"}))
        n = int(data["n"])
        system = PolySystem(tuple(form_from_json(item, n, field) for item in data["forms"]))
    except (KeyError, TypeError) as e:
        raise ParameterError(f"malformed instance JSON: missing or invalid {e}")
    plane = None
    if data.get("plane") is not None:
        plane = canonicalize(Matrix.from_rows(data["plane"], field))
        if plane.n != n:
            raise ParameterError(f"instance plane lives in P^{plane.n}, forms in P^{n}")
    return system, plane
