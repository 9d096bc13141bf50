"""
Tangent spaces of Fano schemes F_k(V(f)) and finite-field censuses of their points.

The tangent space at [L0] is the kernel of the first-order part of the
restriction coefficients of every form along the chart centred at L0. A
census runs the vectorised stream of ``grass.plane_batches`` over all k-planes of
P^n(F_q), or over the spans of F_q-points of V(f) when the planes exceed the
budget, and keeps those on which all forms vanish.
"""

import math
from dataclasses import dataclass
from itertools import combinations, islice
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import config
from dims import delta, delta_quadrics
from exactla import FieldDesc, FieldKind, Matrix, rank_exact
from forms import (Form, GramMatrix, PolySystem, expand_substitution, form_of, gram_of, monomials,
                   pullback, random_rank_r_system, random_vanishing_system, restrict_to_plane)
from grass import (Plane, adapted_basis, check_budget, coordinate_plane, enumeration_key, float_plane,
                   gaussian_binomial, intersection_dim, plane_batches, planes_from_batch)
from models import (BudgetExceeded, Classification, ContractViolation, FanoParams, FanoVerdict, MultiDegree,
                    ParameterError, TrialOutcome, TrialSummary)
from logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class TangentSystem:
    """Linear system whose kernel is T_[L0] F_k(V(f)) in chart coordinates X_{a,b}"""
    params: FanoParams
    base_plane: Plane
    matrix: Matrix
    column_labels: Tuple[Tuple[int, int], ...]

    @property
    def rank(self) -> int:
        return rank_exact(self.matrix)

    @property
    def tangent_dim(self) -> int:
        return self.matrix.ncols - self.rank

    def labels(self) -> List[str]:
        return [f"X{a},{b}" for a, b in self.column_labels]


def _column_labels(n: int, k: int) -> Tuple[Tuple[int, int], ...]:
    return tuple((a, b) for a in range(k + 1) for b in range(k + 1, n + 1))


def _checked_base(sys: PolySystem, L0: Plane) -> Plane:
    if not sys.field.is_exact:
        raise ParameterError("tangent systems need an exact field; use numeric_tangent_matrix for floats")
    if L0.n != sys.n:
        raise ParameterError(f"base plane lives in P^{L0.n}, system in P^{sys.n}")
    base = L0 if L0.field == sys.field else L0.with_field(sys.field)
    for index, f in enumerate(sys):
        if any(not sys.field.is_zero(c) for c in restrict_to_plane(f, base)):
            raise ContractViolation(f"form {index} does not vanish on the base plane")
    return base


def _adapted_forms(sys: PolySystem, base: Plane) -> List[Form]:
    if base.is_coordinate:
        return list(sys.forms)
    transposed = adapted_basis(base).transpose()
    return [pullback(f, transposed) for f in sys]


def tangent_system(sys: PolySystem, L0: Plane) -> TangentSystem:
    """Tangent equations at L0: first-order coefficients of f(t (I | X)) in the adapted basis"""
    base = _checked_base(sys, L0)
    field = sys.field
    n, k = sys.n, base.k
    labels = _column_labels(n, k)
    col_index = {label: i for i, label in enumerate(labels)}
    rows = []
    for g in _adapted_forms(sys, base):
        t_monomials = monomials(k + 1, g.degree)
        row_index = {m: i for i, m in enumerate(t_monomials)}
        block = [[field.zero] * len(labels) for _ in t_monomials]
        for exponent, c in g.coeffs.items():
            # only monomials linear in the normal variables x_{k+1..n} contribute
            if sum(exponent[k + 1:]) != 1:
                continue
            b = next(j for j in range(k + 1, n + 1) if exponent[j])
            low = exponent[:k + 1]
            for a in range(k + 1):
                mono = low[:a] + (low[a] + 1,) + low[a + 1:]
                r, col = row_index[mono], col_index[(a, b)]
                block[r][col] = field.reduce(block[r][col] + c)
        rows.extend(tuple(row) for row in block)
    params = FanoParams(n, k, MultiDegree(sys.degrees))
    return TangentSystem(params, base, Matrix(field, tuple(rows), len(labels)), labels)


def quadric_tangent_system(grams: Sequence[GramMatrix], L0: Plane) -> TangentSystem:
    """
    Direct assembly from Gram entries in the adapted basis:
        sum_b q_{u,b} X_{u,b} = 0                          (u in 0..k)
        sum_b q_{u,b} X_{v,b} + q_{v,b} X_{u,b} = 0        (u < v in 0..k)
    Rows follow the same monomial order as tangent_system.
    """
    sys = PolySystem(tuple(form_of(Q) for Q in grams))
    base = _checked_base(sys, L0)
    field = sys.field
    n, k = sys.n, base.k
    labels = _column_labels(n, k)
    col_index = {label: i for i, label in enumerate(labels)}
    M = None if base.is_coordinate else adapted_basis(base)
    rows = []
    for Q in grams:
        G = Q.matrix if M is None else M @ Q.matrix @ M.transpose()
        for mono in monomials(k + 1, 2):
            support = [a for a, e in enumerate(mono) for _ in range(e)]
            u, v = support
            row = [field.zero] * len(labels)
            for b in range(k + 1, n + 1):
                if u == v:
                    row[col_index[(u, b)]] = G[u, b]
                else:
                    row[col_index[(v, b)]] = field.reduce(row[col_index[(v, b)]] + G[u, b])
                    row[col_index[(u, b)]] = field.reduce(row[col_index[(u, b)]] + G[v, b])
            rows.append(tuple(row))
    params = FanoParams(n, k, MultiDegree(sys.degrees))
    return TangentSystem(params, base, Matrix(field, tuple(rows), len(labels)), labels)


def numeric_tangent_matrix(sys: PolySystem, L0: Plane, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the restriction coefficients along each chart direction (debugging aid)"""
    float_field = FieldDesc.float64()
    forms = [f.with_field(float_field) for f in sys]
    # same adapted basis as the exact path, so columns line up with tangent_system
    M = adapted_basis(L0).to_numpy()
    n, k = L0.n, L0.k
    columns = []
    for a, b in _column_labels(n, k):
        samples = []
        for step in (h, -h):
            rows = M[:k + 1].copy()
            rows[a] += step * M[b]
            plane = float_plane(rows)
            samples.append(np.concatenate([np.array(restrict_to_plane(f, plane), dtype=float) for f in forms]))
        columns.append((samples[0] - samples[1]) / (2 * h))
    return np.column_stack(columns)


def tangent_dim(sys: PolySystem, L0: Plane) -> int:
    """(k+1)(n-k) minus the rank of the tangent equations"""
    return tangent_system(sys, L0).tangent_dim


def verdict(sys: PolySystem, L_prime: Plane) -> FanoVerdict:
    """Compare the realised tangent dimension at L' with the expected dimension"""
    ts = tangent_system(sys, L_prime)
    expected = delta(ts.params)
    dim = ts.tangent_dim
    if expected < 0 and dim == 0:
        classification = Classification.UNIQUE_PLANE_CERTIFIED_LOCALLY
    elif expected >= 0 and dim == expected:
        classification = Classification.EXPECTED_DIM_MET
    else:
        classification = Classification.TANGENT_EXCESS
        logger.debug(f"tangent excess at {L_prime}: delta={expected}, tangent_dim={dim}")
    return FanoVerdict(delta=expected, tangent_dim=dim, classification=classification)


def _prime_system(sys: PolySystem, q: Optional[int]) -> Tuple[PolySystem, int]:
    if sys.field.kind == FieldKind.PRIME:
        if q is not None and q != sys.field.p:
            raise ParameterError(f"system is over F_{sys.field.p}, census requested over F_{q}")
        return sys, sys.field.p
    if q is None:
        raise ParameterError("a census needs a prime q for systems over the rationals")
    return sys.reduce_mod(q), q


def _vanishing_mask(f: Form, batch: np.ndarray, p: int) -> np.ndarray:
    count, k1, _ = batch.shape
    if f.degree == 2:
        G = np.array([[int(x) for x in row] for row in gram_of(f).matrix.rows], dtype=np.int64)
        restricted = np.einsum('nai,ij,nbj->nab', batch, G, batch) % p
        return ~np.any(restricted.reshape(count, -1), axis=1)
    columns = [[batch[:, a, j] for a in range(k1)] for j in range(f.nvars)]
    expanded = expand_substitution(f.coeffs, columns, k1, lambda v: v % p)
    mask = np.ones(count, dtype=bool)
    for value in expanded.values():
        mask &= np.broadcast_to(np.asarray(value) % p == 0, (count,))
    return mask


CENSUS_STRATEGIES = ("auto", "planes", "points")


def _surviving(sys: PolySystem, batch: np.ndarray, p: int) -> np.ndarray:
    for f in sys:
        batch = batch[_vanishing_mask(f, batch, p)]
        if len(batch) == 0:
            break
    return batch


def _census_by_planes(sys: PolySystem, k: int, p: int, total: int, index_range, progress: bool) -> List[Plane]:
    chunk = config.chunk_size
    found: List[Plane] = []
    with tqdm(total=-(-total // chunk), desc=f"Census F_{p}", unit="batch", disable=not progress) as pbar:
        for _, batch in plane_batches(sys.n, k, p, chunk, index_range):
            found.extend(planes_from_batch(_surviving(sys, batch, p), p))
            pbar.update(1)
    return found


def _census_by_points(sys: PolySystem, k: int, p: int, budget: int, allow_large: bool,
                      progress: bool) -> List[Plane]:
    # every F_q-plane inside V(f) is spanned by k+1 of its own F_q-points
    n = sys.n
    check_budget(n, 0, p, budget, allow_large)
    points = np.concatenate([_surviving(sys, batch, p)[:, 0, :]
                             for _, batch in plane_batches(n, 0, p, config.chunk_size)])
    candidates = math.comb(len(points), k + 1)
    logger.debug(f"{len(points)} F_{p}-points on V(f); {candidates} candidate spans")
    if candidates > budget and not allow_large:
        raise BudgetExceeded(f"{candidates} spans of {k + 1} points of V(f) over F_{p} exceed the budget {budget}")
    field = FieldDesc.prime(p)
    seen = set()
    found: List[Plane] = []
    combos = combinations(range(len(points)), k + 1)
    with tqdm(total=candidates, desc=f"Spans F_{p}", unit="span", disable=not progress) as pbar:
        while True:
            chunk = np.array(list(islice(combos, config.chunk_size)), dtype=np.int64)
            if len(chunk) == 0:
                break
            for basis in _surviving(sys, points[chunk], p):
                try:
                    plane = Plane.from_rows(basis.tolist(), field)
                except ParameterError:
                    continue
                if plane.basis.rows not in seen:
                    seen.add(plane.basis.rows)
                    found.append(plane)
            pbar.update(len(chunk))
    return sorted(found, key=enumeration_key)


def fano_points_fq(sys: PolySystem, k: int, q: Optional[int] = None, budget: Optional[int] = None,
                   allow_large: bool = False, index_range: Optional[Tuple[int, int]] = None,
                   progress: bool = False, strategy: str = "auto") -> List[Plane]:
    """
    Every k-plane of P^n(F_q) contained in V(sys), in enumeration order.

    "planes" scans all k-planes; "points" collects the F_q-points of V(sys) and
    tests the planes they span. "auto" scans planes while that fits the budget.
    """
    if strategy not in CENSUS_STRATEGIES:
        raise ParameterError(f"strategy must be one of {', '.join(CENSUS_STRATEGIES)}")
    sys, p = _prime_system(sys, q)
    n = sys.n
    if not 0 <= k < n:
        raise ParameterError(f"need 0 <= k < n, got n={n}, k={k}")
    budget = budget if budget is not None else config.budget
    total = gaussian_binomial(n, k, p)
    if strategy == "auto":
        strategy = "planes" if total <= budget or allow_large or index_range is not None or k == 0 else "points"
    if strategy == "points" and index_range is not None:
        raise ParameterError("index ranges partition the plane scan only")
    if strategy == "planes":
        check_budget(n, k, p, budget, allow_large)
        found = _census_by_planes(sys, k, p, total, index_range, progress)
    else:
        logger.info(f"{total} {k}-planes over F_{p} exceed the budget, spanning points of V(f) instead")
        found = _census_by_points(sys, k, p, budget, allow_large, progress)
    logger.debug(f"census over F_{p} ({strategy}): {len(found)} of {total} {k}-planes lie in V(f)")
    return found


def stratified_counts(sys: PolySystem, k: int, L_prime: Plane, q: Optional[int] = None,
                      points: Optional[List[Plane]] = None, **census_kwargs) -> Dict[int, int]:
    """Count Fano points by their intersection dimension with L'"""
    sys, p = _prime_system(sys, q)
    L = L_prime.with_field(FieldDesc.prime(p))
    if points is None:
        points = fano_points_fq(sys, k, p, **census_kwargs)
    if L not in points:
        raise ContractViolation("the reference plane is not a point of the Fano scheme")
    counts = {k_prime: 0 for k_prime in range(-1, k + 1)}
    for plane in points:
        counts[intersection_dim(plane, L)] += 1
    return counts


def conditional_instance(n: int, k: int, degrees: Sequence[int], seed: int, rank: Optional[int] = None,
                         bound: Optional[int] = None, plane: Optional[Plane] = None) -> Tuple[PolySystem, Plane]:
    """Seeded conditionally generic system through a fixed k-plane (optionally rank-constrained quadrics)"""
    rng = np.random.default_rng(seed)
    bound = bound if bound is not None else config.coefficient_bound
    L = plane or coordinate_plane(n, k, FieldDesc.rational())
    if rank is not None:
        if any(d != 2 for d in degrees):
            raise ParameterError("rank constraints apply to quadrics only")
        return random_rank_r_system(n, k, rank, len(degrees), L, bound, rng,
                                    attempts=config.resample_attempts), L
    return random_vanishing_system(n, degrees, L, bound, rng), L


def run_trials(n: int, k: int, degrees: Sequence[int], seeds: Sequence[int], q: Optional[int] = None,
               rank: Optional[int] = None, local: bool = True, bound: Optional[int] = None,
               point_tangents: bool = False, progress: bool = False, **census_kwargs) -> TrialSummary:
    """
    Seeded conditional-genericity trials.

    A trial passes when the local verdict (and the census, if q is given) shows the
    behaviour predicted by delta: a unique plane for delta < 0, the expected
    dimension otherwise. Every failing trial is kept with its extra planes.
    """
    md = MultiDegree(tuple(degrees))
    expected = delta(FanoParams(n, k, md)) if rank is None else delta_quadrics(n, md.s, k)
    claim = "unique plane" if expected < 0 else f"expected dimension {expected}"
    summary = TrialSummary(claim=claim, required_rate=config.acceptance_rate)
    for seed in tqdm(seeds, desc="Trials", unit="trial", disable=not progress):
        sys, L = conditional_instance(n, k, degrees, seed, rank, bound)
        outcome = TrialOutcome(seed=seed)
        checks = []
        if local:
            outcome.verdict = verdict(sys, L)
            checks.append(outcome.verdict.is_generic)
        if q is not None:
            try:
                sys_q = sys.reduce_mod(q)
            except ParameterError as e:
                outcome.note = f"reduction mod {q} failed: {e}"
                summary.outcomes.append(outcome)
                continue
            points = fano_points_fq(sys_q, k, q, **census_kwargs)
            outcome.census_count = len(points)
            L_q = L.with_field(FieldDesc.prime(q))
            outcome.strata = stratified_counts(sys_q, k, L_q, q, points=points)
            outcome.extra_planes = [plane.to_json() for plane in points if plane != L_q][:10]
            if expected < 0:
                checks.append(len(points) == 1)
                if outcome.verdict is not None and outcome.verdict.is_generic and len(points) > 1:
                    logger.warning(f"seed {seed}: local certificate but {len(points) - 1} extra "
                                   f"plane(s) over F_{q}: {outcome.extra_planes}")
            if point_tangents:
                outcome.point_tangent_dims = [tangent_dim(sys_q, plane) for plane in points]
        outcome.passed = all(checks)
        if not outcome.passed:
            logger.info(f"seed {seed}: trial exception ({claim})")
        summary.outcomes.append(outcome)
    logger.info(summary.summary().replace("\n", " |"))
    return summary
