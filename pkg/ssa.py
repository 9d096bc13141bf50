"""
Stationary subspace analysis through the Fano-scheme lens.

Epochs are summarised by their first two cumulants (mean and covariance).
The differences against epoch 0 give s linear forms and s quadrics that all
vanish on the stationary subspace; the linear forms only shrink the ambient
space, the quadrics decide identifiability through delta(n, s, k). Recovery
minimises the squared restriction of every difference form over row-orthonormal
(k+1) x (n+1) matrices, from many random starts.

Everything here works over the reals. The identifiability verdicts are
field-blind integer computations; real Fano points could in principle differ
from complex ones, so recovery results are evidence, not certificates.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import ortho_group
from tqdm import tqdm

from config import config
from dims import delta_quadrics, min_epoch_differences, require_rank_regime
from exactla import FieldDesc, Matrix, nullspace
from forms import random_rank_r_vanishing_quadric
from grass import Plane, coordinate_plane, float_plane, subspace_distance
from models import (ContractViolation, IdentifiabilityReport, InfeasibleSystem, ParameterError,
                    UnsupportedRegime)
from logger import get_logger

logger = get_logger(__name__)

SYMMETRY_TOLERANCE = 1e-12
INVARIANT_TOLERANCE = 1e-10
MIN_EIGENVALUE = 0.01


@dataclass(frozen=True, eq=False)
class EpochCumulants:
    """First two cumulants of one epoch: mean vector and covariance matrix"""
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ParameterError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ParameterError("cumulants must be finite")
        magnitude = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOLERANCE * magnitude:
            raise ParameterError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -config.tolerance * magnitude:
            raise ParameterError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", (cov + cov.T) / 2)

    @property
    def n(self) -> int:
        return self.mean.size - 1


@dataclass
class SsaInstance:
    """s+1 epochs sharing the projection P of the ground-truth plane"""
    epochs: List[EpochCumulants]
    ground_truth: Optional[Plane] = None
    rank_constraint: Optional[int] = None

    @property
    def n(self) -> int:
        return self.epochs[0].n

    @property
    def s(self) -> int:
        return len(self.epochs) - 1

    @property
    def k(self) -> Optional[int]:
        return self.ground_truth.k if self.ground_truth is not None else None

    def projection(self) -> np.ndarray:
        """Orthonormal rows spanning the ground truth"""
        if self.ground_truth is None:
            raise ParameterError("instance has no ground truth")
        Q, _ = np.linalg.qr(self.ground_truth.basis.to_numpy().T)
        return Q.T

    def invariant_violation(self) -> float:
        """max over epochs of |P (Sigma_i - Sigma_0) P^T| and |P (mu_i - mu_0)|"""
        P = self.projection()
        base = self.epochs[0]
        worst = 0.0
        for epoch in self.epochs[1:]:
            worst = max(worst,
                        float(np.max(np.abs(P @ (epoch.covariance - base.covariance) @ P.T))),
                        float(np.max(np.abs(P @ (epoch.mean - base.mean)))))
        return worst

    def check_invariants(self, tol: float = INVARIANT_TOLERANCE):
        violation = self.invariant_violation()
        if violation > tol:
            raise ContractViolation(f"ground truth is not stationary: violation {violation:.3e} > {tol:.0e}")

    def transformed(self, O: np.ndarray) -> "SsaInstance":
        """The instance seen in coordinates x' = O x for an orthogonal O"""
        epochs = [EpochCumulants(O @ e.mean, O @ e.covariance @ O.T) for e in self.epochs]
        truth = float_plane(self.ground_truth.basis.to_numpy() @ O.T) if self.ground_truth else None
        return SsaInstance(epochs, truth, self.rank_constraint)

    def to_json(self) -> dict:
        data = {
            "means": [e.mean.tolist() for e in self.epochs],
            "covariances": [e.covariance.tolist() for e in self.epochs],
        }
        if self.ground_truth is not None:
            data["ground_truth"] = self.projection().tolist()
        if self.rank_constraint is not None:
            data["rank_constraint"] = self.rank_constraint
        return data

    @classmethod
    def from_json(cls, data: dict) -> "SsaInstance":
        try:
            means, covariances = data["means"], data["covariances"]
        except KeyError as e:
            raise ParameterError(f"population instance is missing {e}")
        if len(means) != len(covariances):
            raise ParameterError("means and covariances must list the same epochs")
        epochs = [EpochCumulants(np.array(m, dtype=float), np.array(c, dtype=float))
                  for m, c in zip(means, covariances)]
        truth = data.get("ground_truth")
        return cls(epochs, float_plane(truth) if truth is not None else None, data.get("rank_constraint"))


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_epochs(instance: SsaInstance, m: int, rng=None) -> List[np.ndarray]:
    """m Gaussian observations per epoch with the instance's cumulants"""
    if m < 2:
        raise ParameterError(f"need m >= 2 samples per epoch, got {m}")
    rng = _as_rng(rng)
    return [rng.multivariate_normal(e.mean, e.covariance, size=m) for e in instance.epochs]


def estimate_cumulants(samples, unbiased: bool = True) -> EpochCumulants:
    """Column means and sample covariance (divisor m-1, or m when unbiased=False)"""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    m = X.shape[0]
    if m < 2:
        raise ParameterError(f"need m >= 2 samples, got {m}")
    cov = np.cov(X, rowvar=False, ddof=1 if unbiased else 0)
    return EpochCumulants(X.mean(axis=0), np.atleast_2d(cov))


@dataclass
class DifferenceSystem:
    """Linear forms mu_i - mu_0 and Gram matrices Sigma_i - Sigma_0 that survived the zero test"""
    linear_forms: List[np.ndarray]
    quadrics: List[np.ndarray]
    dropped: List[str] = field(default_factory=list)
    scale: float = 0.0

    @property
    def n(self) -> int:
        forms = self.linear_forms or self.quadrics
        return forms[0].shape[0] - 1 if forms else -1

    @property
    def degenerate(self) -> bool:
        return not self.linear_forms and not self.quadrics

    def __iter__(self):
        yield self.linear_forms
        yield self.quadrics


def difference_system(epochs: Sequence[EpochCumulants], tol: Optional[float] = None) -> DifferenceSystem:
    """Differences against epoch 0; forms below tol x (largest entry over all differences) are dropped"""
    if len(epochs) < 2:
        raise ParameterError(f"need at least 2 epochs, got {len(epochs)}")
    if len({e.n for e in epochs}) != 1:
        raise ParameterError("all epochs must share the ambient dimension")
    tol = tol if tol is not None else config.zero_form_tolerance
    base = epochs[0]
    linear = [e.mean - base.mean for e in epochs[1:]]
    quadrics = [e.covariance - base.covariance for e in epochs[1:]]
    scale = max(float(np.max(np.abs(a))) for a in linear + quadrics)
    threshold = tol * scale
    system = DifferenceSystem([], [], scale=scale)
    for i, (vector, gram) in enumerate(zip(linear, quadrics), start=1):
        if scale > 0 and np.max(np.abs(vector)) >= threshold:
            system.linear_forms.append(vector)
        else:
            system.dropped.append(f"linear {i}")
        if scale > 0 and np.max(np.abs(gram)) >= threshold:
            system.quadrics.append(gram)
        else:
            system.dropped.append(f"quadric {i}")
    if system.dropped:
        logger.warning(f"dropped numerically zero difference forms: {', '.join(system.dropped)}")
    if system.degenerate:
        logger.warning("all epochs agree up to tolerance: the difference system is empty")
    return system


def reduce_ambient(linear_forms: Sequence[np.ndarray], quadrics: Sequence[np.ndarray],
                   k: Optional[int] = None, tol: Optional[float] = None) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    Restrict the quadrics to the common kernel of the linear forms.

    Returns the reduced Gram matrices N^T G N and the embedding N, an (n+1) x m
    matrix with orthonormal columns; a plane W found downstairs is W N^T upstairs.
    """
    quadrics = [np.asarray(G, dtype=float) for G in quadrics]
    if not linear_forms:
        size = quadrics[0].shape[0] if quadrics else 0
        return quadrics, np.eye(size)
    A = np.vstack([np.asarray(v, dtype=float).ravel() for v in linear_forms])
    kernel = nullspace(Matrix.from_numpy(A), tol if tol is not None else config.tolerance)
    N = kernel.to_numpy().T if kernel.nrows else np.zeros((A.shape[1], 0))
    needed = (k + 1) if k is not None else 1
    if N.shape[1] < needed:
        raise InfeasibleSystem(f"linear constraints leave a {N.shape[1]}-dimensional kernel, "
                               f"too small for a {needed - 1}-plane")
    logger.debug(f"ambient reduced from {A.shape[1]} to {N.shape[1]} coordinates")
    return [N.T @ G @ N for G in quadrics], N


def _difference_block(n: int, k: int, rank_r: Optional[int], rng: np.random.Generator) -> np.ndarray:
    # symmetric matrix with zero top-left (k+1) block in the P-adapted basis
    if rank_r is not None:
        L = coordinate_plane(n, k, FieldDesc.rational())
        gram = random_rank_r_vanishing_quadric(n, k, rank_r, L, bound=10, rng=rng,
                                               attempts=config.resample_attempts)
        D = gram.matrix.to_numpy()
        return D / np.max(np.abs(D))
    B = rng.standard_normal((n + 1, n + 1))
    D = (B + B.T) / 2
    D[:k + 1, :k + 1] = 0.0
    return D


def generate_instance(n: int, k: int, s: int, rank_r: Optional[int] = None, rng=None) -> SsaInstance:
    """Population instance with a random orthonormal ground truth P and s non-stationary epochs"""
    if s < 1:
        raise ParameterError(f"need s >= 1 epoch differences, got s={s}")
    if not 0 <= k < n:
        raise ParameterError(f"need 0 <= k < n, got n={n}, k={k}")
    if rank_r is not None:
        require_rank_regime(k, rank_r, n)
    rng = _as_rng(rng)
    O = ortho_group.rvs(dim=n + 1, random_state=rng)
    A = rng.standard_normal((n + 1, n + 1))
    sigma0 = A @ A.T / (n + 1) + np.eye(n + 1)
    mu0 = rng.standard_normal(n + 1)
    epochs = [EpochCumulants(mu0, sigma0)]
    for i in range(s):
        D = O.T @ _difference_block(n, k, rank_r, rng) @ O
        D = (D + D.T) / 2
        c = 1.0
        # shrinking keeps P D P^T = 0
        while np.linalg.eigvalsh(sigma0 + c * D).min() < MIN_EIGENVALUE:
            c /= 2
        w = np.concatenate([np.zeros(k + 1), rng.standard_normal(n - k)])
        epochs.append(EpochCumulants(mu0 + O.T @ w, sigma0 + c * D))
        logger.debug(f"epoch {i + 1}: difference shrunk by {c}")
    instance = SsaInstance(epochs, float_plane(O[:k + 1]), rank_r)
    instance.check_invariants()
    return instance


def identifiability_report(n: int, k: int, s: int, r: Optional[int] = None) -> IdentifiabilityReport:
    """delta(n, s, k), its sign verdict and every epoch-count threshold"""
    if not 0 <= k < n:
        raise ParameterError(f"need 0 <= k < n, got n={n}, k={k}")
    if s < 2:
        raise UnsupportedRegime(f"need s >= 2 quadrics, got s={s} (a single quadric is excluded)")
    if r is not None:
        require_rank_regime(k, r, n)
    value = delta_quadrics(n, s, k)
    thresholds = min_epoch_differences(n, k)
    return IdentifiabilityReport(
        n=n, k=k, s=s, r=r,
        delta=value,
        identifiable=value < 0,
        delta_threshold=thresholds.delta_based,
        closed_form_threshold=thresholds.closed_form,
        coarse_threshold=thresholds.coarse_bound,
        discrepancy_flag=thresholds.discrepancy,
    )


def stationarity_objective(W: np.ndarray, linear_forms: Sequence[np.ndarray],
                           quadrics: Sequence[np.ndarray]) -> Tuple[float, np.ndarray]:
    """Value and Euclidean gradient of sum ||W G W^T||_F^2 + sum ||W l||^2"""
    value = 0.0
    grad = np.zeros_like(W)
    for G in quadrics:
        M = W @ G @ W.T
        value += float(np.sum(M * M))
        grad += 4.0 * M @ W @ G
    for l in linear_forms:
        v = W @ l
        value += float(v @ v)
        grad += 2.0 * np.outer(v, l)
    return value, grad


def _tangent_projection(W: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return xi - 0.5 * (xi @ W.T + W @ xi.T) @ W


def _retract(Y: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(Y.T)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return (Q * signs).T


@dataclass
class RecoveryOptions:
    restarts: int = field(default_factory=lambda: config.restarts)
    max_iterations: int = field(default_factory=lambda: config.max_iterations)
    gradient_tolerance: float = field(default_factory=lambda: config.gradient_tolerance)
    residual_tolerance: float = field(default_factory=lambda: config.residual_tolerance)
    cluster_radius: float = field(default_factory=lambda: config.cluster_radius)
    progress: bool = False

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1:
            raise ParameterError("restarts and max_iterations must be >= 1")
        if min(self.gradient_tolerance, self.residual_tolerance, self.cluster_radius) <= 0:
            raise ParameterError("tolerances and cluster radius must be > 0")


@dataclass
class RestartOutcome:
    index: int
    W: np.ndarray
    residual: float
    iterations: int
    converged: bool
    stalled: bool = False


@dataclass
class RecoveredPlane:
    plane: Plane
    residual: float
    restarts: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"plane": self.plane.to_json(), "residual": self.residual, "restarts": self.restarts}


@dataclass
class RecoveryResult:
    """Cluster representatives sorted by residual, plus run diagnostics"""
    clusters: List[RecoveredPlane]
    diagnostics: Dict[str, object]

    def planes(self) -> List[Tuple[Plane, float]]:
        return [(c.plane, c.residual) for c in self.clusters]

    def to_dict(self) -> dict:
        return {"clusters": [c.to_dict() for c in self.clusters], "diagnostics": self.diagnostics}


def _descend(W: np.ndarray, linear, quadrics, opts: RecoveryOptions, scale: float, index: int) -> RestartOutcome:
    value, egrad = stationarity_objective(W, linear, quadrics)
    grad = _tangent_projection(W, egrad)
    step = 1.0 / scale
    previous = None
    for iteration in range(opts.max_iterations):
        gnorm2 = float(np.sum(grad * grad))
        if math.sqrt(gnorm2) <= opts.gradient_tolerance * scale:
            return RestartOutcome(index, W, value, iteration, True)
        if previous is not None:
            # Barzilai-Borwein initial step
            dW, dG = W - previous[0], grad - previous[1]
            curvature = abs(float(np.sum(dW * dG)))
            if curvature > 0:
                step = float(np.sum(dW * dW)) / curvature
        t = step
        while True:
            candidate = _retract(W - t * grad)
            new_value, new_egrad = stationarity_objective(candidate, linear, quadrics)
            if new_value <= value - 1e-4 * t * gnorm2:
                break
            t *= 0.5
            if t * math.sqrt(gnorm2) < 1e-16:
                # line search exhausted above the gradient tolerance
                return RestartOutcome(index, W, value, iteration, False, stalled=True)
        previous = (W, grad)
        W, value = candidate, new_value
        grad = _tangent_projection(W, new_egrad)
    return RestartOutcome(index, W, value, opts.max_iterations, False)


def _cluster(solutions: List[RestartOutcome], radius: float) -> List[RecoveredPlane]:
    clusters: List[RecoveredPlane] = []
    for outcome in sorted(solutions, key=lambda o: (o.residual, o.index)):
        plane = float_plane(outcome.W)
        for cluster in clusters:
            if subspace_distance(cluster.plane, plane)[0] <= radius:
                cluster.restarts.append(outcome.index)
                break
        else:
            clusters.append(RecoveredPlane(plane, outcome.residual, [outcome.index]))
    return clusters


def recover_subspace(linear_forms: Sequence[np.ndarray], quadrics: Sequence[np.ndarray], k: int,
                     opts: Optional[RecoveryOptions] = None, rng=None) -> RecoveryResult:
    """Multi-start Riemannian descent on the Stiefel manifold, clustered by chordal distance"""
    opts = opts or RecoveryOptions()
    rng = _as_rng(rng)
    linear = [np.asarray(l, dtype=float).ravel() for l in linear_forms]
    grams = [np.asarray(G, dtype=float) for G in quadrics]
    sizes = {l.size for l in linear} | {G.shape[0] for G in grams}
    if len(sizes) > 1:
        raise ParameterError(f"forms live in different ambient spaces: {sorted(sizes)}")
    size = sizes.pop() if sizes else 0
    diagnostics: Dict[str, object] = {"restarts": opts.restarts, "ambient": size, "k": k}
    if size and not 0 <= k < size - 1:
        raise ParameterError(f"need 0 <= k < n, got n={size - 1}, k={k}")
    scale = sum(float(np.sum(G * G)) for G in grams) + sum(float(l @ l) for l in linear)
    diagnostics["scale"] = scale
    if scale == 0.0:
        logger.warning("objective is identically zero: every plane is a solution")
        diagnostics.update(converged=0, accepted=0, message="zero system: objective identically 0")
        return RecoveryResult([], diagnostics)

    seeds = rng.integers(0, 2 ** 63 - 1, size=opts.restarts)
    outcomes = []
    for index, seed in enumerate(tqdm(seeds, desc="Restarts", unit="restart", disable=not opts.progress)):
        start_rng = np.random.default_rng(int(seed))
        W0 = _retract(start_rng.standard_normal((k + 1, size)))
        outcomes.append(_descend(W0, linear, grams, opts, scale, index))

    converged = [o for o in outcomes if o.converged]
    stalled = [o for o in outcomes if o.stalled]
    threshold = opts.residual_tolerance * scale
    accepted = [o for o in converged + stalled if o.residual < threshold]
    clusters = _cluster(accepted, opts.cluster_radius)
    diagnostics.update(
        converged=len(converged),
        stalled=len(stalled),
        accepted=len(accepted),
        best_residual=min(o.residual for o in outcomes),
        residual_threshold=threshold,
        iterations=[o.iterations for o in outcomes],
    )
    capped = len(outcomes) - len(converged) - len(stalled)
    if stalled:
        logger.debug(f"{len(stalled)} restart(s) stalled in the line search before the gradient tolerance")
    if capped:
        logger.warning(f"{capped} restart(s) hit the iteration cap")
    if not clusters:
        diagnostics["message"] = "no converged solution below the residual threshold"
        logger.warning(f"no solution below residual {threshold:.3e} (best {diagnostics['best_residual']:.3e})")
    else:
        diagnostics["message"] = f"{len(clusters)} cluster(s)"
        logger.info(f"recovered {len(clusters)} cluster(s) from {len(accepted)} accepted restart(s)")
    return RecoveryResult(clusters, diagnostics)


def recover_from_epochs(epochs: Sequence[EpochCumulants], k: int, opts: Optional[RecoveryOptions] = None,
                        rng=None, tol: Optional[float] = None, rank_tol: Optional[float] = None) -> RecoveryResult:
    """
    Difference system, ambient reduction, recovery downstairs, planes lifted back.

    tol drops numerically zero difference forms; rank_tol is the relative
    singular-value cutoff for the kernel of the linear forms.
    """
    system = difference_system(epochs, tol)
    base = {"dropped": system.dropped, "quadrics": len(system.quadrics)}
    if system.degenerate:
        return RecoveryResult([], {"message": "zero system: all epochs agree", **base})
    reduced, N = reduce_ambient(system.linear_forms, system.quadrics, k, rank_tol)
    n_eff = N.shape[1] - 1
    base["effective_n"] = n_eff
    if n_eff == k:
        # the kernel itself is the only candidate left
        W = N.T
        residual, _ = stationarity_objective(W, [], system.quadrics)
        clusters = [RecoveredPlane(float_plane(W), residual, [])]
        return RecoveryResult(clusters, {"message": "kernel of the linear forms", **base})
    if not reduced:
        logger.warning("no quadrics left after reduction: every plane in the kernel is a solution")
        return RecoveryResult([], {"message": "zero system: no quadrics after reduction", **base})
    result = recover_subspace([], reduced, k, opts, rng)
    for cluster in result.clusters:
        cluster.plane = float_plane(cluster.plane.basis.to_numpy() @ N.T)
    result.diagnostics.update(base)
    return result


# -- epoch data I/O -----------------------------------------------------------

def write_epoch_csv(path, samples: np.ndarray):
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    header = ",".join(f"x{j}" for j in range(samples.shape[1]))
    np.savetxt(path, samples, delimiter=",", header=header, comments="", fmt="%.17g")


def read_epoch_csv(path) -> np.ndarray:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if header != [f"x{j}" for j in range(len(header))]:
        raise ParameterError(f"{path}: header must be x0,...,xn, got {','.join(header)}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ParameterError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    return data


def read_population_json(path) -> SsaInstance:
    with open(path, "r", encoding="utf-8") as f:
        return SsaInstance.from_json(json.load(f))


def write_population_json(path, instance: SsaInstance):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance.to_json(), f, sort_keys=True, indent=2)
