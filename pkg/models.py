from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple
from enum import Enum


class FanoToolError(Exception):
    """Base class for all errors raised by the toolkit"""


class ParameterError(FanoToolError, ValueError):
    """A precondition was violated; the message names the hypothesis"""


class UnsupportedRegime(ParameterError):
    """Inputs outside the hypotheses under which the theory applies"""


class InfeasibleSystem(ParameterError):
    """Linear constraints leave no room for a k-plane"""


class BudgetExceeded(FanoToolError):
    """An enumeration would exceed the configured budget"""


class ContractViolation(FanoToolError, RuntimeError):
    """A contract between caller and callee (or a postcondition) failed"""


@dataclass(frozen=True)
class MultiDegree:
    """The tuple d = (d_1, ..., d_s) of hypersurface degrees"""
    degrees: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))
        if not self.degrees:
            raise ParameterError("multidegree must contain at least one degree")
        if any(d < 2 for d in self.degrees):
            raise ParameterError(f"every degree must be >= 2, got {self.degrees}")

    @classmethod
    def parse(cls, text: str) -> "MultiDegree":
        """Parse '2,2,3' style input"""
        try:
            return cls(tuple(int(part) for part in text.replace(" ", "").split(",") if part))
        except ValueError:
            raise ParameterError(f"cannot parse multidegree '{text}'")

    @classmethod
    def quadrics(cls, s: int) -> "MultiDegree":
        return cls((2,) * s)

    @property
    def s(self) -> int:
        return len(self.degrees)

    @property
    def is_single_quadric(self) -> bool:
        return self.degrees == (2,)

    def require_not_single_quadric(self):
        """A single quadric lies outside the identifiability results"""
        if self.is_single_quadric:
            raise UnsupportedRegime("d = (2): a single quadric is excluded by the theory's standing assumption")

    def __str__(self):
        return "(" + ",".join(str(d) for d in self.degrees) + ")"


@dataclass(frozen=True)
class FanoParams:
    """Parameters (n, d, k) of the Fano scheme F_k(V(f)) in P^n"""
    n: int
    k: int
    d: MultiDegree

    def __post_init__(self):
        if not 0 <= self.k < self.n:
            raise ParameterError(f"need 0 <= k < n, got n={self.n}, k={self.k}")

    @property
    def s(self) -> int:
        return self.d.s

    @property
    def grassmannian_dim(self) -> int:
        return (self.k + 1) * (self.n - self.k)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "degrees": list(self.d.degrees)}


@dataclass(frozen=True)
class StratRow:
    """One stratum F_{k,k'} of the Fano scheme"""
    k_prime: int
    expected_dim: int
    schubert_lambda: Tuple[int, ...]
    schubert_codim: int
    incidence_dim: int
    ambient_dim: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "k_prime": self.k_prime,
            "expected_dim": self.expected_dim,
            "schubert_lambda": list(self.schubert_lambda),
            "schubert_codim": self.schubert_codim,
            "incidence_dim": self.incidence_dim,
            "ambient_dim": self.ambient_dim,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class DifferenceRow:
    """Forward differences of the stratum dimensions at k'"""
    k_prime: int
    delta1: int
    delta2: int

    def to_dict(self) -> dict:
        return {"k_prime": self.k_prime, "delta1": self.delta1, "delta2": self.delta2}


@dataclass(frozen=True)
class EpochThresholds:
    """Smallest number s of epoch differences per identifiability criterion"""
    delta_based: int
    closed_form: int
    coarse_bound: Optional[int]

    @property
    def discrepancy(self) -> bool:
        return self.delta_based != self.closed_form


class Classification(Enum):
    UNIQUE_PLANE_CERTIFIED_LOCALLY = "unique_plane_certified_locally"
    EXPECTED_DIM_MET = "expected_dim_met"
    TANGENT_EXCESS = "tangent_excess"


@dataclass(frozen=True)
class FanoVerdict:
    """Local dimension verdict at a plane of the Fano scheme"""
    delta: int
    tangent_dim: int
    classification: Classification

    @property
    def is_generic(self) -> bool:
        return self.classification != Classification.TANGENT_EXCESS

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "tangent_dim": self.tangent_dim,
            "classification": self.classification.value,
        }


@dataclass(frozen=True)
class IdentifiabilityReport:
    """delta, verdict and epoch thresholds for an SSA configuration"""
    n: int
    k: int
    s: int
    r: Optional[int]
    delta: int
    identifiable: bool
    delta_threshold: int
    closed_form_threshold: int
    coarse_threshold: Optional[int]
    discrepancy_flag: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n, "k": self.k, "s": self.s, "r": self.r,
            "delta": self.delta,
            "identifiable": self.identifiable,
            "delta_threshold": self.delta_threshold,
            "closed_form_threshold": self.closed_form_threshold,
            "coarse_threshold": self.coarse_threshold,
            "discrepancy_flag": self.discrepancy_flag,
        }


@dataclass
class TrialOutcome:
    """Result of one seeded conditional-genericity trial"""
    seed: int
    verdict: Optional[FanoVerdict] = None
    census_count: Optional[int] = None
    strata: Dict[int, int] = field(default_factory=dict)
    extra_planes: List[list] = field(default_factory=list)
    point_tangent_dims: List[int] = field(default_factory=list)
    passed: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "census_count": self.census_count,
            "strata": {str(key): value for key, value in sorted(self.strata.items())},
            "extra_planes": self.extra_planes,
            "point_tangent_dims": self.point_tangent_dims,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass
class TrialSummary:
    """Statistics for a batch of seeded trials"""
    claim: str
    outcomes: List[TrialOutcome] = field(default_factory=list)
    required_rate: float = 0.9

    @property
    def total_trials(self) -> int:
        return len(self.outcomes)

    @property
    def passed_trials(self) -> int:
        return sum(1 for outcome in self.outcomes if outcome.passed)

    @property
    def exceptions(self) -> List[TrialOutcome]:
        return [outcome for outcome in self.outcomes if not outcome.passed]

    @property
    def success_rate(self) -> float:
        if self.total_trials == 0:
            return 0.0
        return (self.passed_trials / self.total_trials) * 100

    @property
    def accepted(self) -> bool:
        return self.total_trials > 0 and self.passed_trials >= self.required_rate * self.total_trials

    def summary(self) -> str:
        return (
            f"Trial Summary ({self.claim}):\n"
            f"  Total trials: {self.total_trials}\n"
            f"  Passed: {self.passed_trials} ({self.success_rate:.1f}%)\n"
            f"  Exceptions: {len(self.exceptions)}\n"
            f"  Accepted: {self.accepted}"
        )

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "total": self.total_trials,
            "passed": self.passed_trials,
            "required_rate": self.required_rate,
            "accepted": self.accepted,
            "trials": [outcome.to_dict() for outcome in self.outcomes],
        }
