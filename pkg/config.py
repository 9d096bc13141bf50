import os
from dataclasses import dataclass, field
from typing import List, Optional
from pathlib import Path

__version__ = "0.3.1"

ENV_PREFIX = "FANOID_"
OUTPUT_FORMATS = ("json", "csv", "table")
COMMANDS = ("dims", "gen", "tangent", "census", "ssa-gen", "ssa-report", "ssa-recover")


def load_env_file(path: str = ".env"):
    """Load environment variables from .env file"""
    env_file = Path(path)
    if env_file.exists():
        with open(env_file, 'r', encoding='utf-8') as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith('#') and '=' in line:
                    key, value = line.split('=', 1)
                    os.environ.setdefault(key.strip(), value.strip())


def _env(name: str, default, cast=str):
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    if cast is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return cast(raw)


# Load .env file at module import
load_env_file()


@dataclass
class Config:
    """Library-wide defaults; every value can be overridden with FANOID_<NAME>"""

    # Reproducibility
    seed: int = field(default_factory=lambda: _env("SEED", 0, int))
    trials: int = field(default_factory=lambda: _env("TRIALS", 20, int))
    acceptance_rate: float = field(default_factory=lambda: _env("ACCEPTANCE_RATE", 0.9, float))

    # Numerics
    tolerance: float = field(default_factory=lambda: _env("TOLERANCE", 1e-8, float))
    zero_form_tolerance: float = field(default_factory=lambda: _env("ZERO_FORM_TOLERANCE", 1e-10, float))

    # Conditionally generic sampling
    coefficient_bound: int = field(default_factory=lambda: _env("BOUND", 1000, int))
    resample_attempts: int = field(default_factory=lambda: _env("RESAMPLE_ATTEMPTS", 100, int))

    # Finite-field enumeration
    budget: int = field(default_factory=lambda: _env("BUDGET", 10 ** 7, int))
    chunk_size: int = field(default_factory=lambda: _env("CHUNK_SIZE", 1 << 17, int))

    # Subspace recovery
    restarts: int = field(default_factory=lambda: _env("RESTARTS", 50, int))
    max_iterations: int = field(default_factory=lambda: _env("MAX_ITERATIONS", 10 ** 4, int))
    gradient_tolerance: float = field(default_factory=lambda: _env("GRADIENT_TOLERANCE", 1e-10, float))
    residual_tolerance: float = field(default_factory=lambda: _env("RESIDUAL_TOLERANCE", 1e-12, float))
    cluster_radius: float = field(default_factory=lambda: _env("CLUSTER_RADIUS", 1e-4, float))

    # Output
    output_format: str = field(default_factory=lambda: _env("FORMAT", "table"))
    progress: bool = field(default_factory=lambda: _env("PROGRESS", True, bool))
    logs_folder: Optional[str] = field(default_factory=lambda: _env("LOGS_FOLDER", None))

    def validate(self) -> bool:
        """Validate that all settings are usable"""
        return not self.get_invalid_settings()

    def get_invalid_settings(self) -> List[str]:
        """Get list of settings with unusable values"""
        invalid = []
        if self.trials < 1:
            invalid.append("trials")
        if not 0.0 < self.acceptance_rate <= 1.0:
            invalid.append("acceptance_rate")
        for name in ("tolerance", "zero_form_tolerance", "gradient_tolerance",
                     "residual_tolerance", "cluster_radius"):
            if getattr(self, name) <= 0:
                invalid.append(name)
        if self.coefficient_bound < 1:
            invalid.append("coefficient_bound")
        if self.budget < 1 or self.chunk_size < 1:
            invalid.append("budget" if self.budget < 1 else "chunk_size")
        if self.restarts < 1 or self.max_iterations < 1:
            invalid.append("restarts" if self.restarts < 1 else "max_iterations")
        if self.output_format not in OUTPUT_FORMATS:
            invalid.append("output_format")
        return invalid


@dataclass
class RunConfig:
    """Settings of a single command-line invocation"""

    command: str
    seed: int = 0
    scalar_field: str = "rational"
    trials: int = 20
    q: Optional[int] = None
    tolerance: float = 1e-8
    format: str = "table"
    budget: int = 10 ** 7
    output: Optional[str] = None
    allow_large: bool = False

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        """Build from an argparse namespace, falling back to the Config defaults"""
        def pick(name, default):
            value = getattr(args, name, None)
            return default if value is None else value

        return cls(
            command=args.command,
            seed=pick("seed", config.seed),
            scalar_field=pick("field", "rational"),
            trials=pick("trials", config.trials),
            q=getattr(args, "q", None),
            tolerance=pick("tolerance", config.tolerance),
            format=pick("format", config.output_format),
            budget=pick("budget", config.budget),
            output=getattr(args, "output", None),
            allow_large=bool(getattr(args, "allow_large", False)),
        )

    def __post_init__(self):
        from models import ParameterError

        if self.command not in COMMANDS:
            raise ParameterError(f"unknown command '{self.command}'")
        if self.format not in OUTPUT_FORMATS:
            raise ParameterError(f"format must be one of {', '.join(OUTPUT_FORMATS)}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.tolerance <= 0:
            raise ParameterError("tolerance must be > 0")
        if self.budget < 1:
            raise ParameterError("budget must be >= 1")

    def provenance(self, **parameters) -> dict:
        """Provenance block embedded in every report"""
        return {
            "tool": "fano-identifiability",
            "version": __version__,
            "command": self.command,
            "seed": self.seed,
            "parameters": parameters,
        }


# Global config instance
config = Config()

if __name__ == "__main__":
    print("Debug - effective configuration:")
    for name, value in vars(config).items():
        print(f"  {name}: {value}")
    print(f"Config validation: {config.validate()}")
