"""Run configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .sparse import default_lambda


@dataclass
class AnalysisConfig:
    """Every tunable of the shape analysis.

    ``lam`` and ``tau_p`` are derived when left as ``None``: lambda from the
    dictionary size, tau_p as the median nearest-neighbour distance of the
    input. ``lpf_stride`` switches seeding from Poisson sampling to one LPF
    per ``lpf_stride``-th point. ``invalid_factor`` (unset by default) masks
    pattern points probed farther than ``invalid_factor * max(tau_s, tau_p)``
    in the pattern plane. ``pose_starts`` (1 to 3) is the number of
    orthogonal initial orientations tried per LPF. Resampling merges
    reconstructed points closer than ``max(tau_p, consolidation_factor * step)``
    where ``step`` is the pattern spacing.
    """

    r: float = 1.0
    pattern: str = "grid"
    grid_n: int = 16
    m: int = 193
    d: int = 16
    lam: float | None = None
    target_radius_factor: float = 1.1
    tau_p: float | None = None
    outer_iters: int = 10
    dict_iters: int = 10
    pose_iters: int = 20
    pose_tol: float = 1e-4
    rejection_factor: float = 0.5
    coverage_factor: float = 1.1
    invalid_factor: float | None = None
    pose_starts: int = 3
    consolidation_factor: float = 0.915
    lpf_stride: int | None = None
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.target_radius_factor < 1:
            raise ValueError("target_radius_factor must be >= 1")
        if self.tau_p is not None and not self.tau_p > 0:
            raise ValueError("tau_p must be positive")
        if self.pattern not in ("grid", "random"):
            raise ValueError(f"unknown pattern kind {self.pattern!r}")
        if self.outer_iters < 0 or self.dict_iters < 1 or self.pose_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if not 0 < self.rejection_factor <= self.coverage_factor:
            raise ValueError("need 0 < rejection_factor <= coverage_factor")
        if self.invalid_factor is not None and not self.invalid_factor > 0:
            raise ValueError("invalid_factor must be positive")
        if self.pose_starts not in (1, 2, 3):
            raise ValueError("pose_starts must be 1, 2 or 3")
        if not self.consolidation_factor > 0:
            raise ValueError("consolidation_factor must be positive")
        if self.lpf_stride is not None and self.lpf_stride < 1:
            raise ValueError("lpf_stride must be >= 1")

    @property
    def resolved_lambda(self) -> float:
        return default_lambda(self.d) if self.lam is None else float(self.lam)

    def streams(self, n: int = 4):
        """Independent generators split from the run seed."""
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.seed).spawn(n)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown analysis config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class DenoiseConfig:
    """Denoising settings. ``stop_tol`` defaults to 0.01 tau_p; ``proposal``
    picks how a point is projected through an LPF (see ``propose_position``)."""

    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    gamma: float = 0.5
    outer_rounds: int = 5
    stop_tol: float | None = None
    proposal: str = "full"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.outer_rounds < 1:
            raise ValueError("outer_rounds must be >= 1")
        if self.proposal not in ("height", "full", "sample"):
            raise ValueError(f"unknown proposal mode {self.proposal!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DenoiseConfig":
        data = dict(data)
        analysis = AnalysisConfig.from_dict(data.pop("analysis", {}))
        return cls(analysis=analysis, **data)


def dumps(cfg) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)
