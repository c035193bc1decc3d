"""Application configuration using pydantic-settings"""
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="LPREACH_",
        case_sensitive=False,
        extra="ignore"
    )

    # Application
    app_name: str = "LPReach"
    app_version: str = "0.1.0"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_to_file: bool = False
    log_dir: Path = Path("logs")
    log_retention: Optional[str] = None  # e.g. "7 days"; None keeps everything

    # Simplex tolerances
    eps_opt: float = 1e-9    # reduced-cost negativity
    eps_piv: float = 1e-9    # pivot magnitude
    eps_feas: float = 1e-7   # phase-1 infeasibility threshold
    tie_tol: float = 1e-12   # ratio-test tie window
    iteration_cap_factor: int = 50  # cap = factor * (n_c + m)

    # Batch execution
    batch_workers: int = 1
    batch_chunk_size: int = 256

    # Reachability
    enclose_steps: bool = True      # validated step enclosure in the embedding integrator
    reference_substeps: int = 10    # Euler sub-steps per dt for sampled reference trajectories
    containment_tol: float = 1e-9   # slack when checking sampled states against the tube

    # Feedforward nudging
    nudge_eta: float = 0.05
    nudge_max_outer_iters: int = 100
    nudge_backoff: float = 0.5

    # Outputs
    output_dir: Path = Path("out")


class SolverConfig(BaseModel):
    """Tolerances and iteration cap surfaced to the simplex kernel"""

    model_config = ConfigDict(frozen=True)

    eps_opt: float = Field(default=1e-9, gt=0, description="reduced-cost negativity threshold")
    eps_piv: float = Field(default=1e-9, gt=0, description="minimum admissible pivot magnitude")
    eps_feas: float = Field(default=1e-7, gt=0, description="phase-1 infeasibility threshold")
    tie_tol: float = Field(default=1e-12, ge=0, description="ratio-test tie window")
    iteration_cap_factor: int = Field(default=50, ge=1, description="cap = factor * (n_c + m)")
    iteration_cap: Optional[int] = Field(default=None, ge=0, description="explicit cap, overrides the factor")
    chunk_size: int = Field(default=256, ge=1, description="problems per batch chunk")

    @classmethod
    def from_settings(cls, source: Optional[Settings] = None) -> "SolverConfig":
        source = source or settings
        return cls(
            eps_opt=source.eps_opt,
            eps_piv=source.eps_piv,
            eps_feas=source.eps_feas,
            tie_tol=source.tie_tol,
            iteration_cap_factor=source.iteration_cap_factor,
            chunk_size=source.batch_chunk_size,
        )

    def cap_for(self, n_c: int, m: int) -> int:
        """Pivot budget shared by both phases"""
        if self.iteration_cap is not None:
            return self.iteration_cap
        return self.iteration_cap_factor * (n_c + m)


# Global settings instance
settings = Settings()
