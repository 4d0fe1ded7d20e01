"""Free-boundary identification with cut finite elements on a fixed mesh."""

from .driver import EXPERIMENTS, RunConfig, make_config, run_identification
from .mesh import build_uniform_mesh

__all__ = ["EXPERIMENTS", "RunConfig", "make_config", "run_identification",
           "build_uniform_mesh"]
