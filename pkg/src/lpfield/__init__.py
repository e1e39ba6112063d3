"""Local probing fields: sparse shape analysis, resampling and denoising of point sets."""

from .analysis import AnalysisState, analyze
from .config import AnalysisConfig, DenoiseConfig
from .denoise import denoise
from .geom import PointCloud
from .pattern import Pattern, make_pattern
from .resample import resample

__all__ = ["AnalysisConfig", "AnalysisState", "DenoiseConfig", "Pattern", "PointCloud", "analyze", "denoise",
           "make_pattern", "resample"]
__version__ = "0.1.0"
