"""Semi-supervised label inference for few-shot episodes.

Query feature calibration, Poisson graph learning and volume-constrained MBO
refinement over a kNN graph, with a label-propagation baseline, the
contrastive transfer loss, and an episode benchmark harness.
"""

__version__ = "0.1.0"

from .config import SolverConfig, load_config
from .data import EpisodeData, FeaturePoint, FeaturePool, Role, l2_normalize, load_feature_file, load_pool, validate_episode
from .errors import ConfigError, DataError, FewShotError, NumericalError
from .pipeline import Method, infer

__all__ = [
    "ConfigError", "DataError", "EpisodeData", "FeaturePoint", "FeaturePool", "FewShotError", "Method",
    "NumericalError", "Role", "SolverConfig", "infer", "l2_normalize", "load_config", "load_feature_file",
    "load_pool", "validate_episode",
]
