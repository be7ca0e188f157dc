"""Diffusion sampling as approximate gradient descent on the squared distance to a data set."""
__version__ = "0.1.0"

from .geometry import PointCloud, Sphere, distance, project, smoothed_sq_distance  # noqa: E402
from .denoisers import ErrorModel, IdealDenoiser, ExactProjectionDenoiser  # noqa: E402
from .schedules import NoiseSchedule, beta_star, is_admissible  # noqa: E402
from .samplers import SamplerSpec, run  # noqa: E402

__all__ = ["PointCloud", "Sphere", "distance", "project", "smoothed_sq_distance", "ErrorModel", "IdealDenoiser",
           "ExactProjectionDenoiser", "NoiseSchedule", "beta_star", "is_admissible", "SamplerSpec", "run"]
