"""Time-varying space-time Gaussian process models: covariances, random
composite likelihood fitting, kriging and forecast verification."""

from .errors import (ConfigError, DataError, DomainError, EvaluationError,
                     FactorizationError, NumericalError, ScaleError, TvgmError)
from .gp import Dataset, PredictiveDistribution, full_loglik, krige, simulate_gp
from .kernels import (GneitModel, LogPolyFn, SepModel, SpaceTimePoint, TvarModel,
                      build_cov_matrix, cov_eval, model_from_dict, model_to_dict)
from .rcl import ModelSpec, fit, make_partitions, rcl_loglik

__version__ = "0.1.0"
