"""Adaptive model tuning and comparison by racing repeated cross-validation."""

from .data import (Dataset, FoldPlan, Observation, generate_synthetic, load_csv,
                   make_fold_plan, write_csv)
from .exceptions import ConfigError, ConvergenceError, CVRaceError, DataError
from .metrics import (ContributionVector, MetricSpec, PredictionVector, custom_metric,
                      evaluate, hit_contributions, hits_at_T, hits_metric, ie_metric,
                      initial_enhancement, misclass_metric, mse_metric, parse_metric)
from .models import (FittedModel, ModelSpec, cross_validate, expand_grid, fit, predict,
                     register_family)
from .race import (CompareResult, CvCache, RaceConfig, RaceTrace, check_p0_stop,
                   exhaustive_means, fit_count, race, race_algorithm1, race_algorithm2,
                   race_algorithm3, simultaneous_race, tune_then_compare)
from .stats import (ScoreMatrix, TukeyOutcome, block_anova_mse, block_means,
                    studentized_range_cdf, studentized_range_quantile, tukey_eliminate,
                    tukey_value)

__version__ = "0.1.0"
