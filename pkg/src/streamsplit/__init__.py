"""Optimal and approximately optimal decision-tree splits over data streams."""

from .classification import (EstimatedLossCurve, additive_cls_split_1pass, categorical_additive,
                             estimated_loss_curve, exact_label_counts_pass, multiplicative_cls_split,
                             multiplicative_cls_split_lowpass)
from .driver import (ALGORITHMS, MultiAttributeResult, Params, RunReport, run_algorithm, run_mpc,
                     run_multi_attribute, sweep)
from .errors import BudgetViolation, GuaranteeViolation, GuardViolation, InputError, StreamSplitError
from .mpc import (BoundaryAudit, Cluster, MachineShard, RoundLedger, distribute, mpc_bucket_aggregates,
                  mpc_classification, mpc_regression_additive, mpc_regression_multiplicative, mpc_sort)
from .oracle import (CategoricalPartition, ClsSplitEvaluation, LabelRangeCounts, OptResult,
                     SplitEvaluation, check_monotonicity, check_split_shift, oracle, oracle_categorical,
                     oracle_classification, oracle_regression)
from .regression import (BucketAggregates, CandidateSplitSet, DistinctValueAccumulators,
                         additive_split_2pass, build_candidates, classify_guess_case, exact_split_1pass,
                         guess_grid, multiplicative_split, multiplicative_split_lowpass)
from .search import Case, Guess, GuessSearch
from .sketch import (DyadicCountMin, RangeEstimate, SampleSet, dyadic_range, dyadic_update, estimate_range,
                     sample_pass, verify_threshold_separation)
from .stream import (Dataset, DatasetMeta, GeneratorSpec, Mode, MultiDataset, Observation, StreamHandle,
                     generate, open_stream, read_dataset, write_dataset)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
