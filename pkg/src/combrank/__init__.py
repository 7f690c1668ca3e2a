"""Randomization tests and simultaneous bounds for quantiles of individual treatment effects.

Rank-sum statistics (single or adaptively combined) are evaluated at worst-case
imputations of the unobserved potential outcomes, giving finite-sample valid
p-values in completely randomized and stratified experiments.
"""

from .cre import (
    CRETest,
    JointNull,
    MaxStdStatistic,
    MinPStatistic,
    NegTbarStatistic,
    QuantileHypothesis,
    RankSumStatistic,
    build_joint_null,
    flip_problem,
    pvalue_combined_max_std,
    pvalue_combined_neg_tbar,
    pvalue_min_calibrated,
    pvalue_single,
    rank_sum_statistic,
    worst_case_imputation,
)
from .intervals import BoundsTable, candidate_breakpoints, invert_quantile, pool_confidence, simultaneous_bounds
from .nulldist import DesignSpec, NullDistribution, build_null
from .ranks import RankTransform, apply_transform, compute_ranks, transform_moments
from .sre import (
    SRETest,
    StratifiedData,
    StratifiedStatisticSpec,
    WeightScheme,
    allocate_dp,
    allocate_minimax,
    build_infimum_table,
    pvalue_sre,
    stratified_statistic,
)

__version__ = "0.1.0"
