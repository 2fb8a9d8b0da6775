"""Ensemble sampling, partisan metrics and local outlier tests for districting plans."""

__version__ = "0.1.0"

from .dualgraph import (DualGraph, Partition, VoteModel, Violation, GraphFormatError,
                        DisconnectedGraphError, load_dual_graph, save_dual_graph, make_grid_graph,
                        population_bounds, validate_partition, cut_edge_count)
from .metrics import (MetricKind, ElectionTally, SeatsVotesCurve, tally, mean_median,
                      seats_votes_curve, partisan_bias, partisan_gini, efficiency_gap,
                      efficiency_gap_from_shares, safe_seats, label)
from .chains import (ChainConfig, EnsembleLog, InfeasiblePlanError, flip_step, flip_walk,
                     recom_step, random_spanning_tree, seed_plan, run_neutral_chain)
from .biasing import BiasRunConfig, hill_climb, short_burst, run_biased
from .outlier import (OutlierTestConfig, TrajectoryResult, cfmp_p_value, is_upper_epsilon_outlier,
                      outlier_test)
from .power import (PowerExperiment, PowerReport, AsymptoticFit, power_analysis, fit_power_curve,
                    wilson_interval, sweep)
