"""Distributed canonical correlation analysis on a simulated star network."""
from .baselines import CanonicalBasis, naive_dc, pooled_cca, whitened_dc
from .cluster import Cluster, CovarianceTriple, MessageLedger, shard
from .metrics import (ReferenceFrame, diagnostics, gapfree_error_top, gapfree_error_topL,
                      pooled_frame, population_frame, sine_distance, wilks_lambda)
from .solver import SolverConfig, solve_top_L, solve_top_pair
from .synthetic import Dataset, PopulationModel, gen_population, sample

__version__ = "0.1.0"
