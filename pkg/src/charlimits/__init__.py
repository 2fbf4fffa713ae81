"""Pointwise limits of characters on compact abelian groups.

Exact character arithmetic on the circle, products of cyclic groups and the
p-adic integers; nice partitions and thin sequences; witness points with
prescribed limit behaviour; finite-stage convergence verdicts; Monte Carlo
checks of the Haar-null statements.
"""

__version__ = "0.1.0"

from .circle import IDENTITY, Angle, PiMultiple, arc_distance, chord_bounds, compare_chord
from .density import IndexSet, check_stat_cesaro, density_prefix, parse_index_set
from .groups import (Character, GroupSpec, Point, base_metric, evaluate, haar_sample,
                     parse_character, parse_point)
from .measure import ExperimentConfig, df_null_experiment, lem_measure_check, weyl_experiment
from .partitions import build_nice_partition, check_niceness, thin_select
from .sequences import parse_sequence
from .verdict import Verdict, VerdictKind
from .witnesses import (EvasionProblem, cb_builder, df_membership, dense_witness, diagonal_evade,
                        membership, split_witness)

__all__ = [
    "IDENTITY", "Angle", "PiMultiple", "arc_distance", "chord_bounds", "compare_chord",
    "IndexSet", "check_stat_cesaro", "density_prefix", "parse_index_set",
    "Character", "GroupSpec", "Point", "base_metric", "evaluate", "haar_sample",
    "parse_character", "parse_point",
    "ExperimentConfig", "df_null_experiment", "lem_measure_check", "weyl_experiment",
    "build_nice_partition", "check_niceness", "thin_select",
    "parse_sequence", "Verdict", "VerdictKind",
    "EvasionProblem", "cb_builder", "df_membership", "dense_witness", "diagonal_evade",
    "membership", "split_witness",
]
