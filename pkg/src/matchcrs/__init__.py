"""Contention resolution schemes for matchings.

Library + CLI for building and empirically verifying pick-one selection
rules, bipartite matching schemes (0.480 / 0.468 / 0.509-balanced), the
degree-1 greedy matching experiments on random trees, and configuration-LP
rounding for grid allocation.
"""

__version__ = "0.1.0"

from .errors import (CalibrationInsufficient, DegreeCapExceeded,  # noqa: F401
                     EdgeNeverAppears, Infeasible, InputError, MatchCrsError,
                     NotATree, TooLarge)
from .graphs import (DoublyStochasticMatrix, FractionalMatching,  # noqa: F401
                     Graph, complete_loads, gen_birkhoff, gen_uniform_knn,
                     load_instance, save_instance, validate)
from .sampling import RngStream, sample_r, sample_r_planted  # noqa: F401
from .select_one import (SelectionRule, SubsetDistribution,  # noqa: F401
                         TargetMarginals, build_rule, monotonize)
from .schemes import (ColoredState, RbgScheme, SchemeConstants,  # noqa: F401
                      SimpleScheme, TwoStageScheme, compute_constants,
                      rbg_scheme, simple_scheme, two_stage_scheme)
from .karp_sipser import (check_lw_claims, ks_first_stage,  # noqa: F401
                          lw_label, max_matching)
from .gw_tree import (GwTree, LambdaConstants,  # noqa: F401
                      component_distribution_probe, estimate_root_edge_prob,
                      sample_tree, solve_lambda)
from .evaluation import (check_lem_bound, conjecture_probe,  # noqa: F401
                         density_experiment, exact_balancedness,
                         mc_balancedness)
from .allocation import (AllocationInstance, ConfigSolution,  # noqa: F401
                         round_solution, solve_config_lp)
