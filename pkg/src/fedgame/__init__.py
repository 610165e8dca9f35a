"""Participation games for cross-silo federated learning.

Stage-game equilibria, cooperative profiles with fewer free riders, and the
grim-trigger equilibrium of the repeated game that sustains them.
"""

__version__ = "0.1.0"

from .core import (ClientProfile, GameConfig, StrategyProfile, accuracy_loss, best_response,
                   discounted_cost, h_value, make_config, total_cost)
from .stage import (Case, Role, StageEquilibrium, best_response_dynamics, classify_roles,
                    distributed_strategy, solve_ne, verify_ne)
from .cooperation import (CooperationBounds, CooperativeStrategy, Variant, build_coop,
                          compute_bounds, corollary_checks, find_l, solve_x_th)
from .spne import (Deviation, DeviationAnalysis, SpneResult, analyze_deviations, check_spne,
                   deviation_best_response, global_threshold, optimal_spne, simulate_repeated,
                   threshold_delta)
from .sweep import MetricsRow, Scenario, emit, run_scenario
