"""Joint client/relay/AP association for mmWave networks with log-utility fairness."""

from .allocation import (Association, AllocationResult, Direct, Relayed, allocate,
                         check_feasible, objective, optimal_fractions, optimal_rates)
from .auction import (AssignmentInstance, Scheduler, brute_force_assignment,
                      reduce_to_assignment, run_auction, utility_table, verify_eps_cs)
from .channel import ChannelParams, RateMatrix, build_rate_matrix, capacity, eta_rate
from .dual import SolverParams, Solution, load_biasing_estimate, solve_dst, solve_lb
from .errors import ConfigError, EnumerationLimitError, InfeasibleLinkError, UnservableNodeError
from .estimators import (DSTAssociation, LoadBiasedAssociation, OptimalAssociation,
                         RandomAssociation, RSSIAssociation)
from .harness import ExperimentConfig, load_config, run_experiment
from .metrics import RunReport, jain_index, rate_cdf, summarize
from .policies import (BackupPlan, PolicyId, backup_association, optm_bruteforce,
                       rand_policy, rssi_policy, run_policy)
from .topology import (LinkVisibility, Node, Scenario, ScenarioConfig, generate_scenario,
                       visibility)

__version__ = "0.1.0"
