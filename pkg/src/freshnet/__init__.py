"""freshnet: age-of-information-optimal scheduling for interference-limited
slotted networks, discrete-time queue age calculus, and a verifying simulator.
"""

from .errors import (EnumerationCapError, FreshnetError, NoBracketError,
                     OracleBudgetError, SimulationConfigError,
                     UnboundedAgeError, UncoveredLinkError, UnstableQueueError)
from .network import (ActivationSetFamily, FeasibilityResult, NetworkSpec,
                      check_feasible, load_network, matchings_of_graph,
                      maximal_sets, network_from_config)
from .optimizer import (OptimalityCertificate, SchedulePolicy, certify,
                        peak_age_of, solve_general, solve_klink,
                        stationary_age_analytic)
from .queues import (AgePair, ArrivalProcess, QueueModel, alpha_star,
                     berber1_age, dber1_age, delta_gap, dm1_bound,
                     factor_bounds, gber1_age, mm1_bound, optimal_rho,
                     sigma_hat, sigma_star)
from .simulator import (AgeMetrics, Distributed, RoundRobin, Sources,
                        StationaryCentralized, StationaryMarginal,
                        UniformStationary, measure_frequencies, replicate, run)
from .spp import (SppConfig, additive_gap_check, build_spp,
                  joint_oracle_optimum, multiplicative_bound_report,
                  spp_analytic_age)
from .experiments import (experiment_fig2, experiment_fig3_4, experiment_fig6,
                          buffered_optimum_klink, pattern_network, queue_sweep,
                          random_instance, verify_all)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
