"""Agent-based simulation of competing information bots on social networks.

The package has four layers: ``network`` (small-world / random graph
generation and metrics), ``engine`` (the tick-level simulation),
``experiments`` (named replicated sweeps with CSV persistence) and
``stats`` (ANOVA, OLS, power analysis and response surfaces used to
analyze sweep output). ``cli`` wires them into the ``misinfosim``
command.
"""

from .engine import (AgentRole, DefenderBasis, RunOutcome, SimParams, SimState,
                     TickStats, init_simulation, run_params, run_to_completion,
                     step)
from .errors import (ParameterError, RecordParseError, SingularDesignError,
                     StateError, SweepError)
from .experiments import (ConditionSummary, RunRecord, SweepSpec,
                          build_experiment, derive_seed, read_records_csv,
                          run_sweep, summarize, write_records_csv,
                          write_summary_csv)
from .network import (Network, SmallWorldSpec, clustering_coefficient,
                      generate_erdos_renyi, generate_small_world,
                      largest_component, mean_path_length)
from .stats import (AnovaTable, BoxExtrema, LinearFit, PowerSolution,
                    QuadraticSurface, StationaryPoint, anova_factor_covariate,
                    anova_oneway, anova_power, anova_power_required_n,
                    anova_sequential, cohens_f_from_eta2, eta_squared, f_cdf,
                    f_isf, f_sf, fit_quadratic_surface,
                    mc_anova_rejection_rate, mc_power_rejection_rate,
                    noncentral_f_cdf, ols_fit, surface_extrema_on_box,
                    surface_from_coefficients, surface_stationary_point,
                    t_two_sided_p)

__version__ = "0.1.0"

__all__ = [
    "AgentRole", "DefenderBasis", "RunOutcome", "SimParams", "SimState",
    "TickStats", "init_simulation", "run_params", "run_to_completion", "step",
    "ParameterError", "RecordParseError", "SingularDesignError", "StateError",
    "SweepError",
    "ConditionSummary", "RunRecord", "SweepSpec", "build_experiment",
    "derive_seed", "read_records_csv", "run_sweep", "summarize",
    "write_records_csv", "write_summary_csv",
    "Network", "SmallWorldSpec", "clustering_coefficient",
    "generate_erdos_renyi", "generate_small_world", "largest_component",
    "mean_path_length",
    "AnovaTable", "BoxExtrema", "LinearFit", "PowerSolution",
    "QuadraticSurface", "StationaryPoint", "anova_factor_covariate",
    "anova_oneway", "anova_power", "anova_power_required_n",
    "anova_sequential", "cohens_f_from_eta2", "eta_squared", "f_cdf", "f_isf",
    "f_sf", "fit_quadratic_surface", "mc_anova_rejection_rate",
    "mc_power_rejection_rate", "noncentral_f_cdf", "ols_fit",
    "surface_extrema_on_box", "surface_from_coefficients",
    "surface_stationary_point", "t_two_sided_p",
    "__version__",
]
