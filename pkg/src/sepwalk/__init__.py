"""Random walk driven by a simple exclusion process: simulation and analysis."""

from .errors import (BackendError, ConfigError, DomainError, EllipticityError, HorizonError,
                     InsufficientData, InsufficientRecords, NoRenewalFound, RangeError,
                     SepwalkError, SpanError, WindowError)
from .model import (ModelParams, RegimeReport, ScaleSequences, epsilon, make_params, phi,
                    regime_report, scale_sequences)
from .engine import (EnvSnapshot, EnvState, advance, empirical_density, init_equilibrium,
                     init_profile, label_trace, occupancy, snapshot)
from .walker import EnvRecord, Trajectory, run_annealed, run_quenched_static
from .heat import box_kernels, heat_kernel, kernel_table, mean_evolution
from .renewal import (ConeParams, GoodSetQuery, RenewalRecord, check_forward, extract_renewals,
                      find_candidates, good_site, renewal_estimates, renewal_iid_tests)
from .static import (exit_left_prob, exit_prob_oracle, excursion_bracket, potential,
                     static_classify)
from .estimators import (Moments, SummaryStats, clt_diagnostics, gamma_scan, velocity_direct)
from .seeds import split_seed

__all__ = [
    "BackendError", "ConfigError", "DomainError", "EllipticityError", "HorizonError",
    "InsufficientData", "InsufficientRecords", "NoRenewalFound", "RangeError", "SepwalkError",
    "SpanError", "WindowError", "ModelParams", "RegimeReport", "ScaleSequences", "epsilon",
    "make_params", "phi", "regime_report", "scale_sequences", "EnvSnapshot", "EnvState",
    "advance", "empirical_density", "init_equilibrium", "init_profile", "label_trace",
    "occupancy", "snapshot", "EnvRecord", "Trajectory", "run_annealed", "run_quenched_static",
    "box_kernels", "heat_kernel", "kernel_table", "mean_evolution", "ConeParams",
    "GoodSetQuery", "RenewalRecord", "check_forward", "extract_renewals", "find_candidates",
    "good_site", "renewal_estimates", "renewal_iid_tests", "exit_left_prob",
    "exit_prob_oracle", "excursion_bracket", "potential", "static_classify", "Moments",
    "SummaryStats", "clt_diagnostics", "gamma_scan", "velocity_direct", "split_seed",
]
