"""Spatial SIR epidemics with varying infectivity: exact agent simulation,
deterministic limit solver and convergence experiments."""

from .agents import (
    EmpiricalTrajectory,
    EventLog,
    Population,
    coupling_discrepancy,
    force_of_infection,
    init_population,
    measure_eval,
    population_from_arrays,
    simulate,
)
from .config import RunConfig, default_config, load_config, parse_config
from .experiments import (
    ConvergenceReport,
    TestFunctionSuite,
    TruncationReport,
    emit_report,
    lln_experiment,
    truncation_experiment,
)
from .geometry import (
    BaselineDensity,
    CompartmentLaw,
    DomainSpec,
    KernelSpec,
    PartitionSpec,
    SpatialModel,
    kernel_eval,
    operator_bound_constants,
    partition_cells,
)
from .infectivity import (
    CohortLaw,
    CurveFamily,
    DurationLaw,
    InfectivityModel,
    duration_cdf,
    mean_curve,
    sample_curve,
)
from .limit import LimitFields, apriori_check, pi_n, solve

__version__ = "0.1.0"
