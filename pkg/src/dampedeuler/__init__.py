"""Damped Euler systems in one space dimension, in quantile coordinates.

Measures are stored as quantile vectors on a uniform mass grid, so the
2-Wasserstein distance is an exact L2 distance.  The package integrates the
damped Euler system, its globally sticky pressureless variant and the
quantile gradient flow, and monitors the Lyapunov functionals that control
their decay.
"""

from .diagnostics import (
    LyapunovTrace,
    RateFit,
    center_of_mass_oracle,
    check_second_order_inequality,
    fit_rate,
    symmetric_second_difference,
)
from .errors import *  # noqa: F401,F403
from .euler import StepperConfig, rhs, run, step
from .gradient_flow import OverdampedReport, gf_rhs, gf_run, overdamped_experiment
from .kernels import BACKEND
from .measure import (
    ClusterPartition,
    Grid,
    QuantileMeasure,
    clusters,
    from_sorted_positions,
    moments,
    project,
    wasserstein2,
    wasserstein_derivative,
)
from .model import (
    LagrangianState,
    LyapunovWeights,
    ModelSpec,
    Potential,
    check_H1,
    force,
    free_energy,
    jv_jw,
    lyapunov_G,
    lyapunov_weights,
    total_entropy,
)
from .scenarios import ScenarioConfig, load_config, run_scenario
from .stationary import stationary_state
from .sticky import StickyState, cluster_force, sticky_run, sticky_step

__version__ = "0.1.0"
