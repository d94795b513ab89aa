"""Maxey-Riley particle trajectories with the Basset history term.

The history term is removed by solving an equivalent heat equation on a
semi-infinite pseudo-space (second- and fourth-order finite differences in
space, IMEX or implicit Runge-Kutta in time); a direct multistep integrator
with product-quadrature history weights serves as the baseline.
"""

from .daitche import HistoryWeights, compute_weights, integrate_direct
from .discretization import DEFAULT_C, assemble, assemble_full, build_grid, build_system
from .errors import (AssemblyError, ConfigError, DomainError, FormatError, InstabilityError,
                     IntegrationAborted, MetricError, MREError, QuadratureError,
                     ReferenceRejected, StepError)
from .fields import (BickleyField, FlowSample, OscillatoryField, QuiescentField, VortexField,
                     eval_field, field_from_config)
from .integrators import StepperConfig, Trajectory, initial_state, initial_state_from_slip, integrate
from .params import MreParams, PhysicalParams, derive_params, params_from_config

__version__ = "0.1.0"
