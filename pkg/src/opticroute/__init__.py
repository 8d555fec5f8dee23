"""Minimum-cost routing in dense wireless networks via the eikonal equation."""

from ._backend import BACKEND
from .costmodels import Bandwidth, Constant, Energy, MinHop, Tabulated, build_cost_field, energy_cost_mc
from .eikonal import DiskSource, PointSource, PolygonSource, extract_wavefronts, solve, trace_descent_ray
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    OpticrouteError,
    ParameterError,
    StateError,
    UnreachableError,
)
from .field import FieldKind, GridSpec, ScalarField2D, Trajectory, line_integral
from .microsim import (
    EnergyHop,
    NetworkRealization,
    QuadraticHop,
    Route,
    compare,
    forward,
    hop_stats_mc,
    sample_network,
    shortest_path,
)
from .raytrace import integrate, shoot

__version__ = "0.1.0"
