"""Cascading line failures in swing-equation grid models, and their
prevention by a distributed frequency-difference control layer."""

from .cases import (
    GridCase,
    apply_overrides,
    builtin_five_node,
    builtin_ieee118,
    load_case,
    normalize_powers,
    parse_grid_file,
    read_sidecar,
    serialize_grid,
)
from .cdf import parse_ieee_cdf
from .dynamics import (
    ControlConfig,
    DynamicState,
    SimConfig,
    control_input,
    integrate_step,
    simulate_cascade,
    swing_rhs,
)
from .equilibrium import line_flows, overloaded_lines, solve_equilibrium, static_cascade
from .errors import GridError
from .grid import (
    GridTopology,
    MachineParams,
    connected_components,
    laplacian,
    remove_line,
    validate_topology,
)
from .harness import (
    ClassificationTable,
    classify_all_lines,
    critical_gain_table,
    emit_reports,
    gain_sweep,
    pinning_experiment,
)
from .results import CascadeReport, Trip
from .spectral import (
    LinearModelParams,
    closed_loop_eigenvalues,
    critical_gain,
    damping_ratio,
    verify_spectrum_against_dense,
)

__version__ = "0.1.0"
