"""Driven ordered arrays of six-level atoms with photon-mediated interactions.

Computes steady-state ground-state population mixing in a weakly driven
chain of J=1/2 -> J=3/2 atoms, by mean-field optical Bloch equations, by
Monte Carlo wavefunction trajectories on an excitation-truncated basis, or
by brute-force master-equation diagonalization for small arrays; plus
position-disorder ensembles and far-field radiation patterns.
"""

__version__ = "0.1.0"

from .levels import (
    SCHEME,
    DriveParams,
    LevelScheme,
    Polarization,
    clebsch_gordan,
    rabi_vector,
    spherical_vector,
    transition_rabi,
)
from .geometry import (
    ArrayGeometry,
    DisorderSpec,
    disordered_chain,
    linear_chain,
    load_geometry,
)
from .green import (
    CouplingMatrices,
    coupling_matrices,
    far_field_green,
    green_tensor,
)
from .meanfield import (
    IdenticalAtomResult,
    MeanFieldState,
    SteadyStateReport,
    all_in_level,
    effective_drive,
    identical_atom_steady_state,
    identical_atom_sweep,
    mf_steady_state,
    mf_steady_state_many,
)
from .qmcw import (
    EnsembleResult,
    ExactSteadyState,
    exact_master_equation,
    qmcw_steady_state,
)
from .observables import (
    FarFieldQuery,
    FieldDecomposition,
    IntensityMap,
    ResultRecord,
    UndefinedRatioError,
    append_records,
    far_field_amplitude,
    far_field_intensity,
    ground_ratio,
    intensity_at_radius,
    intensity_map,
    load_intensity_map,
    populations,
    read_records,
    save_intensity_map,
    scattered_field_at_atoms,
)
from .disorder import (
    DEFAULT_EPSILON_GRID,
    DisorderSweepResult,
    disorder_average,
    load_sweep,
    save_sweep,
)
from .cli import ConfigError, RunConfig, load_config, run, sweep

__all__ = [
    "__version__",
    # level structure and drive
    "SCHEME", "DriveParams", "LevelScheme", "Polarization",
    "clebsch_gordan", "rabi_vector", "spherical_vector", "transition_rabi",
    # geometry
    "ArrayGeometry", "DisorderSpec", "disordered_chain", "linear_chain",
    "load_geometry",
    # propagator and couplings
    "CouplingMatrices", "coupling_matrices", "far_field_green", "green_tensor",
    # mean-field solvers
    "IdenticalAtomResult", "MeanFieldState", "SteadyStateReport",
    "all_in_level", "effective_drive", "identical_atom_steady_state",
    "identical_atom_sweep", "mf_steady_state", "mf_steady_state_many",
    # trajectory / exact solvers
    "EnsembleResult", "ExactSteadyState", "exact_master_equation",
    "qmcw_steady_state",
    # observables and persistence
    "FarFieldQuery", "FieldDecomposition", "IntensityMap", "ResultRecord",
    "UndefinedRatioError", "append_records", "far_field_amplitude",
    "far_field_intensity", "ground_ratio", "intensity_at_radius",
    "intensity_map", "load_intensity_map", "populations", "read_records",
    "save_intensity_map", "scattered_field_at_atoms",
    # disorder ensembles
    "DEFAULT_EPSILON_GRID", "DisorderSweepResult", "disorder_average",
    "load_sweep", "save_sweep",
    # experiment driver
    "ConfigError", "RunConfig", "load_config", "run", "sweep",
]
