"""Master-equation engine for a (multilevel) atom coupled to one cavity mode."""

from .levels import (PI, POLARIZATIONS, SIGMA_MINUS, SIGMA_PLUS, DipoleCoupling, Level,
                     LevelScheme, clebsch_gordan, closed_hyperfine_scheme, cycling_coupling,
                     rb87_d2_scheme, two_level_scheme)
from .solver import (SteadyStateError, build_liouvillian, check_density_matrix,
                     converged_rates, drive_input_rate, intensity_correlation, rates, solve, steady_state,
                     system_liouvillian, trace_residual)
from .system import (CavityModeSpec, DriveField, OpenSystem, build_hamiltonian, build_system,
                     two_level_system)
from .mcwf import (CHANNEL_CODES, ClickRecord, JumpSampler, Trajectory, TrajectoryError,
                   click_rates, mcwf_trajectories, trajectory_rng)
