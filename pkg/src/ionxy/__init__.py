"""ionxy: XY-type spin coupling engineering and spin-phonon dynamics for
trapped-ion chains driven by two parallel spin-dependent forces.

All frequencies are angular (rad/s) throughout; scenario files accept
explicit unit tags to convert from the `2 pi x Hz` convention.
"""

from . import errors
from .chain import (
    ChainGeometry,
    ModeSet,
    TrapConfig,
    equilibrium_positions,
    lamb_dicke,
    transverse_modes,
)
from .coupling import (
    CouplingMatrix,
    PowerLawSolution,
    SDFTone,
    SpectrumReport,
    ValidityReport,
    engineer_power_law,
    frobenius_proximity,
    ising_couplings,
    matched_y_tone,
    mode_spectrum_report,
    power_law_fit,
    validity_report,
    xy_couplings,
)
from .dynamics import (
    DriveProgram,
    HilbertSpec,
    MagnusDiagnostics,
    OscillationFit,
    QuantumState,
    Trajectory,
    build_hamiltonian,
    closed_form_2ion,
    evolve_effective,
    evolve_full,
    fit_oscillation,
    magnus_diagnostics,
    observables,
    product_state,
    spin_basis_labels,
    spin_label_index,
    thermal_fock_sample,
)
from .floquet import (
    FloquetScanResult,
    FloquetSchedule,
    blackman_edge_envelope,
    build_floquet_program,
    dual_sdf_baseline,
    duty_cycle_factor,
    scan_nf,
    spectral_amplitude,
    xy_deviation,
)

__version__ = "0.1.0"
