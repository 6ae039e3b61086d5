"""Matrix-free spectral and dynamical simulator of the quantum random energy model."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketError,
    CapacityError,
    ConvergenceError,
    NormDriftError,
    QremError,
    ValidationError,
)
from .model import (  # noqa: E402
    Configuration,
    EnergyTable,
    ModelParams,
    ground_state_energy,
    neighbor,
    sample_energies,
)
from .spectral import (  # noqa: E402
    HamiltonianView,
    SpectrumResult,
    apply_hamiltonian,
    dense_spectrum,
    lowest_eigenpairs,
)

__all__ = [
    "BracketError",
    "CapacityError",
    "Configuration",
    "ConvergenceError",
    "EnergyTable",
    "HamiltonianView",
    "ModelParams",
    "NormDriftError",
    "QremError",
    "SpectrumResult",
    "ValidationError",
    "apply_hamiltonian",
    "dense_spectrum",
    "ground_state_energy",
    "lowest_eigenpairs",
    "neighbor",
    "sample_energies",
]
