"""Periodic Lorentz gas, dyadic transfer-operator spectra, and local-limit
statistics: a simulation and verification toolkit.

Subpackages:

* ``lattice``  - exact integer lattices, Hermite normal form, affine supports
* ``billiard`` - finite-horizon Lorentz gas geometry and collision dynamics
* ``dyadic``   - doubling-map toy systems with exact rational oracles
* ``spectral`` - twisted transfer matrices, eigenvalue curves, inversion
* ``stats``    - exact walk oracles, Green-Kubo, local-limit and recurrence
* ``cli``      - reproducible experiment runner (JSON config in, CSV/JSON out)
"""

from .billiard import (
    REFERENCE_CONFIG,
    BoundaryPoint,
    FlightRecord,
    HorizonVerdict,
    ScattererConfig,
    Trajectory,
    billiard_map,
    cohomology_check,
    finite_horizon_check,
    sample_mu1,
    simulate_trajectory,
    time_reverse,
    validate_config,
)
from .dyadic import (
    DyadicSystem,
    char_function_exact,
    exact_birkhoff_distribution,
    exact_correlation,
    green_kubo_sigma2,
)
from .lattice import AffineLattice, affine_support, hnf_basis, lattice_index
from .spectral import (
    ArithmeticityReport,
    NagaevFit,
    SpectralResult,
    TwistedMatrix,
    arithmeticity_scan,
    lclt_inversion,
    leading_eig,
    nagaev_fit,
    twisted_matrix,
)
from .stats import (
    CovarianceEstimate,
    EmpiricalDistribution,
    RecurrenceStats,
    clt_compare,
    empirical_distribution,
    green_kubo_covariance,
    joint_return_statistic,
    lclt_point_statistic,
    ssrw_distribution,
    ssrw_exact,
)

__version__ = "0.1.0"
