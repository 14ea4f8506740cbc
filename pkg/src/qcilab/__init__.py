"""Verification lab for joint spectral asymptotics of quantum completely
integrable systems: flat tori and surfaces of revolution."""

from ._accel import BACKEND
from .cutoffs import CutoffSymbol, identity_cutoff, sor_cutoff, torus_cutoff
from .errors import (BoundaryTieError, ConfigurationError, DomainError,
                     IncompleteSpectrumError, NumericError, OutOfBandError, QCIError)
from .kernels import (projector_kernel, smoothed_measure_kernel, smoothed_projector_kernel,
                      tauberian_gap, unit_box_diag)
from .models import (AdmissibleBand, FlatTorus, LiouvilleTorus, ProfileMetric,
                     SurfaceOfRevolution, builtin_profile, generating_function,
                     load_profile_table, make_surface_of_revolution, make_torus)
from .mollifiers import make_fejer, make_mollifier
from .regions import SpectralRegion
from .spectrum import (JointSpectrum, build_sor_spectrum, enumerate_torus, import_spectrum,
                       solve_radial_channel, torus_box_spectrum)
from .weyl import (ComparisonReport, fit_exponent, integrated_prediction,
                   leading_term_diagonal, leading_term_offdiag, verify)

__version__ = "0.1.0"
