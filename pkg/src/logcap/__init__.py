"""Capacities relative to the Green function with pole at the origin of the unit disk,
and the Wiener-type test for removability of a logarithmic singularity."""

from .capacity import (CapacityError, CapacityResult, DiscreteMeasure, capacity_at_zeta,
                       equilibrium_capacity, greenian_capacity, obstacle_capacity,
                       potential_eval, smoothed_reduction)
from .elliptic import (CoefficientField, identity_field, rotated_diag_field, diag_field,
                       checkerboard_field, build_mesh, DiscreteGreenTable)
from .geometry import (AnnulusBand, Arc, CompactSetSpec, Disk, GeometryError, LogPolarPoint,
                       RadialSegment, shell_decompose, spec_from_json, to_logpolar)
from .hdp import (BoundaryData, harmonic_measure_of_zeta, solve_hdp, uniqueness_gap,
                  boundary_oscillation_check)
from .hpath import (drift_experiment, estimate_hit_probability, sample_hpath,
                    transience_experiment)
from .kernels import LAPLACE, DiscreteOperator, green_disk, h_kernel
from .wiener import (INCONCLUSIVE, LOG_IRREGULAR, LOG_REGULAR, builtin_family, classify,
                     series_terms, wiener_report)

__version__ = "0.1.0"
