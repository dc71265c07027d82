"""Exact densities of primes at which a rational point has order prime to l."""

from .arboreal import (ArborealElement, ArborealGroupLevel, delta_ab, density_interval, failure_constant,
                       fixed_density_level, generated_arboreal, kummer_fiber, standard_arboreal, w_value)
from .curves import CurveQ, PointQ, SweepReport, empirical_density
from .density import (DefectRule, DensityResult, ImageType, TableRule, closed_density, denominator_audit,
                      limit_audit, scaled_density, sum_series)
from .exactnum import Rational, format_decimal, format_rational, geometric_tail, parse_rational, v_ell
from .matgroups import (Ambient, MatrixGroupLevel, SizeGuardError, cartan, conjugate_group, generated_subgroup,
                        gl2_full, group_from_spec, normalizer_cartan, preimage_group)
from .measures import (FitRejected, MeasureTable, TailModel, fit_tail, measure_table, merge_tables,
                       singular_mass, split_coset_tables)
from .modmatrix import ResidueMatrix, kernel_class

__version__ = "0.1.0"
