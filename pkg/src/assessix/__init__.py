"""Conditional assessment indices on finite filtered probability spaces.

Acceptance families and their indices, robust (dual) representations,
indices on cash-flow processes, and dynamic consistency of index families.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .space import (AdaptedProcess, CondValue, FilteredSpace, check_local, cond_expectation, cond_extremum,
                    glue, localize)
from .extended import Monotone, MonotoneFn, continuous_version, galois_check, inverse
from .acceptance import (AcceptanceFamily, check_family_axioms, family_to_index, index_to_family,
                         recovered_index_properties, roundtrip_check)
from .duality import (DualGrid, dirichlet_grid, lattice_grid, penalty_from_risk, refinement_audit,
                      risk_from_penalty, robust_evaluate, scale_invariant_risk)
from .processes import (D_to_gamma, Discounting, MartingaleDensity, RandomMeasure, TimeMeasure,
                        dual_grid_processes, gamma_to_D, pairing, process_dual_expectation,
                        supermartingale_check)
from .indices import (INDEX_NAMES, MAXVAR, MINVAR, IndexSpec, dglr, distorted_expectation, entropic,
                      get_index, oce, path_dependent_index, weighted_var)
from .consistency import (DynamicIndexFamily, backward_recursion, bellman_check, certainty_equivalent,
                          dglr_family, entropic_family, mixed_entropic_family, strong_consistency_check)
