"""Pressureless Navier-Stokes decay experiments on a periodic box.

Spectral fields and grids, Littlewood-Paley blocks and Besov norms, the exact
Lame semigroup, an ETDRK2 solver, initial-data generators and a decay-fitting
harness.
"""

from .config import FitOptions, RunConfig, load_config, parse_config
from .data_gen import (BesovCertificate, DataRecipe, certify_class, delta_star,
                       gen_density, gen_velocity)
from .decay import (DecayFit, DecayFitResult, FunctionalReport, StabilityReport,
                    check_lower_bound, evaluate_functionals, fit_decay, fit_series,
                    stability_experiment, validity_horizon)
from .exceptions import PNSError
from .lame import (Viscosity, helmholtz, lame_propagate, linear_lower_envelope,
                   project_p, project_q)
from .littlewood_paley import (BesovNorm, BesovSpec, DyadicPartition, NormTrajectory,
                               besov_norm, block, chemin_lerner_norm,
                               lebesgue_besov_norm, low_high_split, partition_for)
from .records import load_checkpoint, save_checkpoint
from .solver import FluidState, Solver, StepperConfig, simulate, step
from .spectral import (BoxGrid, SpectralField, divergence, gradient,
                       inverse_transform, laplacian, pointwise_product,
                       transform_forward)

__version__ = "0.1.0"
