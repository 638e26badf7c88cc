"""Grid computation and numerical checking of heavy-tailed compound laws."""

from .compound import (NegBinCompoundSpec, PoissonCompoundSpec, SeriesReport, lemma41_identity_check,
                       log_compound, negbin_compound, poisson_compound, with_atom)
from .errors import (GridError, HTCPError, PathLengthError, SeriesTruncationError,
                     SpitzerConvergenceError, SupportOverflowError, WindowError)
from .estimators import CompoundPoissonDensity, NegBinCompoundDensity, SpitzerSupremum
from .families import (CounterexampleG, Exponential, LogNormal, Mixture, ParetoLomax, Uniform, Weibull,
                       family_from_dict, singular_mixture)
from .kernel import (AtomPlusDensity, GridDensity, conv_power, convolve, convolve_atoms, discretize,
                     interval_mass, restrict_positive)
from .randomwalk import (WalkSpec, kolmogorov_distance, montecarlo_supremum, shifted_walk, spitzer_nu,
                         supremum_from_ladder, supremum_from_nu)

__version__ = "0.1.0"
