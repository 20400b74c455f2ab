"""Compatibility analysis of repeated scientific measurements.

Computes uncertainty-normalized differences between measurements of the
same quantity, fits heavy-tailed Student-t models to their distribution,
estimates bin uncertainties by bootstrap, deconvolves the individual
measurement error law, and simulates how unfound systematic errors give
rise to power-law tails.
"""

from concord.dataset import (
    Dataset,
    Measurement,
    ParseError,
    Quantity,
    ValidationError,
    binomial_rate_difference,
    normalize_uncertainty,
    parse_dataset,
    serialize_dataset,
    validate,
)
from concord.statfun import DistSpec, Sampler, chi2_cdf, inverse_survival, student_t_pdf, survival
from concord.comparison import (
    ComparisonPair,
    ZHistogram,
    build_histogram,
    consistency_chi2,
    default_bin_edges,
    empirical_survival,
    enumerate_pairs,
    h_scores,
    pair_z,
)
from concord.tfit import BootstrapResult, TFitResult, bootstrap, fit_report, fit_student_t
from concord.genesis import (
    GenesisSpec,
    SimSpec,
    bounds_effect,
    deconvolve,
    genesis_tail_exponent,
    mixture_density,
    simulate_dataset,
    unfound_error_density,
)

__version__ = "0.1.0"
