"""dulab: numerics for general Dirichlet series and their universality checks."""

from .series import (
    PreconditionError,
    SeriesSpec,
    PolynomialReal,
    make_builtin,
    coeff,
    frequency,
    poly_inverse_asymptotic,
    load_custom_table,
)
from .abscissa import AbscissaEstimate, estimate_abscissa
from .evaluate import (
    EvalResult,
    ZeroCrossingError,
    partial_sum,
    vdc_transform,
    eval_tail_bounded,
    eval_zeta,
    eval_log_zeta_tracked,
    eval_prime_series,
)

__version__ = "0.1.0"

__all__ = [
    "PreconditionError",
    "SeriesSpec",
    "PolynomialReal",
    "make_builtin",
    "coeff",
    "frequency",
    "poly_inverse_asymptotic",
    "load_custom_table",
    "AbscissaEstimate",
    "estimate_abscissa",
    "EvalResult",
    "ZeroCrossingError",
    "partial_sum",
    "vdc_transform",
    "eval_tail_bounded",
    "eval_zeta",
    "eval_log_zeta_tracked",
    "eval_prime_series",
]
