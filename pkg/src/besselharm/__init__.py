"""Harmonic analysis of multidimensional Bessel operators on the positive orthant.

Modules:
    specfun           Bessel-type special functions and Schlafli measures
    measure_geometry  ball measures and the geometric inequalities
    hankel            discrete multidimensional Hankel transform
    kernels           heat and Poisson kernels and their derivatives
    operators         maximal, g-function, multiplier and Riesz operators
    verifier          sampled kernel estimates and exact-property suites
    cli               command-line front end
"""

from .errors import (AccuracyError, BesselHarmError, DomainError, ParameterError, PlanQualityError,
                     SingularityError, UsageError)
from .specfun import LambdaIndex

__version__ = "0.1.0"
