"""Conjugate Plateau construction of compact CMC surfaces in S^2 x R and H^2 x R."""

__version__ = "0.1.0"

from .closed_form import (  # noqa: F401
    DomainError,
    FlatCaseError,
    RegimeError,
    alpha,
    ell_target,
    genus,
    regime_params,
    tessellation_params,
)
