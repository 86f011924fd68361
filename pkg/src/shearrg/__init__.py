"""Exact RG analysis of passive-scalar transport by random shear flows."""

from .errors import (AdmissibilityError, DivergenceError, InconclusiveError, StabilityError,
                     UsageError)
from .rgflow import Regime, classify
from .spectra import CutoffWindow, SpectralParams

__version__ = "0.1.0"
