"""Steering ensembles of Bloch equations with a common control.

Submodules
----------
bloch
    Rotations, ensemble states, pulse schedules and their propagation.
fourier
    Fourier spectra and the absolute-sum norm.
halving
    Impulse cycles that halve the distance to a pole.
brackets
    Lie-bracket pulse trains and H1 seminorm descent.
linear
    Approximate reachability of the linearised dynamics.
reach
    Mild solutions, cubic correction and analyticity checks.
compare
    Cost comparison of the impulse and bracket strategies.
"""

from .bloch import (Constant, ControlSchedule, Dirac, EnsembleState, OmegaGrid,
                    simulate, so3_exp)
from .errors import EnsembleError, InternalError, PreconditionError
from .fourier import Spectrum, n_norm

__all__ = ["Constant", "ControlSchedule", "Dirac", "EnsembleState", "OmegaGrid",
           "simulate", "so3_exp", "EnsembleError", "InternalError", "PreconditionError",
           "Spectrum", "n_norm"]
__version__ = "0.1.0"
