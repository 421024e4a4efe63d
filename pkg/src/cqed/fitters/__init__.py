"""Least-squares engine, model library and error estimation."""

from .bootstrap import bootstrap_errors, monte_carlo_propagate
from .engine import (BootstrapSummary, FitConfig, FitError, FitResult, ParametricModel,
                     least_squares_fit, numeric_jacobian)
from .models import (DAY, finesse_decay_model, finesse_from_losses, fit_finesse_decay,
                     fit_lorentzian, fit_stretched_exponential, kappa_from_losses, loss_depletion,
                     loss_exponential_growth, lorentzian, lorentzian_model, peak_guess,
                     stretched_exponential, stretched_exponential_model)
from .backaction import (ETA_FS_NOMINAL, G_REDUCTION, BackactionConfig, BackactionDataset,
                         BackactionProblem, backaction_surface_fit, normalized_rates,
                         synthetic_backaction)
