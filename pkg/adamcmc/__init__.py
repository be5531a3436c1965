"""
ADA-MCMC - delayed-acceptance MCMC with Gaussian-process surrogate likelihoods
"""

__version__ = "0.1.0"
