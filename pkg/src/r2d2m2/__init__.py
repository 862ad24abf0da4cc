"""Joint shrinkage-prior toolkit for Bayesian linear multilevel models.

Subpackages: special functions (specfun), seeded samplers (distributions),
the data model (model), analytical prior machinery (prior_analysis), the
blocked Gibbs sampler (gibbs), the sparse data simulator (datasim),
simulation-based calibration (sbc), evaluation metrics (metrics), and the
CLI / local HTTP service (cli, service).
"""

__version__ = "0.1.0"
