"""Symbol-level checks and model solvers for maximal L^p-regularity of parabolic problems.

Submodules
----------
opalg        operator and boundary-operator symbols
ellipticity  parameter-ellipticity sampling, root splitting, perturbation budgets
lopatinskii  Shapiro-Lopatinskii checks, Poisson symbols, half-space solver
randomized   Rademacher averages and sampled R-bounds
fourier      grid functions, dyadic decompositions, Besov norms, multiplier checks
evolution    linear and quasilinear parabolic solvers on the torus
cli          command-line front end
"""

__version__ = "0.1.0"
