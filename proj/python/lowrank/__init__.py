"""Bayesian low-rank matrix completion.

Tempered-posterior Gibbs sampling and variational inference over a
factorized matrix model, with four prior families on the factor column
scales. Everything lives in the compiled core; this package re-exports it.
"""

try:
    from ._core import *  # noqa: F401,F403  packaged extension
except ImportError:  # pragma: no cover - in-tree runs put _core on sys.path
    from _core import *  # noqa: F401,F403
