"""Gaussian sums indexed by weighted rooted trees.

Modules:

* :mod:`treegauss.tree_core`: tree storage (explicit, chain, implicit binary)
* :mod:`treegauss.weights`: weight systems ``(alpha, sigma)`` and named families
* :mod:`treegauss.tree_metrics`: the branch metric ``d``, the L2 metric ``d_X`` and ``d_hat``
* :mod:`treegauss.entropy`: covering numbers, order nets, Dudley and Sudakov functionals
* :mod:`treegauss.gauss_sim`: sampling, Monte Carlo suprema, localization identities
* :mod:`treegauss.criteria`: boundedness criteria for level-homogeneous weights
* :mod:`treegauss.cli`: the ``treegauss`` command
"""
from .tree_core import Tree, TreeError, build_binary, build_chain, build_star
from .weights import WeightError, WeightSystem

__version__ = "0.1.0"

__all__ = ["Tree", "TreeError", "build_binary", "build_chain", "build_star", "WeightError",
           "WeightSystem", "__version__"]
