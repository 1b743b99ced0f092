"""Curvature laboratory for small classifiers.

Thin re-export of the compiled core; see the repository README for the
full CLI and file-format documentation.
"""

from ._curvlab import *  # noqa: F401,F403
