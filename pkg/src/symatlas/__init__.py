"""Atlas of a univariate symbolic-regression search space.

Enumerate grammar sentences up to a size limit, deduplicate them by a
commutation-invariant hash, evaluate them on a grid, then cluster and embed
them by phenotypic (output) and genotypic (tree) similarity.  A small tree GP
can be traced against the atlas to see which regions it visits.
"""

__version__ = "0.1.0"
