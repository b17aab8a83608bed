"""cmzlab: simulation and statistics workbench for CMZ structures.

Subpackages and modules
-----------------------
rv        regularly varying functions (evaluation, index fits, tail sums)
tower     synthetic CMZ structures: exact tails, simulation, tail transfer
dynamics  event-driven simulators (two falling balls, billiard tables)
estat     correlation estimators, predicted asymptotics, CLT/ASIP diagnostics
curves    standard pairs/families, Z-function, growth lemma checks
cli       experiment runner and acceptance-suite driver
"""

from . import errors

__all__ = ["errors"]
__version__ = "0.1.0"
