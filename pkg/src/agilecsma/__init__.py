"""Analysis and simulation of frequency-agile CSMA networks.

The package models a CSMA wireless network as a contention graph whose
links carrier-sense ``q`` frequency channels and may hold up to ``k`` of
them at once.  It provides

* ``graph``     topologies, unit-disk construction, coloring and cliques
* ``exact``     state enumeration and the product-form stationary law
* ``transfer``  transfer-matrix partition functions and closed forms
* ``sim``       an event-driven simulator of the backoff-timer dynamics
* ``mrat``      mean residual access time via passage-time moments
* ``cli``       the ``agilecsma`` command line
"""

from agilecsma.graph import ContentionGraph, NodeLayout, make_topology, from_unit_disk
from agilecsma.exact import ChannelConfig, StationaryDistribution, stationary_distribution

__all__ = [
    "ChannelConfig",
    "ContentionGraph",
    "NodeLayout",
    "StationaryDistribution",
    "from_unit_disk",
    "make_topology",
    "stationary_distribution",
]

__version__ = "0.1.0"
