"""Digital twin of a dodecahedral underwater drone with twelve soft flagella.

The package provides a strain-parameterised rod model of the drone (rigid
shell plus twelve motor-driven soft flagella), slender-body hydrodynamic
loads, forward dynamics with explicit and implicit integrators, a
simplified shell-only model with a differentially flat PD controller and
thrust allocation, and a scenario runner with a command line front end.
"""

__version__ = "0.1.0"
