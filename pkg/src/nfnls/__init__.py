"""Frequency-box analysis and normal-form machinery for the 1-D cubic NLS.

Modules are layered bottom-up: grids (lattice + free flow), modulation (box
projections and norms), resonance (phases and frequency sets), trees
(chronicles, signs, index functions), multilinear (the kernel operators),
normal_form (generation operators, partial sums, solver), harness (reference
solver, certification suites) and cli.  Import the module you need directly,
e.g. ``from nfnls import grids``.
"""

__version__ = "0.1.0"
