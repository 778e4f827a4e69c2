"""Desk-scale laboratory for non-overlapping Robin-Schwarz domain decomposition.

The package builds discrete substructuring methods (two-sided Lagrange
multiplier methods, glob-averaged variants, the complete-communication
primal recurrence, and a sign-regularized one-sided method) from a common
operator algebra -- restrictions, traces, impedances, exchange operators --
and verifies the algebraic identities and convergence bounds these methods
rest on, at the matrix level.
"""

__version__ = "0.1.0"
