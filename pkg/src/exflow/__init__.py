"""Curvature flows with modulated speeds.

Subpackages by concern: ``speed`` (speed functions and their calculus),
``modulators`` (the scalar Psi families), ``structure`` (randomized
convexity and lemma checks), ``geometry`` (discrete curves, support
surfaces, ball curvatures) and ``flow`` (the time integrator and monitors).
"""

__version__ = "0.1.0"
