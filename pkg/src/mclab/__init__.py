"""mclab: mode choice modeling with explicit resource constraints.

Pipeline: parse a travel survey into home-based tours, generate the
attribute bundle of every candidate mode from transit schedules and street
routing, apply availability constraints to form per-trip choice sets,
estimate an availability-conditioned multinomial logit, and reproduce the
descriptive analyses.
"""

__version__ = "0.1.0"
