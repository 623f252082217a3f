"""Digital field experiment platform for biosecurity investment behavior.

Seeded outbreak rounds on a 50-facility map, synthetic decision policies,
a session service with durable decision logs, and the analysis pipeline
(adoption ratings, clustering, nonparametric tests).
"""

__version__ = "0.1.0"
