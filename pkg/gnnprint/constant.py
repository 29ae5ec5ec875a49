"""Module defining global constants."""

EPS = 1.0e-12

# smallest embedding norm accepted by the probe before a tuple is degenerate
MIN_EMBEDDING_NORM = 1.0e-12
# tolerance on ||w|| = 1 for perturbation directions
UNIT_TOLERANCE = 1.0e-9

DEFAULT_DELTA = 1.0e-2
DEFAULT_FD_STEP = 1.0e-4

ARCHITECTURES = ["gcn", "gin", "sage"]
SCORE_FORMS = ["ratio", "percentile"]

SURROGATE = "Surrogate"
INDEPENDENT = "Independent"
