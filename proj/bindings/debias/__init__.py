"""Bias-corrected treatment effect estimation for completely randomized
experiments, backed by the C++ core."""

import json as _json

from ._debias import bias_constants, estimate, generate_table
from ._debias import simulate_json as _simulate_json

__all__ = ["bias_constants", "estimate", "generate_table", "simulate"]


def simulate(scheme, variant, n=24, n_treated=0, mode="exact", reps=0,
             seed=0, level=0.95, t_df="n-1", threads=0, budget=10_000_000):
    """Randomization-distribution summary of the five estimators as a dict.

    ``mode="exact"`` enumerates every assignment; ``mode="mc"`` draws
    ``reps`` assignments seeded with ``seed``.  ``n_treated=0`` picks the
    schemes' design fraction n/3.
    """
    return _json.loads(_simulate_json(scheme, variant, n, n_treated, mode,
                                      reps, seed, level, t_df, threads,
                                      budget))
