import math

import numpy as np
import pytest

from ctgest import Cohort, Trajectory


def random_trajectory(rng, tau=10.0, force_treated=None, ident="p0"):
    """Random but invariant-respecting patient record."""
    y = float(rng.uniform(0.2, 1.8) * tau)
    pcp = None
    if rng.random() < 0.6:
        pcp = float(rng.uniform(0.0, min(y, tau)))
    treated = rng.random() < 0.5 if force_treated is None else force_treated
    t_start = None
    if treated:
        hi = min(y, tau)
        t_start = float(rng.uniform(0.0, 0.999 * hi))
    return Trajectory(
        id=ident,
        i_azt=int(rng.random() < 0.5),
        pcp_time=pcp,
        treat_start=t_start,
        y=y,
        tau=tau,
    )


def random_cohort(rng, n, tau=10.0):
    return Cohort(
        tuple(random_trajectory(rng, tau=tau, ident=f"p{i}") for i in range(n))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
