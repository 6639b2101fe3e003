"""Reference dependence groups and bundled example configurations."""
from __future__ import annotations

from .ranks import DependenceMeasures

__all__ = ["DEPENDENCE_GROUPS", "group_measures", "EXAMPLE_CONFIGS"]

# (rho, nu, eta) of the five simulation dependency groups; nu2 := nu1.
DEPENDENCE_GROUPS = {
    1: (-0.4, -0.5, 0.2),
    2: (-0.1, -0.18, 0.45),
    3: (0.0, 0.0, 0.5),
    4: (0.1, 0.18, 0.55),
    5: (0.4, 0.5, 0.8),
}


def group_measures(group: int) -> DependenceMeasures:
    rho, nu, eta = DEPENDENCE_GROUPS[int(group)]
    return DependenceMeasures.symmetric(rho, nu, eta)


# Config files shipped in mcecontrol/fixtures that reproduce the two worked
# data sets (see README, "Example configurations").
EXAMPLE_CONFIGS = {
    "quesenberry": "quesenberry.conf",
    "madawaska": "madawaska.conf",
}
