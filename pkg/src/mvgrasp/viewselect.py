"""Viewpoint entropy and most-informative view selection."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleViewError
from .projection import AXES


def entropy_of_values(values):
    """Shannon entropy (bits) of non-negative values normalized by their sum."""
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[v > 0]
    if v.size <= 1:
        return 0.0
    p = v / v.sum()
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def view_mass(view):
    """Per-pixel mass of occupied bins: distance in front of the view volume's far face."""
    occ = view.occupied_mask
    return np.clip(view.far_depth - view.pixels[occ], 0.0, None)


def view_entropy(view):
    return entropy_of_values(view_mass(view))


@dataclass(frozen=True)
class ViewRanking:
    entries: tuple  # ((axis, entropy_bits, feasible), ...) sorted by entropy desc
    selected: str = None

    def to_dict(self):
        return {
            "ranking": [{"axis": a, "entropy": h, "feasible": f} for a, h, f in self.entries],
            "selected": self.selected,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


# named policies for configuration files and the CLI
FEASIBILITY_POLICIES = {
    "all": lambda axis: True,
    "none": lambda axis: False,
    "top-only": lambda axis: axis == "XoY",
    "no-top": lambda axis: axis != "XoY",
}


def rank_views(scores, feasible=None):
    """Rank ``(axis, entropy)`` pairs and pick the best feasible axis.

    Ties keep the fixed order XoY > XoZ > YoZ.
    """
    if feasible is None:
        feasible = FEASIBILITY_POLICIES["all"]
    elif isinstance(feasible, str):
        feasible = FEASIBILITY_POLICIES[feasible]
    order = {a: i for i, a in enumerate(AXES)}
    entries = sorted(
        ((a, float(h), bool(feasible(a))) for a, h in scores),
        key=lambda e: (-e[1], order.get(e[0], len(order))),
    )
    chosen = next((a for a, _, ok in entries if ok), None)
    if chosen is None:
        raise NoFeasibleViewError("every view was rejected by the feasibility predicate")
    return ViewRanking(tuple(entries), chosen)


def select_view(views, feasible=None):
    if len(views) != 3:
        raise ValueError(f"expected exactly three views, got {len(views)}")
    return rank_views([(v.axis, view_entropy(v)) for v in views], feasible)
