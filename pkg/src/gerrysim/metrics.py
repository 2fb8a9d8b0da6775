"""Partisan metrics computed from district vote tallies.

All scores are oriented toward a reference party (``"D"`` or ``"R"``):
larger means more favorable to that party, except partisan gini, which is
an unsigned asymmetry.  Seats-votes curves use uniform partisan swing, and
a district with exactly half the vote is not won.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

__all__ = [
    "MetricKind",
    "ElectionTally",
    "SeatsVotesCurve",
    "PARTIES",
    "DEFAULT_SAFE_THRESHOLD",
    "party_code",
    "opposing",
    "tally",
    "mean_median",
    "seats_votes_curve",
    "partisan_bias",
    "partisan_gini",
    "efficiency_gap",
    "efficiency_gap_from_shares",
    "safe_seats",
    "label",
    "score_tally",
]

PARTIES = ("D", "R")
DEFAULT_SAFE_THRESHOLD = 0.55


class MetricKind(enum.Enum):
    MEAN_MEDIAN = "mean_median"
    EFFICIENCY_GAP = "efficiency_gap"
    PARTISAN_BIAS = "partisan_bias"
    PARTISAN_GINI = "partisan_gini"
    SAFE_SEATS = "safe_seats"

    @property
    def code(self):
        return _CODES[self]

    @property
    def discrete(self):
        return self in (MetricKind.PARTISAN_BIAS, MetricKind.SAFE_SEATS)

    @classmethod
    def parse(cls, value):
        """Accept enum members, values (``"mean_median"``) or dashed names."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"gini": "partisan_gini", "eg": "efficiency_gap", "mm": "mean_median",
                   "pb": "partisan_bias", "bias": "partisan_bias", "ss": "safe_seats"}
        return cls(aliases.get(key, key))


_CODES = {
    MetricKind.MEAN_MEDIAN: K.MEAN_MEDIAN,
    MetricKind.EFFICIENCY_GAP: K.EFFICIENCY_GAP,
    MetricKind.PARTISAN_BIAS: K.PARTISAN_BIAS,
    MetricKind.PARTISAN_GINI: K.PARTISAN_GINI,
    MetricKind.SAFE_SEATS: K.SAFE_SEATS,
}


def party_code(party):
    try:
        return PARTIES.index(party)
    except ValueError:
        raise ValueError(f"party must be 'D' or 'R', got {party!r}") from None


def opposing(party):
    return PARTIES[1 - party_code(party)]


@dataclass
class ElectionTally:
    """Per-district two-party shares of the reference party.

    ``turnout`` holds two-party votes per district; when omitted all
    districts are treated as having equal turnout.
    """

    shares: np.ndarray
    statewide_share: float
    party: str = "D"
    turnout: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.shares = np.asarray(self.shares, dtype=float).reshape(-1)
        if self.shares.size < 1:
            raise ValueError("tally needs at least one district")
        if ((self.shares < 0) | (self.shares > 1)).any():
            raise ValueError("district shares must lie in [0, 1]")
        if not 0 <= self.statewide_share <= 1:
            raise ValueError("statewide share must lie in [0, 1]")
        if self.turnout is not None:
            self.turnout = np.asarray(self.turnout, dtype=float).reshape(-1)
            if self.turnout.shape != self.shares.shape:
                raise ValueError("turnout must have one entry per district")
        party_code(self.party)

    @property
    def d(self):
        return self.shares.size

    @property
    def seat_fraction(self):
        return np.count_nonzero(self.shares > 0.5) / self.d


class SeatsVotesCurve:
    """Seat fraction as a function of hypothetical statewide vote share.

    Built by shifting every district share by the same amount; ``S(V')`` is
    the fraction of districts with ``v_i + (V' - V) > 1/2``.
    """

    def __init__(self, shares, statewide_share):
        self.shares = np.asarray(shares, dtype=float)
        self.statewide_share = float(statewide_share)

    @property
    def breakpoints(self):
        """Statewide shares at which each district changes hands, sorted."""
        return np.sort(self.statewide_share + 0.5 - self.shares)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        shifted = self.shares[:, None] + (v.reshape(-1) - self.statewide_share)[None, :]
        out = np.count_nonzero(shifted > 0.5, axis=0) / self.shares.size
        return out.reshape(v.shape) if v.ndim else float(out[0])


def tally(g, p, party="D"):
    code = party_code(party)
    votes = p.district_votes
    turnout = votes.sum(axis=1)
    if (turnout == 0).any():
        bad = np.flatnonzero(turnout == 0).tolist()
        raise ValueError(f"districts {bad} have no two-party votes")
    own = votes[:, code]
    return ElectionTally(own / turnout, own.sum() / turnout.sum(), party, turnout)


def mean_median(t):
    return float(K.mean_median_core(t.shares))


def seats_votes_curve(t):
    return SeatsVotesCurve(t.shares, t.statewide_share)


def partisan_bias(t, at=None):
    """Half the gap between S(V) and its reflection 1 - S(1 - V).

    ``at`` is the statewide share where the curve is evaluated; it defaults
    to the observed statewide share.
    """
    at = t.statewide_share if at is None else float(at)
    return float(K.partisan_bias_core(t.shares, t.statewide_share, at))


def partisan_gini(t):
    """Half the area between the seats-votes curve and its reflection on [0, 1].

    Exact: the integrand is piecewise constant between the breakpoints of the
    two step functions.
    """
    return float(K.partisan_gini_core(t.shares, t.statewide_share))


def efficiency_gap_from_shares(statewide_share, seat_share):
    return (seat_share - 0.5) - 2.0 * (statewide_share - 0.5)


def efficiency_gap(t):
    """Seat share minus the vote-proportional share, (S - 1/2) - 2(V - 1/2).

    Seats are weighted by district turnout, which makes the value identical
    to the wasted-vote count divided by total votes.  With equal turnout
    this is the plain seat fraction.
    """
    turnout = np.ones(t.d) if t.turnout is None else t.turnout
    return float(K.efficiency_gap_core(t.shares, turnout, t.statewide_share))


def safe_seats(t, threshold=DEFAULT_SAFE_THRESHOLD):
    if not 0.5 < threshold < 1:
        raise ValueError("safe-seat threshold must lie in (0.5, 1)")
    return int(K.safe_seats_core(t.shares, threshold))


def score_tally(t, kind, threshold=DEFAULT_SAFE_THRESHOLD):
    kind = MetricKind.parse(kind)
    if kind is MetricKind.MEAN_MEDIAN:
        return mean_median(t)
    if kind is MetricKind.EFFICIENCY_GAP:
        return efficiency_gap(t)
    if kind is MetricKind.PARTISAN_BIAS:
        return partisan_bias(t)
    if kind is MetricKind.PARTISAN_GINI:
        return partisan_gini(t)
    return float(safe_seats(t, threshold))


def label(g, p, kind, party="D", threshold=DEFAULT_SAFE_THRESHOLD):
    """Score of plan ``p`` for ``party``; larger favors ``party``.

    Uses the same compiled code path as the flip trajectories so that equal
    plans always produce bit-identical labels.
    """
    kind = MetricKind.parse(kind)
    if kind is MetricKind.SAFE_SEATS and not 0.5 < threshold < 1:
        raise ValueError("safe-seat threshold must lie in (0.5, 1)")
    tally(g, p, party)  # raises on empty districts
    votes = p.district_votes
    return float(K.label_core(np.ascontiguousarray(votes[:, 0]), np.ascontiguousarray(votes[:, 1]),
                              kind.code, party_code(party), float(threshold)))
