"""Failure diversity and campaign quality metrics.

Failures are compared through the shape of the road around them: the
right-lane center polyline is clipped to 30 m before and after the episode
onset and the heading change at each sample is quantized into one of nine
10-degree turn bins.  The resulting symbol strings are compared with a
weighted Levenshtein distance (substituting a slight right turn for a
slight left turn is cheaper than substituting a hairpin for a straight),
and the sparseness of a campaign is the mean over failures of the maximum
distance to any other failure.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .geometry import wrap_angle

if TYPE_CHECKING:
    from .campaign import CampaignResult
    from .geometry import SampledRoad
    from .scenario import FailureRecord

#: Turn-angle alphabet, one symbol per 10-degree bin from -40..-40 (a)
#: through straight (e) to +40..+40 (i); deltas beyond +-45 clamp outward.
ALPHABET = "abcdefghi"
BIN_WIDTH_DEG = 10.0
SEGMENT_HALF_SPAN = 30.0


@dataclass(frozen=True)
class SegmentEncoding:
    """Turn-bin symbol string for a stretch of road."""

    symbols: str
    bin_width: float = BIN_WIDTH_DEG
    segment_span: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        bad = set(self.symbols) - set(ALPHABET)
        if bad:
            raise ValueError(f"symbols outside the turn alphabet: {sorted(bad)}")


def encode_heading_deltas(deltas_deg: np.ndarray) -> str:
    """Quantize heading changes (degrees) into the 9-symbol turn alphabet."""
    idx = np.clip(np.rint(np.asarray(deltas_deg) / BIN_WIDTH_DEG), -4, 4).astype(int) + 4
    return "".join(ALPHABET[i] for i in idx)


def extract_failure_segment(road: "SampledRoad", failure: "FailureRecord") -> SegmentEncoding:
    """Encode the road segment 30 m before and after a failure.

    The right-lane center polyline is clipped to the failure's arc position
    +-30 m (clamped to the road ends) and consecutive heading deltas are
    binned.  A clip so short it contains a single straight segment encodes
    as one center-bin symbol.
    """
    center = road.center_polyline_right_lane
    arcs = _polyline_arcs(center)
    total = float(arcs[-1])
    arc = float(failure.arc_position)
    if not (-1e-6 <= arc <= total + 1e-6):
        raise ValueError(
            f"failure arc {arc:.2f} m outside road arc range [0, {total:.2f}]"
        )
    lo = max(0.0, arc - SEGMENT_HALF_SPAN)
    hi = min(total, arc + SEGMENT_HALF_SPAN)

    pts = _clip_polyline(center, arcs, lo, hi)
    headings = np.arctan2(np.diff(pts[:, 1]), np.diff(pts[:, 0]))
    if len(headings) < 2:
        symbols = ALPHABET[4]
    else:
        deltas = np.degrees(wrap_angle(np.diff(headings)))
        symbols = encode_heading_deltas(deltas)
    return SegmentEncoding(symbols=symbols, segment_span=(lo, hi))


def weighted_levenshtein(a: SegmentEncoding, b: SegmentEncoding) -> float:
    """Edit distance between two segment encodings.

    Insertions and deletions cost 1; substituting one turn bin for another
    costs the normalized bin distance |i - j| / 8.  Symmetric in its
    arguments and a metric on symbol strings.
    """
    if a.bin_width != b.bin_width:
        raise ValueError("segment encodings use different alphabets")
    sa = [ALPHABET.index(ch) for ch in a.symbols]
    sb = [ALPHABET.index(ch) for ch in b.symbols]
    m, n = len(sa), len(sb)
    prev = [float(j) for j in range(n + 1)]
    for i in range(1, m + 1):
        cur = [float(i)] + [0.0] * n
        ai = sa[i - 1]
        for j in range(1, n + 1):
            sub = prev[j - 1] + abs(ai - sb[j - 1]) / 8.0
            cur[j] = min(prev[j] + 1.0, cur[j - 1] + 1.0, sub)
        prev = cur
    return prev[n]


def sparseness(failures: list[SegmentEncoding]) -> float:
    """Mean over failures of the maximum distance to any failure.

    With zero or one failure there is nothing to spread out, so the value
    is 0 by convention.
    """
    n = len(failures)
    if n <= 1:
        return 0.0
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = weighted_levenshtein(failures[i], failures[j])
    return float(np.mean(np.max(dist, axis=1)))


@dataclass(frozen=True)
class MetricsReport:
    """Campaign quality summary.

    detected_failures counts failure-revealing scenarios; sparseness is
    computed over every out-of-bound episode.  effectiveness is the valid
    fraction of all generated scenarios, effectiveness_plus the failing
    fraction of the valid ones.
    """

    detected_failures: int
    sparseness: float
    total_generated: int
    valid_count: int
    effectiveness: float
    effectiveness_plus: float
    zero_valid: bool = False
    sparseness_by_convention: bool = False

    CSV_FIELDS = (
        "detected_failures",
        "sparseness",
        "total_generated",
        "valid_count",
        "effectiveness",
        "effectiveness_plus",
    )

    def to_json(self) -> dict:
        return {
            "detected_failures": self.detected_failures,
            "sparseness": self.sparseness,
            "total_generated": self.total_generated,
            "valid_count": self.valid_count,
            "effectiveness": self.effectiveness,
            "effectiveness_plus": self.effectiveness_plus,
            "zero_valid": self.zero_valid,
            "sparseness_by_convention": self.sparseness_by_convention,
        }

    def csv_row(self) -> list[str]:
        return [repr(getattr(self, f)) for f in self.CSV_FIELDS]


def compile_metrics(result: "CampaignResult") -> MetricsReport:
    """Compute the quality metrics for one campaign run."""
    outcomes = result.outcomes
    total = len(outcomes)
    valid = sum(1 for o in outcomes if o.valid)
    failing = sum(1 for o in outcomes if o.failures)
    episodes = [
        SegmentEncoding(symbols=f.segment_encoding)
        for o in outcomes
        for f in o.failures
    ]
    zero_valid = valid == 0
    return MetricsReport(
        detected_failures=failing,
        sparseness=sparseness(episodes),
        total_generated=total,
        valid_count=valid,
        effectiveness=0.0 if total == 0 else valid / total,
        effectiveness_plus=0.0 if zero_valid else failing / valid,
        zero_valid=zero_valid,
        sparseness_by_convention=len(episodes) <= 1,
    )


def _polyline_arcs(polyline: np.ndarray) -> np.ndarray:
    d = np.diff(polyline, axis=0)
    return np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])


def _clip_polyline(polyline: np.ndarray, arcs: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Polyline restricted to arc range [lo, hi], endpoints interpolated."""
    from .geometry import polyline_point_at

    inside = (arcs > lo) & (arcs < hi)
    pts = [polyline_point_at(polyline, arcs, lo)]
    pts.extend(polyline[inside])
    pts.append(polyline_point_at(polyline, arcs, hi))
    out = np.array(pts)
    # Drop duplicates created when lo/hi land exactly on a vertex.
    keep = np.concatenate([[True], np.hypot(*(np.diff(out, axis=0).T)) > 1e-12])
    return out[keep]
