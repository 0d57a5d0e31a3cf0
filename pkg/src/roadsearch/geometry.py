"""Road geometry: control-point chromosomes, Catmull-Rom sampling, validity.

A candidate road is an ordered list of bounded 2-D control points.  The
drivable geometry is obtained by interpolating the interior control points
with a uniform Catmull-Rom spline and offsetting the resulting polyline into
lane polygons.  Roads must pass four geometric constraints before they are
allowed anywhere near a simulation: distinct endpoints, full containment in
the map square, no self-intersection of the swept road polygon, and no turn
tighter than a configurable minimum radius.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from shapely.geometry import Polygon


@dataclass(frozen=True)
class RoadSpec:
    """Fixed parameters of the road model.

    lane_width is the width of a single lane in meters (the road is always
    two lanes wide).  samples_per_segment controls the spline sampling
    density.  min_radius is the tightest admissible turn radius in meters.
    """

    lane_width: float = 4.0
    num_lanes: int = 2
    samples_per_segment: int = 10
    map_size: float = 200.0
    min_radius: float = 47.0

    def __post_init__(self):
        if self.lane_width <= 0:
            raise ValueError("lane_width must be positive")
        if self.samples_per_segment < 2:
            raise ValueError("samples_per_segment must be >= 2")
        if self.map_size <= 0:
            raise ValueError("map_size must be positive")
        if self.num_lanes != 2:
            raise ValueError("only two-lane roads are supported")


@dataclass(frozen=True)
class ControlPolyline:
    """The chromosome: ordered bounded 2-D control points defining a road.

    The first and last points act as phantom tangent handles; the rendered
    road spans the interior points.  At least four points are required, all
    coordinates must lie within ``bounds``, and consecutive points must be
    distinct.
    """

    points: np.ndarray
    bounds: tuple[float, float] = (0.0, 200.0)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("control points must be an (m, 2) array")
        if len(pts) < 4:
            raise ValueError("a road needs at least 4 control points")
        lo, hi = self.bounds
        if not (lo < hi):
            raise ValueError("bounds must satisfy lo < hi")
        if np.any(pts < lo) or np.any(pts > hi):
            raise ValueError("control point outside declared bounds")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError("consecutive control points must be distinct")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlPolyline):
            return NotImplemented
        return self.bounds == other.bounds and np.array_equal(
            self.points, other.points
        )

    def replace_point(self, index: int, xy) -> "ControlPolyline":
        """Return a copy with one control point replaced."""
        pts = np.array(self.points)
        pts[index] = xy
        return ControlPolyline(pts, self.bounds)


@dataclass(frozen=True)
class SampledRoad:
    """A road rendered from a chromosome: dense samples plus lane polygons.

    ``samples`` is the road centerline (the lane divider), ``arc_lengths``
    the cumulative distance along it.  Polygons are open vertex rings
    (first vertex not repeated).
    """

    samples: np.ndarray
    arc_lengths: np.ndarray
    center_polyline_right_lane: np.ndarray
    lane_polygon_right: np.ndarray
    road_polygon: np.ndarray
    source: ControlPolyline

    @property
    def length(self) -> float:
        return float(self.arc_lengths[-1])


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    detail: str


@dataclass(frozen=True)
class ValidityReport:
    is_valid: bool
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    def constraint_ids(self) -> set[str]:
        return {v.constraint_id for v in self.violations}


class PolylineProjection(NamedTuple):
    arc_length: float
    distance: float


def catmull_rom_sample(cp: ControlPolyline, spec: RoadSpec) -> SampledRoad:
    """Interpolate a chromosome into a sampled road with lane polygons.

    Uses the uniform Catmull-Rom basis; the spline spans the interior
    control points and passes through each of them exactly.  Adjacent
    segments share their endpoint sample, so a road with ``m`` control
    points yields ``(m - 3) * (samples_per_segment - 1) + 1`` samples.
    """
    pts = cp.points
    if len(pts) < 4:
        raise ValueError("a road needs at least 4 control points")

    p0, p1, p2, p3 = pts[:-3], pts[1:-2], pts[2:-1], pts[3:]
    a = 0.5 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3)
    b = 0.5 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3)
    c = 0.5 * (-p0 + p2)
    d = p1

    # Evaluate each segment on t in [0, 1) so shared endpoints appear once;
    # t = 0 reproduces the segment's first control point exactly.
    t = np.linspace(0.0, 1.0, spec.samples_per_segment)[:-1]
    t = t[None, :, None]
    seg = ((a[:, None, :] * t + b[:, None, :]) * t + c[:, None, :]) * t + d[:, None, :]
    samples = np.vstack([seg.reshape(-1, 2), pts[-2][None, :]])

    deltas = np.diff(samples, axis=0)
    seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])

    normals = _vertex_right_normals(samples)
    half = spec.lane_width / 2.0
    center_right = samples + half * normals
    edge_right = samples + spec.lane_width * normals
    edge_left = samples - spec.lane_width * normals

    lane_right = np.vstack([samples, edge_right[::-1]])
    road = np.vstack([edge_left, edge_right[::-1]])

    for arr in (samples, arc, center_right, lane_right, road):
        arr.flags.writeable = False
    return SampledRoad(
        samples=samples,
        arc_lengths=arc,
        center_polyline_right_lane=center_right,
        lane_polygon_right=lane_right,
        road_polygon=road,
        source=cp,
    )


def _vertex_right_normals(polyline: np.ndarray) -> np.ndarray:
    """Unit normals pointing to the right of the direction of travel."""
    deltas = np.diff(polyline, axis=0)
    lens = np.hypot(deltas[:, 0], deltas[:, 1])
    lens = np.where(lens == 0.0, 1.0, lens)
    dirs = deltas / lens[:, None]

    vdirs = np.empty_like(polyline)
    vdirs[0] = dirs[0]
    vdirs[-1] = dirs[-1]
    mids = dirs[:-1] + dirs[1:]
    mlen = np.hypot(mids[:, 0], mids[:, 1])
    # A 180-degree reversal gives a zero sum; fall back to the incoming
    # direction so the normal stays defined.
    bad = mlen < 1e-12
    mids[bad] = dirs[:-1][bad]
    mlen[bad] = np.hypot(mids[bad, 0], mids[bad, 1])
    vdirs[1:-1] = mids / mlen[:, None]

    return np.column_stack([vdirs[:, 1], -vdirs[:, 0]])


def validate_road(road: SampledRoad, spec: RoadSpec) -> ValidityReport:
    """Check the four road constraints and report every violation.

    The constraints, checked in order: distinct start/end points, road
    polygon contained in the map square, no self-intersection of the road
    polygon (lane edges included), and minimum turn radius along the
    sampled centerline of at least ``spec.min_radius``.
    """
    violations: list[Violation] = []
    samples = road.samples

    if float(np.hypot(*(samples[0] - samples[-1]))) <= 1e-6:
        violations.append(
            Violation("start_end_same", "road start and end points coincide")
        )

    poly = road.road_polygon
    eps = 1e-9
    if np.any(poly < -eps) or np.any(poly > spec.map_size + eps):
        n_out = int(np.sum(np.any((poly < -eps) | (poly > spec.map_size + eps), axis=1)))
        violations.append(
            Violation(
                "out_of_map",
                f"{n_out} road polygon vertices outside the {spec.map_size:g} m map",
            )
        )

    if not Polygon(poly).is_valid:
        violations.append(
            Violation("self_intersect", "road polygon self-intersects")
        )

    radius = min_turn_radius(road)
    if radius < spec.min_radius:
        violations.append(
            Violation(
                "too_sharp",
                f"minimum turn radius {radius:.1f} m below {spec.min_radius:g} m",
            )
        )

    return ValidityReport(is_valid=not violations, violations=tuple(violations))


def min_turn_radius(road: SampledRoad) -> float:
    """Smallest circumradius over consecutive sample triples, in meters.

    Collinear triples have infinite radius; a perfectly straight road
    therefore returns ``inf``.
    """
    return float(np.min(_circumradii(road.samples)))


def _circumradii(samples: np.ndarray) -> np.ndarray:
    if len(samples) < 3:
        raise ValueError("need at least 3 samples to measure turn radius")
    A, B, C = samples[:-2], samples[1:-1], samples[2:]
    ab = B - A
    ac = C - A
    bc = C - B
    cross = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
    la = np.hypot(bc[:, 0], bc[:, 1])
    lb = np.hypot(ac[:, 0], ac[:, 1])
    lc = np.hypot(ab[:, 0], ab[:, 1])
    with np.errstate(divide="ignore"):
        return np.where(cross == 0.0, np.inf, la * lb * lc / (2.0 * np.abs(cross)))


def project_to_polyline(p, polyline: np.ndarray) -> PolylineProjection:
    """Project a point onto a polyline.

    Returns the arc-length coordinate of the closest point and the distance
    to it.  Distance ties are broken toward the smallest arc length.
    """
    arcs, dists = project_points(np.asarray(p, dtype=float)[None, :], polyline)
    return PolylineProjection(float(arcs[0]), float(dists[0]))


def project_points(pts: np.ndarray, polyline: np.ndarray):
    """Vectorized projection of ``pts`` (k, 2) onto a polyline (n, 2).

    Returns ``(arc_lengths, distances)`` arrays of shape (k,).
    """
    polyline = np.asarray(polyline, dtype=float)
    if polyline.ndim != 2 or len(polyline) < 2:
        raise ValueError("polyline needs at least 2 points")
    a = polyline[:-1]
    d = polyline[1:] - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    safe_len2 = np.where(seg_len2 == 0.0, 1.0, seg_len2)

    rel = pts[:, None, :] - a[None, :, :]
    t_raw = np.einsum("kij,ij->ki", rel, d) / safe_len2[None, :]
    t = np.clip(t_raw, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    diff = pts[:, None, :] - closest
    dist2_clamped = np.einsum("kij,kij->ki", diff, diff)
    # Interior projections use the cross-product form, which is exact for
    # points lying on the segment's carrier line.
    cross = rel[:, :, 0] * d[None, :, 1] - rel[:, :, 1] * d[None, :, 0]
    dist2_interior = cross * cross / safe_len2[None, :]
    interior = (t_raw > 0.0) & (t_raw < 1.0) & (seg_len2[None, :] > 0.0)
    dist2 = np.where(interior, dist2_interior, dist2_clamped)

    best = np.argmin(dist2, axis=1)
    k = np.arange(len(pts))
    seg_len = np.sqrt(seg_len2)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    arcs = cum[best] + t[k, best] * seg_len[best]
    return arcs, np.sqrt(dist2[k, best])


def polyline_point_at(polyline: np.ndarray, arc_lengths: np.ndarray, s: float) -> np.ndarray:
    """Point on a polyline at arc-length coordinate ``s``, clamped to ends."""
    s = min(max(s, 0.0), float(arc_lengths[-1]))
    i = int(np.searchsorted(arc_lengths, s, side="right")) - 1
    i = min(max(i, 0), len(polyline) - 2)
    span = arc_lengths[i + 1] - arc_lengths[i]
    frac = 0.0 if span <= 0.0 else (s - arc_lengths[i]) / span
    return polyline[i] + frac * (polyline[i + 1] - polyline[i])


def road_to_json(cp: ControlPolyline, spec: RoadSpec) -> dict:
    """Canonical on-disk chromosome representation."""
    return {
        "control_points": [[float(x), float(y)] for x, y in cp.points],
        "samples_per_segment": spec.samples_per_segment,
        "lane_width": spec.lane_width,
        "map_size": spec.map_size,
    }


def road_from_json(data: dict) -> tuple[ControlPolyline, RoadSpec]:
    spec = RoadSpec(
        lane_width=float(data["lane_width"]),
        samples_per_segment=int(data["samples_per_segment"]),
        map_size=float(data["map_size"]),
    )
    cp = ControlPolyline(
        np.array(data["control_points"], dtype=float),
        bounds=(0.0, spec.map_size),
    )
    return cp, spec


def polyline_headings(polyline: np.ndarray) -> np.ndarray:
    """Heading (radians) of each polyline segment."""
    d = np.diff(np.asarray(polyline, dtype=float), axis=0)
    return np.arctan2(d[:, 1], d[:, 0])


def wrap_angle(a):
    """Wrap angles (scalar or array) into [-pi, pi)."""
    return (a + np.pi) % (2.0 * np.pi) - np.pi
