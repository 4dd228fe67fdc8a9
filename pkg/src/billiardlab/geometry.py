"""Billiard domain specifications and their rasterization onto uniform grids.

Supported domains: rectangle, flat torus, torus minus an obstacle (disk or
polygon), torus minus a vertical slit, and a stadium fixture. Rasterization
tags every node as interior / obstacle / slit / outer boundary; the spectral
module builds operators on the interior nodes only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EmptyRegion, InvalidGeometry, ResolutionTooCoarse

# node classification codes
INTERIOR = 0
OBSTACLE = 1
SLIT = 2
OUTER = 3

_BC_KINDS = ("dirichlet", "neumann", "periodic")


@dataclass(frozen=True)
class TorusSpec:
    """Flat torus with horizontal period a and vertical period b."""

    a: float = 1.0
    b: float = 1.0

    def validate(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise InvalidGeometry(f"torus periods must be positive, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class ObstacleSpec:
    """Obstacle removed from a torus: a disk or a simple polygon.

    Convexity is deliberately not required; any simple shape strictly inside
    one fundamental domain is accepted.
    """

    shape: str                      # "disk" | "polygon"
    center: tuple[float, float] | None = None
    radius: float | None = None
    vertices: tuple[tuple[float, float], ...] | None = None

    @staticmethod
    def disk(center: tuple[float, float], radius: float) -> "ObstacleSpec":
        return ObstacleSpec(shape="disk", center=tuple(center), radius=float(radius))

    @staticmethod
    def polygon(vertices: Sequence[tuple[float, float]]) -> "ObstacleSpec":
        return ObstacleSpec(shape="polygon", vertices=tuple(tuple(v) for v in vertices))

    def validate(self, torus: TorusSpec) -> None:
        if self.shape == "disk":
            if self.center is None or self.radius is None:
                raise InvalidGeometry("disk obstacle needs center and radius")
            cx, cy = self.center
            r = self.radius
            if r <= 0:
                raise InvalidGeometry("disk radius must be positive")
            if r >= min(torus.a, torus.b) / 2:
                raise InvalidGeometry("disk radius must be < min(a, b)/2")
            if not (cx - r > 0 and cx + r < torus.a and cy - r > 0 and cy + r < torus.b):
                raise InvalidGeometry("obstacle closure must stay strictly inside one fundamental domain")
        elif self.shape == "polygon":
            if self.vertices is None or len(self.vertices) < 3:
                raise InvalidGeometry("polygon obstacle needs at least 3 vertices")
            pts = np.asarray(self.vertices, dtype=float)
            if not (pts[:, 0].min() > 0 and pts[:, 0].max() < torus.a
                    and pts[:, 1].min() > 0 and pts[:, 1].max() < torus.b):
                raise InvalidGeometry("polygon must stay strictly inside one fundamental domain")
            if _polygon_self_intersects(pts):
                raise InvalidGeometry("polygon must be simple (non-self-intersecting)")
        else:
            raise InvalidGeometry(f"unknown obstacle shape {self.shape!r}")


@dataclass(frozen=True)
class SlitSpec:
    """Vertical slit {x = x_pos} x [y0, y1] carrying a Dirichlet condition."""

    x_pos: float
    y0: float
    y1: float

    def normalized(self) -> "SlitSpec":
        lo, hi = sorted((self.y0, self.y1))
        return SlitSpec(self.x_pos, lo, hi)

    def validate(self, torus: TorusSpec) -> None:
        if not (0 <= self.x_pos < torus.a):
            raise InvalidGeometry(f"slit x position {self.x_pos} outside [0, {torus.a})")
        if not (0 <= self.y0 < self.y1 < torus.b):
            raise InvalidGeometry("slit must satisfy 0 <= y0 < y1 < b (a closed loop is not a slit)")


@dataclass(frozen=True)
class DomainSpec:
    """Validated billiard domain with boundary-condition tags.

    bc maps boundary components to condition kinds; recognized components are
    "outer" (rectangle/stadium walls or the torus identification) and
    "obstacle". The slit always carries a Dirichlet condition.
    """

    kind: str                       # rectangle | torus | sinai | slit_torus | stadium
    torus: TorusSpec | None = None
    obstacle: ObstacleSpec | None = None
    slit: SlitSpec | None = None
    width: float | None = None      # rectangle / stadium rectangular part
    height: float | None = None
    cap_radius: float | None = None
    bc: dict = field(default_factory=dict)


def rectangle(width: float, height: float, bc: str = "dirichlet") -> DomainSpec:
    return build_domain(DomainSpec(kind="rectangle", width=width, height=height, bc={"outer": bc}))


def torus(a: float = 1.0, b: float = 1.0) -> DomainSpec:
    return build_domain(DomainSpec(kind="torus", torus=TorusSpec(a, b), bc={"outer": "periodic"}))


def sinai(tor: TorusSpec, obstacle: ObstacleSpec, obstacle_bc: str = "dirichlet") -> DomainSpec:
    return build_domain(DomainSpec(kind="sinai", torus=tor, obstacle=obstacle,
                                   bc={"outer": "periodic", "obstacle": obstacle_bc}))


def slit_torus(tor: TorusSpec, slit: SlitSpec) -> DomainSpec:
    return build_domain(DomainSpec(kind="slit_torus", torus=tor, slit=slit,
                                   bc={"outer": "periodic", "slit": "dirichlet"}))


def stadium(rect_w: float, rect_h: float, cap_radius: float) -> DomainSpec:
    return build_domain(DomainSpec(kind="stadium", width=rect_w, height=rect_h,
                                   cap_radius=cap_radius, bc={"outer": "dirichlet"}))


def build_domain(spec: DomainSpec) -> DomainSpec:
    """Validate a DomainSpec and return a normalized copy."""
    kind = spec.kind
    bc = dict(spec.bc)
    for comp, cond in bc.items():
        if cond not in _BC_KINDS:
            raise InvalidGeometry(f"unknown boundary condition {cond!r} on {comp!r}")

    if kind in ("rectangle", "stadium"):
        if spec.width is None or spec.height is None or spec.width <= 0 or spec.height <= 0:
            raise InvalidGeometry("rectangle/stadium needs positive width and height")
        if bc.get("outer", "dirichlet") == "periodic":
            raise InvalidGeometry("periodic bc is only valid on torus-type outer boundaries")
        bc.setdefault("outer", "dirichlet")
        if kind == "stadium":
            if spec.cap_radius is None or spec.cap_radius <= 0:
                raise InvalidGeometry("stadium needs a positive cap radius")
            if spec.cap_radius > spec.height / 2 + 1e-12:
                raise InvalidGeometry("stadium cap radius cannot exceed half the rectangle height")
        return DomainSpec(kind=kind, width=float(spec.width), height=float(spec.height),
                          cap_radius=None if spec.cap_radius is None else float(spec.cap_radius), bc=bc)

    if kind in ("torus", "sinai", "slit_torus"):
        if spec.torus is None:
            raise InvalidGeometry(f"{kind} needs a TorusSpec")
        spec.torus.validate()
        bc.setdefault("outer", "periodic")
        if bc["outer"] != "periodic":
            raise InvalidGeometry("torus-type outer boundary must be periodic")
        if kind == "sinai":
            if spec.obstacle is None:
                raise InvalidGeometry("sinai needs an obstacle")
            spec.obstacle.validate(spec.torus)
            bc.setdefault("obstacle", "dirichlet")
            if bc["obstacle"] == "periodic":
                raise InvalidGeometry("obstacle bc must be dirichlet or neumann")
            return DomainSpec(kind=kind, torus=spec.torus, obstacle=spec.obstacle, bc=bc)
        if kind == "slit_torus":
            if spec.slit is None:
                raise InvalidGeometry("slit_torus needs a slit")
            slit = spec.slit.normalized()
            slit.validate(spec.torus)
            if bc.get("slit", "dirichlet") != "dirichlet":
                raise InvalidGeometry("the slit always carries a Dirichlet condition")
            bc["slit"] = "dirichlet"
            return DomainSpec(kind=kind, torus=spec.torus, slit=slit, bc=bc)
        return DomainSpec(kind=kind, torus=spec.torus, bc=bc)

    raise InvalidGeometry(f"unknown domain kind {kind!r}")


@dataclass(frozen=True)
class Grid:
    """Uniform grid over a domain with per-node classification.

    node_class is indexed [j, i] for the node at (i*dx, j*dy). Torus-type
    grids have nx*ny nodes (wrapping); rectangle-type grids have
    (nx+1)*(ny+1) nodes including the outer boundary ring. origin gives the
    coordinate of node (0, 0); for tori it is (0, 0).
    """

    spec: DomainSpec
    nx: int
    ny: int
    dx: float
    dy: float
    node_class: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def periodic(self) -> bool:
        return self.spec.bc.get("outer") == "periodic"

    @property
    def shape(self) -> tuple[int, int]:
        return self.node_class.shape

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """X, Y arrays broadcastable to node_class.shape."""
        nyn, nxn = self.node_class.shape
        x = self.origin[0] + np.arange(nxn) * self.dx
        y = self.origin[1] + np.arange(nyn) * self.dy
        return x[None, :], y[:, None]


def _polygon_self_intersects(pts: np.ndarray) -> bool:
    n = len(pts)

    def seg_cross(p, q, r, s) -> bool:
        d1 = np.cross(q - p, r - p)
        d2 = np.cross(q - p, s - p)
        d3 = np.cross(s - r, p - r)
        d4 = np.cross(s - r, q - r)
        return (d1 * d2 < 0) and (d3 * d4 < 0)

    for i in range(n):
        p, q = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            r, s = pts[j], pts[(j + 1) % n]
            if seg_cross(p, q, r, s):
                return True
    return False


def _point_in_polygon(X: np.ndarray, Y: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Crossing-number test, boundary points counted as inside."""
    inside = np.zeros(np.broadcast(X, Y).shape, dtype=bool)
    n = len(pts)
    Xb, Yb = np.broadcast_arrays(X, Y)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        cond = (Yb > min(y0, y1)) & (Yb <= max(y0, y1))
        if y1 != y0:
            xints = x0 + (Yb - y0) * (x1 - x0) / (y1 - y0)
            inside ^= cond & (Xb <= xints)
    # close the boundary itself
    d = _dist_to_polygon(Xb, Yb, pts)
    return inside | (d <= 1e-12)


def _dist_point_segment(X, Y, p0, p1) -> np.ndarray:
    vx, vy = p1[0] - p0[0], p1[1] - p0[1]
    wx, wy = X - p0[0], Y - p0[1]
    vv = vx * vx + vy * vy
    t = np.clip((wx * vx + wy * vy) / vv, 0.0, 1.0) if vv > 0 else 0.0
    return np.hypot(wx - t * vx, wy - t * vy)


def _dist_to_polygon(X, Y, pts: np.ndarray) -> np.ndarray:
    d = np.full(np.broadcast(X, Y).shape, np.inf)
    n = len(pts)
    for i in range(n):
        d = np.minimum(d, _dist_point_segment(X, Y, pts[i], pts[(i + 1) % n]))
    return d


def _torus_offsets(tor: TorusSpec):
    return [(dx_, dy_) for dx_ in (-tor.a, 0.0, tor.a) for dy_ in (-tor.b, 0.0, tor.b)]


def obstacle_distance(spec: DomainSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Distance from points to the obstacle set, torus-metric, negative inside."""
    obst = spec.obstacle
    tor = spec.torus
    if obst is None or tor is None:
        raise InvalidGeometry("domain has no obstacle")
    if obst.shape == "disk":
        cx, cy = obst.center
        d = np.full(np.broadcast(X, Y).shape, np.inf)
        for ox, oy in _torus_offsets(tor):
            d = np.minimum(d, np.hypot(X - cx + ox, Y - cy + oy))
        return d - obst.radius
    pts = np.asarray(obst.vertices, dtype=float)
    d = np.full(np.broadcast(X, Y).shape, np.inf)
    inside = np.zeros(np.broadcast(X, Y).shape, dtype=bool)
    for ox, oy in _torus_offsets(tor):
        d = np.minimum(d, _dist_to_polygon(X + ox, Y + oy, pts))
        inside |= _point_in_polygon(X + ox, Y + oy, pts)
    return np.where(inside, -d, d)


def _stadium_inside(spec: DomainSpec, X, Y) -> np.ndarray:
    w, hgt, r = spec.width, spec.height, spec.cap_radius
    yc = hgt / 2.0
    in_rect = (X >= 0) & (X <= w) & (Y >= 0) & (Y <= hgt)
    in_lcap = (X < 0) & (np.hypot(X, Y - yc) <= r)
    in_rcap = (X > w) & (np.hypot(X - w, Y - yc) <= r)
    return in_rect | in_lcap | in_rcap


def rasterize(spec: DomainSpec, nx: int, ny: int) -> Grid:
    """Rasterize a validated domain onto an nx-by-ny uniform grid."""
    if nx < 16 or ny < 16:
        raise InvalidGeometry("rasterize requires nx, ny >= 16")
    spec = build_domain(spec)

    if spec.kind in ("torus", "sinai", "slit_torus"):
        tor = spec.torus
        dx = tor.a / nx
        dy = tor.b / ny
        cls = np.full((ny, nx), INTERIOR, dtype=np.int8)
        x = np.arange(nx) * dx
        y = np.arange(ny) * dy
        X, Y = x[None, :], y[:, None]
        if spec.kind == "sinai":
            inside = obstacle_distance(spec, X, Y) <= 0
            if not inside.any():
                raise ResolutionTooCoarse("obstacle rasterizes to an empty node set")
            cls[inside] = OBSTACLE
        elif spec.kind == "slit_torus":
            slit = spec.slit
            icol_f = slit.x_pos / dx
            icol = int(round(icol_f))
            if abs(icol_f - icol) > 1e-9:
                raise InvalidGeometry(
                    f"slit x={slit.x_pos} must lie on a grid line (nx={nx} gives dx={dx})")
            icol %= nx
            ysel = (y >= slit.y0 - 1e-12) & (y <= slit.y1 + 1e-12)
            if not ysel.any():
                raise ResolutionTooCoarse("slit rasterizes to an empty node set")
            cls[ysel, icol] = SLIT
        return Grid(spec=spec, nx=nx, ny=ny, dx=dx, dy=dy, node_class=cls)

    if spec.kind == "rectangle":
        dx = spec.width / nx
        dy = spec.height / ny
        cls = np.full((ny + 1, nx + 1), INTERIOR, dtype=np.int8)
        cls[0, :] = OUTER
        cls[-1, :] = OUTER
        cls[:, 0] = OUTER
        cls[:, -1] = OUTER
        return Grid(spec=spec, nx=nx, ny=ny, dx=dx, dy=dy, node_class=cls)

    if spec.kind == "stadium":
        r = spec.cap_radius
        x0 = -r
        total_w = spec.width + 2 * r
        dx = total_w / nx
        dy = spec.height / ny
        cls = np.full((ny + 1, nx + 1), OUTER, dtype=np.int8)
        x = x0 + np.arange(nx + 1) * dx
        y = np.arange(ny + 1) * dy
        X, Y = x[None, :], y[:, None]
        inside = _stadium_inside(spec, X, Y)
        # strictly interior: all four neighbors inside as well
        core = inside.copy()
        core[1:-1, 1:-1] &= inside[:-2, 1:-1] & inside[2:, 1:-1] & inside[1:-1, :-2] & inside[1:-1, 2:]
        core[0, :] = False
        core[-1, :] = False
        core[:, 0] = False
        core[:, -1] = False
        cls[core] = INTERIOR
        if not core.any():
            raise ResolutionTooCoarse("stadium rasterizes to an empty interior")
        return Grid(spec=spec, nx=nx, ny=ny, dx=dx, dy=dy, node_class=cls, origin=(x0, 0.0))

    raise InvalidGeometry(f"unknown domain kind {spec.kind!r}")


# --- region selectors -------------------------------------------------------

@dataclass(frozen=True)
class NeighborhoodOfObstacle:
    eps: float


@dataclass(frozen=True)
class NeighborhoodOfSegment:
    segments: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    eps: float

    @staticmethod
    def around(points: Sequence[tuple[float, float]], eps: float) -> "NeighborhoodOfSegment":
        """Neighborhood of a set of points (degenerate segments)."""
        return NeighborhoodOfSegment(tuple((tuple(p), tuple(p)) for p in points), eps)


@dataclass(frozen=True)
class RectangleSub:
    x0: float
    x1: float
    y0: float
    y1: float


@dataclass(frozen=True)
class TubeAroundPath:
    points: tuple[tuple[float, float], ...]
    eps: float


Region = NeighborhoodOfObstacle | NeighborhoodOfSegment | RectangleSub | TubeAroundPath


def _torus_segment_distance(tor: TorusSpec | None, X, Y, p0, p1) -> np.ndarray:
    if tor is None:
        return _dist_point_segment(X, Y, np.asarray(p0, float), np.asarray(p1, float))
    d = np.full(np.broadcast(X, Y).shape, np.inf)
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    for ox, oy in _torus_offsets(tor):
        d = np.minimum(d, _dist_point_segment(X + ox, Y + oy, p0, p1))
    return d


def region_mask(spec: DomainSpec, region: Region, grid: Grid) -> np.ndarray:
    """Boolean node mask of the requested region, excluding non-interior nodes."""
    X, Y = grid.node_coords()
    cls = grid.node_class
    eligible = cls == INTERIOR

    if isinstance(region, NeighborhoodOfObstacle):
        if region.eps <= 0:
            raise InvalidGeometry("region eps must be positive")
        d = obstacle_distance(spec, X, Y)
        mask = (d > 0) & (d < region.eps) & eligible
    elif isinstance(region, NeighborhoodOfSegment):
        if region.eps <= 0:
            raise InvalidGeometry("region eps must be positive")
        d = np.full(cls.shape, np.inf)
        for p0, p1 in region.segments:
            d = np.minimum(d, _torus_segment_distance(spec.torus, X, Y, p0, p1))
        mask = (d < region.eps) & eligible
    elif isinstance(region, RectangleSub):
        Xb, Yb = np.broadcast_arrays(X, Y)
        mask = (Xb >= region.x0) & (Xb < region.x1) & (Yb >= region.y0) & (Yb < region.y1) & eligible
    elif isinstance(region, TubeAroundPath):
        if region.eps <= 0:
            raise InvalidGeometry("region eps must be positive")
        d = np.full(cls.shape, np.inf)
        pts = region.points
        for i in range(len(pts) - 1):
            d = np.minimum(d, _torus_segment_distance(spec.torus, X, Y, pts[i], pts[i + 1]))
        mask = (d < region.eps) & eligible
    else:
        raise InvalidGeometry(f"unknown region selector {region!r}")

    if not mask.any():
        raise EmptyRegion(f"region {region!r} selects no nodes")
    return mask


def grid_line_fraction(value: float, dx: float) -> Fraction:
    """Snap a coordinate to the grid-line lattice, erroring if it is off-grid."""
    q = value / dx
    qi = round(q)
    if abs(q - qi) > 1e-9:
        raise InvalidGeometry(f"coordinate {value} is not on a grid line (dx={dx})")
    return Fraction(qi)
