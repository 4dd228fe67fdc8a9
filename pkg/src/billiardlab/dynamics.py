"""Classical billiard dynamics: direction classification, exact trajectory
tracing on tori with obstacles and slits, maximal rectangles around closed
geodesics, x-boundedness of slit-torus trajectories, and the strip-unfolding
construction that straightens an x-bounded trajectory by iterated reflections.

All tracing arithmetic runs on Fractions: wraps, slit crossings and closure
detection are exact whenever the inputs are exactly representable, and
irrational directions are snapped to denominator <= 10^12 (so they never close
spuriously at desk scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateStart,
    InvalidGeometry,
    NotXBounded,
    PlanMismatch,
    TrajectoryHitsObstacle,
)
from .geometry import DomainSpec

_IRRATIONAL_DENOM_CAP = 10 ** 12


@dataclass(frozen=True)
class Direction:
    """Direction on a torus: rational(m, n) moves along (m*a, n*b)."""

    kind: str                     # "rational" | "irrational"
    m: int = 0
    n: int = 0
    angle: float = 0.0
    resolution_limited: bool = False

    @staticmethod
    def rational(m: int, n: int) -> "Direction":
        if (m, n) == (0, 0):
            raise InvalidGeometry("direction (0,0) is not a direction")
        g = math.gcd(abs(m), abs(n))
        return Direction(kind="rational", m=m // g, n=n // g)

    @staticmethod
    def irrational(angle: float, resolution_limited: bool = True) -> "Direction":
        return Direction(kind="irrational", angle=angle, resolution_limited=resolution_limited)

    def velocity(self, a: Fraction, b: Fraction) -> tuple[Fraction, Fraction]:
        """Unnormalized rational velocity vector."""
        if self.kind == "rational":
            return self.m * a, self.n * b
        vx = Fraction(math.cos(self.angle)).limit_denominator(_IRRATIONAL_DENOM_CAP)
        vy = Fraction(math.sin(self.angle)).limit_denominator(_IRRATIONAL_DENOM_CAP)
        return vx, vy


def classify_direction(torus_ab: tuple[float, float], v: tuple[float, float],
                       q_max: int = 10 ** 6) -> Direction:
    """Decide whether v closes on the torus with windings |m|, |n| <= q_max.

    The closure condition m*a*v_y = n*b*v_x is tested through the best
    rational approximation of (a*v_y)/(b*v_x) with bounded denominator; misses
    are reported as irrational at this resolution.
    """
    a, b = torus_ab
    vx, vy = v
    if vx == 0 and vy == 0:
        raise InvalidGeometry("zero vector has no direction")
    if q_max < 1:
        raise InvalidGeometry("q_max must be >= 1")
    if vx == 0:
        return Direction.rational(0, 1 if vy > 0 else -1)
    if vy == 0:
        return Direction.rational(1 if vx > 0 else -1, 0)
    rho = (a * vy) / (b * vx)
    approx = Fraction(rho).limit_denominator(q_max)
    # rho = n/m with direction (m*a, n*b) parallel to v
    n_, m_ = approx.numerator, approx.denominator
    if abs(n_) > q_max or m_ > q_max:
        return Direction.irrational(math.atan2(vy, vx))
    if approx != 0 and abs(rho - float(approx)) > 1e-12 * max(1.0, abs(rho)):
        return Direction.irrational(math.atan2(vy, vx))
    if approx == 0:
        return Direction.irrational(math.atan2(vy, vx))
    if vx < 0:
        m_, n_ = -m_, -n_
    return Direction.rational(m_, n_)


@dataclass
class Trajectory:
    """Traced billiard path with its planar lift.

    segments live in the fundamental domain (floats); lift_vertices are the
    exact planar positions of the start, every event, and the final point.
    reflections holds the planar X abscissas where the velocity flipped.
    period_lift, set when the orbit closed, covers exactly one period starting
    and ending at the first repeated state.
    """

    domain: DomainSpec
    origin: tuple[float, float]
    direction: Direction
    segments: list[tuple[tuple[float, float], tuple[float, float]]]
    lift_vertices: list[tuple[Fraction, Fraction]]
    reflections: list[Fraction]
    terminated_by: str            # period_closed | obstacle_hit | slit_hit | time_cap
    length: float
    period_length: float | None = None
    period_lift: list[tuple[Fraction, Fraction, int]] | None = None   # (X, Y, vx_sign)


def _next_line_hit(pos: Fraction, v: Fraction, line: Fraction, period: Fraction) -> Fraction | None:
    """Smallest t > 0 with pos + v t congruent to line mod period."""
    if v == 0:
        return None
    if v > 0:
        delta = (line - pos) % period
        t = delta / v
        return period / v if t == 0 else t
    delta = (pos - line) % period
    t = delta / (-v)
    return period / (-v) if t == 0 else t


def _disk_hit(px: Fraction, py: Fraction, vx: Fraction, vy: Fraction, dt: Fraction,
              cx: Fraction, cy: Fraction, r: Fraction) -> float | None:
    """First hit time on the disk within (0, dt], exact predicate, float time."""
    wx = px - cx
    wy = py - cy
    A = vx * vx + vy * vy
    B = wx * vx + wy * vy
    C = wx * wx + wy * wy - r * r
    if C <= 0:
        return 0.0   # starts inside or on the disk
    D = B * B - A * C
    if D < 0 or B >= 0:
        return None
    # first root tau = (-B - sqrt(D)) / A; tau <= dt  <=>  (-B - A dt)^2 <= D or -B <= A dt
    edge = -B - A * dt
    if edge > 0 and edge * edge > D:
        return None
    return float((-B - math.sqrt(float(D))) / A)


def _segment_hits_polygon(p0, p1, vertices) -> float | None:
    """Earliest parameter in [0,1] where segment p0->p1 meets the polygon."""
    x0, y0 = p0
    x1, y1 = p1
    best = None
    n = len(vertices)
    for i in range(n):
        qx0, qy0 = vertices[i]
        qx1, qy1 = vertices[(i + 1) % n]
        dx, dy = x1 - x0, y1 - y0
        ex, ey = qx1 - qx0, qy1 - qy0
        den = dx * ey - dy * ex
        if den == 0:
            continue
        t = ((qx0 - x0) * ey - (qy0 - y0) * ex) / den
        s = ((qx0 - x0) * dy - (qy0 - y0) * dx) / den
        if -1e-14 <= t <= 1 + 1e-14 and -1e-14 <= s <= 1 + 1e-14:
            best = t if best is None else min(best, t)
    return best


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def trace(domain: DomainSpec, origin: tuple[float, float], direction: Direction,
          max_length: float, stop_at_slit: bool = False,
          max_events: int = 200_000) -> Trajectory:
    """Trace a billiard trajectory, reflecting specularly at the slit.

    On a Sinai domain the trace terminates at the first obstacle hit; on a
    slit torus it reflects (or stops, with stop_at_slit) at slit crossings and
    rejects exact endpoint hits as degenerate. Closure is detected by an exact
    repeat of an event state.
    """
    if domain.kind not in ("torus", "sinai", "slit_torus"):
        raise InvalidGeometry("trace supports torus-type domains only")
    tor = domain.torus
    a = _frac(tor.a)
    b = _frac(tor.b)
    X = _frac(origin[0])
    Y = _frac(origin[1])
    vx, vy = direction.velocity(a, b)
    speed = math.hypot(float(vx), float(vy))
    if speed == 0:
        raise InvalidGeometry("direction has zero velocity")

    slit = domain.slit
    if slit is not None:
        sx = _frac(slit.x_pos)
        sy0 = _frac(slit.y0)
        sy1 = _frac(slit.y1)
        if (X - sx) % a == 0 and sy0 <= Y % b <= sy1:
            raise DegenerateStart("origin lies on the slit")
    obst = domain.obstacle
    if obst is not None and obst.shape == "disk":
        ocx = _frac(obst.center[0])
        ocy = _frac(obst.center[1])
        orr = _frac(obst.radius)
        if (X % a - ocx) ** 2 + (Y % b - ocy) ** 2 <= orr * orr:
            raise DegenerateStart("origin lies inside the obstacle")

    segments: list[tuple[tuple[float, float], tuple[float, float]]] = []
    lift: list[tuple[Fraction, Fraction]] = [(X, Y)]
    reflections: list[Fraction] = []
    seen: dict[tuple, tuple[Fraction, int]] = {(X % a, Y % b, vx, vy): (Fraction(0), 0)}
    t_total = Fraction(0)
    length_cap_t = Fraction(max_length / speed).limit_denominator(10 ** 9)
    terminated = "time_cap"
    period_span: tuple[int, int] | None = None   # lift-vertex index range of one period

    def fundamental(px: Fraction, py: Fraction) -> tuple[float, float]:
        return float(px % a), float(py % b)

    for _ in range(max_events):
        # next event among x-wrap, y-wrap, slit lines
        candidates: list[tuple[Fraction, str]] = []
        tx = _next_line_hit(X, vx, Fraction(0), a)
        if tx is not None:
            candidates.append((tx, "xwrap"))
        ty = _next_line_hit(Y, vy, Fraction(0), b)
        if ty is not None:
            candidates.append((ty, "ywrap"))
        if slit is not None:
            ts = _next_line_hit(X, vx, sx, a)
            if ts is not None:
                candidates.append((ts, "slit_line"))
        if not candidates:
            # vertical/horizontal degenerate motion with no events on that axis
            candidates = [(Fraction(1), "free")]
        dt = min(t for t, _ in candidates)
        kinds = {kind for t, kind in candidates if t == dt}
        capped = False
        if t_total + dt >= length_cap_t:
            dt = length_cap_t - t_total
            kinds = {"cap"}
            capped = True

        # obstacle check on the sub-segment (no wrap happens strictly inside it)
        if obst is not None:
            x_f = X % a
            y_f = Y % b
            if obst.shape == "disk":
                tau = _disk_hit(x_f, y_f, vx, vy, dt, ocx, ocy, orr)
            else:
                p0 = (float(x_f), float(y_f))
                p1 = (float(x_f + vx * dt), float(y_f + vy * dt))
                s = _segment_hits_polygon(p0, p1, obst.vertices)
                tau = None if s is None else s * float(dt)
            if tau is not None and tau <= float(dt):
                hitX = X + vx * Fraction(tau).limit_denominator(10 ** 12)
                hitY = Y + vy * Fraction(tau).limit_denominator(10 ** 12)
                segments.append((fundamental(X, Y), fundamental(hitX, hitY)))
                lift.append((hitX, hitY))
                t_total += Fraction(tau).limit_denominator(10 ** 12)
                terminated = "obstacle_hit"
                break

        newX = X + vx * dt
        newY = Y + vy * dt
        segments.append((fundamental(X, Y), fundamental(newX, newY)))
        X, Y = newX, newY
        t_total += dt
        lift.append((X, Y))

        if capped:
            terminated = "time_cap"
            break

        if "slit_line" in kinds:
            ymod = Y % b
            if sy0 < ymod < sy1:
                if stop_at_slit:
                    terminated = "slit_hit"
                    break
                vx = -vx
                reflections.append(X)
            elif ymod == sy0 or ymod == sy1:
                raise DegenerateStart("trajectory hits a slit endpoint exactly")

        state = (X % a, Y % b, vx, vy)
        if state in seen:
            t_prev, vidx = seen[state]
            terminated = "period_closed"
            period_span = (vidx, len(lift) - 1)
            break
        seen[state] = (t_total, len(lift) - 1)

    length = float(t_total) * speed
    period_length = None
    period_lift = None
    if terminated == "period_closed" and period_span is not None:
        i0, i1 = period_span
        # arc length of one period: |y| progresses monotonically unless horizontal
        if vy != 0:
            span = abs(lift[i1][1] - lift[i0][1])
            period_length = float(span) * speed / abs(float(vy))
        else:
            span = abs(lift[i1][0] - lift[i0][0])
            period_length = float(span) * speed / abs(float(vx))
        period_lift = []
        sign = 0
        for i in range(i0, i1 + 1):
            if i < i1:
                dxi = lift[i + 1][0] - lift[i][0]
                sign = 1 if dxi > 0 else (-1 if dxi < 0 else 0)
            period_lift.append((lift[i][0], lift[i][1], sign))

    return Trajectory(domain=domain, origin=(float(origin[0]), float(origin[1])),
                      direction=direction, segments=segments, lift_vertices=lift,
                      reflections=reflections, terminated_by=terminated,
                      length=length, period_length=period_length, period_lift=period_lift)


# --- maximal rectangle --------------------------------------------------------


@dataclass(frozen=True)
class MaximalRectangle:
    """Periodic rectangle around a closed rational geodesic avoiding the obstacle."""

    direction: Direction
    line_offset: float
    length: float
    width: float
    frame_angle: float
    strand_spacing: float


def _obstacle_projection_interval(domain: DomainSpec, normal: tuple[float, float]) -> tuple[float, float]:
    obst = domain.obstacle
    nx_, ny_ = normal
    if obst.shape == "disk":
        c = obst.center[0] * nx_ + obst.center[1] * ny_
        return c - obst.radius, c + obst.radius
    projs = [vx * nx_ + vy * ny_ for vx, vy in obst.vertices]
    return min(projs), max(projs)


def maximal_rectangle(domain: DomainSpec, direction: Direction,
                      line_offset: float = 0.0) -> MaximalRectangle:
    """Maximal-width periodic rectangle around the closed geodesic through
    (line_offset, 0) in a rational direction, avoiding the obstacle.

    The geodesic's planar lift is the family of parallel lines at spacing
    a*b/L; the width is twice the gap between that family and the obstacle's
    projection onto the normal direction.
    """
    if direction.kind != "rational":
        raise InvalidGeometry("maximal_rectangle needs a rational direction")
    if domain.kind != "sinai" or domain.obstacle is None:
        raise InvalidGeometry("maximal_rectangle needs a Sinai domain")
    a = domain.torus.a
    b = domain.torus.b
    m, n = direction.m, direction.n
    L = math.hypot(m * a, n * b)
    normal = (-(n * b) / L, (m * a) / L)
    spacing = (a * b) / L
    base = line_offset * normal[0]          # projection of (line_offset, 0)
    pmin, pmax = _obstacle_projection_interval(domain, normal)

    k_lo = math.floor((pmin - base) / spacing) - 1
    k_hi = math.ceil((pmax - base) / spacing) + 1
    gap = math.inf
    for k in range(k_lo, k_hi + 1):
        o = base + k * spacing
        if pmin <= o <= pmax:
            raise TrajectoryHitsObstacle(
                f"geodesic strand at offset {o:.6g} crosses the obstacle projection")
        gap = min(gap, pmin - o if o < pmin else o - pmax)
    return MaximalRectangle(direction=direction, line_offset=line_offset,
                            length=L, width=2.0 * gap,
                            frame_angle=math.atan2(n * b, m * a),
                            strand_spacing=spacing)


# --- x-boundedness and unfolding -----------------------------------------------


@dataclass(frozen=True)
class XClassification:
    kind: str                     # "x_bounded" | "x_unbounded"
    strip: tuple[Fraction, Fraction] | None = None
    inconclusive: bool = False

    @property
    def bounded(self) -> bool:
        return self.kind == "x_bounded"


def classify_x_bounded(domain: DomainSpec, traj: Trajectory,
                       stable_periods: int = 10) -> XClassification:
    """Classify the planar lift of a slit-torus trajectory as x-bounded or not.

    Closed orbits are decided exactly by the net x-displacement over one
    period; open traces fall back to watching the lift's x-extent over
    successive y-periods.
    """
    if domain.kind != "slit_torus":
        raise InvalidGeometry("x-boundedness concerns slit-torus trajectories")
    if traj.terminated_by == "period_closed" and traj.period_lift:
        xs = [v[0] for v in traj.period_lift]
        dx_net = xs[-1] - xs[0]
        if dx_net == 0:
            return XClassification(kind="x_bounded", strip=(min(xs), max(xs)))
        return XClassification(kind="x_unbounded")

    b = _frac(domain.torus.b)
    xs = [v[0] for v in traj.lift_vertices]
    ys = [v[1] for v in traj.lift_vertices]
    y0 = ys[0]
    # x-extent snapshots each time |y - y0| crosses another vertical period
    extents: list[tuple[Fraction, Fraction]] = []
    lo = hi = xs[0]
    crossed = 1
    for x, y in zip(xs, ys):
        lo = min(lo, x)
        hi = max(hi, x)
        while abs(y - y0) >= crossed * b:
            extents.append((lo, hi))
            crossed += 1
    if len(extents) < 2 * stable_periods:
        return XClassification(kind="x_unbounded", inconclusive=True)
    tail = extents[-stable_periods:]
    if all(t == tail[0] for t in tail):
        return XClassification(kind="x_bounded", strip=tail[0])
    return XClassification(kind="x_unbounded")


@dataclass(frozen=True)
class FoldPiece:
    """Affine piece of the fold map: X = x_at_lo + sign * (xhat - xhat_lo)."""

    xhat_lo: Fraction
    xhat_hi: Fraction
    sign: int
    x_at_lo: Fraction
    parity: int                   # (-1)^(reflections before this piece)


@dataclass
class UnfoldingPlan:
    """Piecewise-isometric unfolding of an x-bounded trajectory.

    The terminal strip is parametrized by the straightened coordinate xhat
    with period `period`; residual_lines are the xhat abscissas (mod period)
    where the odd reflections leave distributional inhomogeneities, and
    slit_images are the xhat abscissas of slit-line copies inside the strip.
    """

    domain: DomainSpec
    strip: tuple[Fraction, Fraction]
    pieces: list[FoldPiece]
    period: Fraction
    residual_lines: list[Fraction]
    slit_images: list[Fraction]
    reflection_abscissas: list[Fraction]      # X values of the turning lines
    n_reflections: int

    def map_to_source(self, xhat: Fraction) -> tuple[Fraction, int]:
        """Fold xhat (mod period) back to the source X coordinate and parity."""
        t = (xhat - self.pieces[0].xhat_lo) % self.period + self.pieces[0].xhat_lo
        for piece in self.pieces:
            if piece.xhat_lo <= t <= piece.xhat_hi:
                return piece.x_at_lo + piece.sign * (t - piece.xhat_lo), piece.parity
        raise PlanMismatch(f"xhat {t} escapes the fold pieces")

    def reflection_involution_defect(self, samples: Sequence[Fraction]) -> int:
        """Count samples where some reflection map fails to be an involution."""
        bad = 0
        for R in self.reflection_abscissas:
            for x in samples:
                if 2 * R - (2 * R - x) != x:
                    bad += 1
        return bad


def unfold(domain: DomainSpec, traj: Trajectory) -> UnfoldingPlan:
    """Build the unfolding plan of a closed x-bounded trajectory.

    Merges the period lift into maximal monotone stretches in x; each turning
    point becomes one odd reflection. A degenerate (vertical) trajectory gives
    the identity plan with no residual lines.
    """
    cls = classify_x_bounded(domain, traj)
    if not cls.bounded:
        raise NotXBounded("trajectory is not x-bounded")
    a = _frac(domain.torus.a)
    sxp = _frac(domain.slit.x_pos)

    if traj.period_lift is None:
        raise NotXBounded("unfolding needs a closed trajectory")
    verts = traj.period_lift
    xs = [v[0] for v in verts]

    if all(x == xs[0] for x in xs):
        # vertical line: already straight, identity plan over one x-period
        piece = FoldPiece(xhat_lo=Fraction(0), xhat_hi=a, sign=1,
                          x_at_lo=Fraction(0), parity=1)
        return UnfoldingPlan(domain=domain, strip=(xs[0], xs[0]), pieces=[piece],
                             period=a, residual_lines=[], slit_images=[sxp % a],
                             reflection_abscissas=[], n_reflections=0)

    # merge into monotone stretches
    turns: list[Fraction] = [xs[0]]
    signs: list[int] = []
    cur_sign = 0
    for i in range(len(xs) - 1):
        d = xs[i + 1] - xs[i]
        if d == 0:
            continue
        s = 1 if d > 0 else -1
        if cur_sign == 0:
            cur_sign = s
            signs.append(s)
        elif s != cur_sign:
            turns.append(xs[i])
            signs.append(s)
            cur_sign = s
    turns.append(xs[-1])

    pieces: list[FoldPiece] = []
    residual: list[Fraction] = []
    xhat = Fraction(0)
    parity = 1
    for j in range(len(signs)):
        x_from = turns[j]
        x_to = turns[j + 1]
        width = abs(x_to - x_from)
        pieces.append(FoldPiece(xhat_lo=xhat, xhat_hi=xhat + width, sign=signs[j],
                                x_at_lo=x_from, parity=parity))
        xhat += width
        if j < len(signs) - 1:
            residual.append(xhat)
            parity = -parity
    period = xhat
    reflection_abscissas = [turns[j + 1] for j in range(len(signs) - 1)]
    seam_turn = signs[-1] != signs[0]
    if seam_turn:
        residual.append(Fraction(0))
        reflection_abscissas.append(turns[0])
    n_reflections = (len(signs) - 1) + (1 if seam_turn else 0)

    # xhat images of slit lines (X congruent to slit abscissa mod a)
    slit_images: list[Fraction] = []
    for piece in pieces:
        lo_x = piece.x_at_lo
        hi_x = piece.x_at_lo + piece.sign * (piece.xhat_hi - piece.xhat_lo)
        x_lo, x_hi = (lo_x, hi_x) if piece.sign > 0 else (hi_x, lo_x)
        k = math.floor(float((x_lo - sxp) / a)) - 1
        while sxp + k * a <= x_hi:
            xval = sxp + Fraction(k) * a
            if x_lo <= xval <= x_hi:
                xh = piece.xhat_lo + piece.sign * (xval - piece.x_at_lo)
                slit_images.append(xh % period)
            k += 1

    return UnfoldingPlan(domain=domain, strip=cls.strip, pieces=pieces, period=period,
                         residual_lines=sorted({r % period for r in residual}),
                         slit_images=sorted(set(slit_images)),
                         reflection_abscissas=reflection_abscissas,
                         n_reflections=n_reflections)


def residual_lines_clear_of_slits(plan: UnfoldingPlan) -> bool:
    """Whether no residual line coincides with a slit-copy abscissa."""
    return not (set(plan.residual_lines) & set(plan.slit_images))


def unfold_function(plan: UnfoldingPlan, u: np.ndarray, grid) -> np.ndarray:
    """Unfold a slit-torus grid function onto the terminal strip.

    Columns of the output follow the straightened coordinate over one period;
    each column is +-1 times a source column per the fold map. Raises
    PlanMismatch when the plan's breakpoints or period are off-grid.
    """
    ny, nx = u.shape
    dxg = Fraction(grid.dx).limit_denominator(10 ** 12)
    n_cols_f = plan.period / dxg
    if n_cols_f.denominator != 1:
        raise PlanMismatch(f"plan period {plan.period} is not a multiple of dx")
    n_cols = int(n_cols_f)
    out = np.empty((ny, n_cols), dtype=u.dtype)
    x0 = plan.pieces[0].xhat_lo
    for j in range(n_cols):
        xh = x0 + j * dxg
        X, parity = plan.map_to_source(xh)
        col_f = (X / dxg) % nx
        if col_f.denominator != 1:
            raise PlanMismatch(f"fold of column {j} lands off-grid at X={X}")
        out[:, j] = parity * u[:, int(col_f)]
    return out
