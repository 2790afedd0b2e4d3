"""Exact event-driven propagation: straight lines outside the bumps, Larmor
arcs inside, boundary crossings resolved in closed form (disks) or by
bracketed root polishing (ellipses)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InteriorTrapped, LimitExceeded, ZeroField
from .geometry import Disk, J2, Scene

GLANCING_TOL = 1e-10  # normalized ray discriminant below this counts as tangent
EVENT_TOL = 1e-9  # smallest forward ray parameter accepted as a new event


@dataclass
class State:
    q: np.ndarray
    v: np.ndarray
    region: int | None = None  # None = outside, else 1-based bump index

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def copy(self):
        return State(self.q.copy(), self.v.copy(), self.region)


@dataclass
class SegmentPiece:
    t0: float
    t1: float
    q0: np.ndarray
    q1: np.ndarray

    @property
    def length(self):
        return self.t1 - self.t0


@dataclass
class ArcPiece:
    t0: float
    t1: float
    bump: int  # 1-based index
    center: np.ndarray
    radius: float
    q0: np.ndarray
    q1: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    dangle: float  # signed turning angle b * (t1 - t0)

    @property
    def duration(self):
        return self.t1 - self.t0


@dataclass
class Event:
    kind: str  # 'enter' | 'exit' | 'glance'
    time: float
    bump: int
    q: np.ndarray
    v: np.ndarray


@dataclass
class Orbit:
    pieces: list = field(default_factory=list)
    events: list = field(default_factory=list)
    escaped: bool = False
    glancing: bool = False
    trapped: bool = False
    final_state: State | None = None

    @property
    def itinerary(self):
        return tuple(ev.bump for ev in self.events if ev.kind == "enter")

    @property
    def total_time(self):
        return self.pieces[-1].t1 if self.pieces else 0.0


# ---------------------------------------------------------------------------
# elementary motions


def larmor_center(q, v, b):
    """Center q + J v / b of the Larmor circle through (q, v)."""
    if b == 0:
        raise ZeroField("Larmor center undefined for b = 0")
    return np.asarray(q, dtype=float) + (J2 @ np.asarray(v, dtype=float)) / b


def advance_in_field(q, v, b, t):
    """Closed-form in-field motion over time t; exact to rounding and
    periodic with period 2 pi / |b|."""
    if b == 0:
        raise ZeroField("use free advance for b = 0")
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    s, c = math.sin(b * t), math.cos(b * t)
    m = np.array([[s, c - 1.0], [1.0 - c, s]]) / b
    r = np.array([[c, -s], [s, c]])
    return q + m @ v, r @ v


def advance_free(q, v, t):
    return np.asarray(q, dtype=float) + t * np.asarray(v, dtype=float), \
        np.asarray(v, dtype=float)


# ---------------------------------------------------------------------------
# events


@dataclass
class RayHit:
    bump: int
    t: float
    glancing: bool
    t_tangent: float  # closest-approach parameter (used for glancing events)


def ray_hits(scene: Scene, q, v, tol=EVENT_TOL):
    """Forward-ray intersections with every bump boundary, sorted by time.

    Tangencies (normalized discriminant below GLANCING_TOL) are reported as
    glancing hits at the closest-approach parameter.
    """
    hits = []
    for i, bump in enumerate(scene.bumps):
        a2, a1, a0 = bump.shape.ray_coefficients(q, v)
        disc = a1 * a1 - 4.0 * a2 * a0
        ndisc = disc / (4.0 * a2 * a2)  # scale-free: (dist to tangency)^2-ish
        if ndisc < -GLANCING_TOL:
            continue
        t_mid = -a1 / (2.0 * a2)
        if abs(ndisc) <= GLANCING_TOL:
            if t_mid > tol:
                hits.append(RayHit(i + 1, t_mid, True, t_mid))
            continue
        root = math.sqrt(disc) / (2.0 * a2)
        t1 = t_mid - root
        if t1 > tol:
            hits.append(RayHit(i + 1, t1, False, t_mid))
    hits.sort(key=lambda h: h.t)
    return hits


def next_entry(scene: Scene, q, v, glancing_policy="straight", tol=EVENT_TOL):
    """First forward intersection with any bump boundary, or None for escape.

    Under the 'straight' glancing policy a tangent bump does not stop the
    ray; the tangency is still reported so callers can flag it.
    """
    glanced = []
    for hit in ray_hits(scene, q, v, tol):
        if hit.glancing and glancing_policy == "straight":
            glanced.append(hit)
            continue
        return hit, glanced
    return None, glanced


def _disk_arc_exit(shape: Disk, bump_b, q, v):
    """Second intersection of the Larmor circle with the disk boundary,
    reached from (q, v) in the rotation sense of b."""
    c_l = larmor_center(q, v, bump_b)
    rho = 1.0 / abs(bump_b)
    c_d = np.asarray(shape.center, dtype=float)
    dvec = c_l - c_d
    dist = np.linalg.norm(dvec)
    R = shape.radius
    if dist + rho < R or dist < 1e-15:
        raise InteriorTrapped("Larmor circle does not meet the disk boundary")
    a = (R * R - rho * rho + dist * dist) / (2.0 * dist)
    h2 = R * R - a * a
    if h2 < 0:
        raise InteriorTrapped("Larmor circle does not meet the disk boundary")
    h = math.sqrt(max(h2, 0.0))
    ud = dvec / dist
    p_mid = c_d + a * ud
    perp = J2 @ ud
    p1 = p_mid + h * perp
    p2 = p_mid - h * perp
    # the entry (or start) point is the closer candidate; exit is the other
    if np.linalg.norm(p1 - q) >= np.linalg.norm(p2 - q):
        q_exit = p1
    else:
        q_exit = p2
    a0 = math.atan2(q[1] - c_l[1], q[0] - c_l[0])
    a1 = math.atan2(q_exit[1] - c_l[1], q_exit[0] - c_l[0])
    psi = (math.copysign(1.0, bump_b) * (a1 - a0)) % (2.0 * math.pi)
    if psi < 1e-12:
        psi = 2.0 * math.pi
    T = psi / abs(bump_b)
    q_exit, v_exit = advance_in_field(q, v, bump_b, T)
    return q_exit, v_exit, T


def _generic_arc_exit(shape, bump_b, q, v, n_samples=2048):
    """First boundary crossing of the in-field arc, by sign-change search
    over one Larmor period plus root polishing."""
    period = 2.0 * math.pi / abs(bump_b)
    ts = np.linspace(0.0, period, n_samples + 1)

    def g(t):
        qt, _ = advance_in_field(q, v, bump_b, t)
        return shape.implicit(qt)

    g_prev = g(ts[0])
    started_inside = g_prev < -1e-12
    bracket = None
    for k in range(1, len(ts)):
        g_now = g(ts[k])
        if started_inside or k > 1:
            if g_prev < 0.0 <= g_now:
                bracket = (ts[k - 1], ts[k])
                break
        started_inside = started_inside or g_now < -1e-12
        g_prev = g_now
    if bracket is None:
        raise InteriorTrapped("arc does not cross the boundary within one period")
    T = brentq(g, bracket[0], bracket[1], xtol=1e-15, rtol=8.9e-16)
    q_exit, v_exit = advance_in_field(q, v, bump_b, T)
    return q_exit, v_exit, T


def arc_exit(bump, q, v):
    """Exit state and duration of the in-field arc started at (q, v) inside
    (or entering) the bump.  Exit point is snapped onto the boundary."""
    if isinstance(bump.shape, Disk):
        q_exit, v_exit, T = _disk_arc_exit(bump.shape, bump.b, q, v)
    else:
        q_exit, v_exit, T = _generic_arc_exit(bump.shape, bump.b, q, v)
    q_exit = bump.shape.project_to_boundary(q_exit)
    v_exit = v_exit / np.linalg.norm(v_exit)
    return q_exit, v_exit, T


def interior_trapped(bump, q, v):
    """True iff the Larmor circle through (q, v) stays strictly farther than
    its radius from the bump boundary (so it never meets it)."""
    c_l = larmor_center(q, v, bump.b)
    rho = 1.0 / abs(bump.b)
    if not bump.shape.contains(c_l):
        return False
    if isinstance(bump.shape, Disk):
        dist = bump.shape.radius - np.linalg.norm(c_l - np.asarray(bump.shape.center))
    else:
        thetas = np.linspace(0.0, 2.0 * math.pi, 720, endpoint=False)
        pts = bump.shape.point(thetas)
        dist = float(np.min(np.linalg.norm(pts - c_l, axis=-1)))
    return dist > rho


# ---------------------------------------------------------------------------
# the event loop


def propagate(scene: Scene, state: State, max_events=1000, max_time=math.inf,
              glancing_policy="straight", raise_on_limit=False):
    """Alternate straight segments and Larmor arcs until escape or a limit.

    Returns an Orbit.  With raise_on_limit=True a LimitExceeded carrying the
    partial orbit is raised instead of returning it flagged.
    """
    orbit = Orbit()
    q = state.q.copy()
    v = state.v / np.linalg.norm(state.v)
    region = state.region
    t = 0.0
    n_events = 0

    def finish(escaped):
        orbit.escaped = escaped
        orbit.final_state = State(q, v, region)
        return orbit

    while True:
        if n_events >= max_events or t >= max_time:
            orbit.final_state = State(q, v, region)
            if raise_on_limit:
                raise LimitExceeded("propagation limit reached", orbit)
            return orbit
        if region is None:
            hit, glanced = next_entry(scene, q, v, glancing_policy)
            for gh in glanced:
                if hit is None or gh.t < hit.t:
                    qg, _ = advance_free(q, v, gh.t_tangent)
                    orbit.glancing = True
                    orbit.events.append(Event("glance", t + gh.t_tangent,
                                              gh.bump, qg, v.copy()))
            if hit is None:
                # draw a final segment out to the scene boundary for plots
                standoff = 2.0 * scene.bounding_radius + 1.0 + float(np.linalg.norm(q))
                q1, _ = advance_free(q, v, standoff)
                orbit.pieces.append(SegmentPiece(t, t + standoff, q.copy(), q1))
                q = q1
                t += standoff
                return finish(True)
            bump = scene.bumps[hit.bump - 1]
            if hit.glancing and glancing_policy == "larmor":
                # attach one full Larmor circle at the tangency, then go on
                qg, _ = advance_free(q, v, hit.t_tangent)
                qg = bump.shape.project_to_boundary(qg)
                orbit.pieces.append(SegmentPiece(t, t + hit.t_tangent, q.copy(), qg))
                t += hit.t_tangent
                period = 2.0 * math.pi / abs(bump.b)
                c_l = larmor_center(qg, v, bump.b)
                orbit.glancing = True
                orbit.events.append(Event("glance", t, hit.bump, qg.copy(), v.copy()))
                orbit.pieces.append(ArcPiece(
                    t, t + period, hit.bump, c_l, 1.0 / abs(bump.b),
                    qg.copy(), qg.copy(), v.copy(), v.copy(),
                    math.copysign(2.0 * math.pi, bump.b)))
                t += period
                q = qg
                n_events += 1
                continue
            q1, _ = advance_free(q, v, hit.t)
            q1 = bump.shape.project_to_boundary(q1)
            orbit.pieces.append(SegmentPiece(t, t + hit.t, q.copy(), q1))
            q = q1
            t += hit.t
            region = hit.bump
            orbit.events.append(Event("enter", t, hit.bump, q.copy(), v.copy()))
            n_events += 1
        else:
            bump = scene.bumps[region - 1]
            c_l = larmor_center(q, v, bump.b)
            try:
                q1, v1, T = arc_exit(bump, q, v)
            except InteriorTrapped:
                orbit.trapped = True
                orbit.final_state = State(q, v, region)
                return orbit
            orbit.pieces.append(ArcPiece(
                t, t + T, region, c_l, 1.0 / abs(bump.b),
                q.copy(), q1.copy(), v.copy(), v1.copy(), bump.b * T))
            q, v = q1, v1
            t += T
            orbit.events.append(Event("exit", t, region, q.copy(), v.copy()))
            region = None
            n_events += 1
