"""Scene model: convex bumps, boundary differential geometry, inter-bump
constants and field-regime classification.

Supported shapes are disks and rotated ellipses.  Both admit closed-form
boundary parametrizations, curvatures and ray intersections, which keeps the
event-driven flow exact to rounding.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize
from scipy.special import ellipeinc

from .errors import CollinearBumps, DomainError, SceneFormatError, SingleBump

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])  # counter-clockwise quarter turn

COLLINEAR_TOL = 1e-9  # triples with infimum angle below this count as collinear


def rotation(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError("disk radius must be positive")

    # boundary parametrization by angle theta, counter-clockwise
    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        c = np.asarray(self.center)
        return np.stack([c[0] + self.radius * np.cos(theta),
                         c[1] + self.radius * np.sin(theta)], axis=-1)

    def tangent(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)

    def outward_normal(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def curvature(self, theta):
        return np.full(np.shape(theta), 1.0 / self.radius)

    @property
    def perimeter(self):
        return 2.0 * math.pi * self.radius

    def arclength(self, theta):
        return self.radius * theta

    def theta_from_arclength(self, s):
        return s / self.radius

    def param_of_point(self, q):
        d = np.asarray(q, dtype=float) - np.asarray(self.center)
        return math.atan2(d[1], d[0]) % (2.0 * math.pi)

    def project_to_boundary(self, q):
        return self.point(self.param_of_point(q))

    def implicit(self, q):
        d = np.asarray(q, dtype=float) - np.asarray(self.center)
        return float(d @ d) / self.radius**2 - 1.0

    def implicit_grad(self, q):
        d = np.asarray(q, dtype=float) - np.asarray(self.center)
        return 2.0 * d / self.radius**2

    def contains(self, q, tol=0.0):
        return self.implicit(q) < tol

    def support(self, n):
        """Support radius max <x - center, n> for a unit direction n."""
        return self.radius

    def curvature_range(self):
        k = 1.0 / self.radius
        return (k, k)

    def ray_coefficients(self, q0, v):
        """Coefficients (a2, a1, a0) of |A(q0 + t v - c)|^2 - 1 = 0 in the
        unit-circle frame (A = I/r for a disk)."""
        p = (np.asarray(q0, dtype=float) - np.asarray(self.center)) / self.radius
        w = np.asarray(v, dtype=float) / self.radius
        return float(w @ w), 2.0 * float(p @ w), float(p @ p) - 1.0


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    semi_axes: tuple  # (a, b) with a >= b > 0
    angle: float = 0.0

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a >= b > 0):
            raise DomainError("ellipse semi-axes must satisfy a >= b > 0")

    @cached_property
    def _rot(self):
        return rotation(self.angle)

    @cached_property
    def _to_circle(self):
        # maps world offsets to the unit-circle frame
        a, b = self.semi_axes
        return np.diag([1.0 / a, 1.0 / b]) @ self._rot.T

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = self.semi_axes
        local = np.stack([a * np.cos(theta), b * np.sin(theta)], axis=-1)
        return np.asarray(self.center) + local @ self._rot.T

    def _velocity(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = self.semi_axes
        local = np.stack([-a * np.sin(theta), b * np.cos(theta)], axis=-1)
        return local @ self._rot.T

    def tangent(self, theta):
        d = self._velocity(theta)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def outward_normal(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = self.semi_axes
        local = np.stack([np.cos(theta) / a, np.sin(theta) / b], axis=-1)
        n = local @ self._rot.T
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def curvature(self, theta):
        theta = np.asarray(theta, dtype=float)
        a, b = self.semi_axes
        g = a * a * np.sin(theta) ** 2 + b * b * np.cos(theta) ** 2
        return a * b / g**1.5

    @cached_property
    def perimeter(self):
        return float(self.arclength(2.0 * math.pi))

    def arclength(self, theta):
        a, b = self.semi_axes
        m = 1.0 - (b / a) ** 2
        return a * (ellipeinc(math.pi / 2.0, m) - ellipeinc(math.pi / 2.0 - theta, m))

    def theta_from_arclength(self, s):
        # Newton with bisection safeguard; ds/dtheta = |gamma'| > 0
        per = self.perimeter
        s = s % per
        lo, hi = 0.0, 2.0 * math.pi
        theta = 2.0 * math.pi * s / per
        for _ in range(60):
            f = self.arclength(theta) - s
            if f > 0:
                hi = theta
            else:
                lo = theta
            d = np.linalg.norm(self._velocity(theta))
            step = f / d
            theta -= step
            if not (lo <= theta <= hi):
                theta = 0.5 * (lo + hi)
            if abs(step) < 1e-14:
                break
        return theta

    def param_of_point(self, q):
        p = self._to_circle @ (np.asarray(q, dtype=float) - np.asarray(self.center))
        return math.atan2(p[1], p[0]) % (2.0 * math.pi)

    def project_to_boundary(self, q):
        # radial projection in the normalized frame; exact on the boundary
        return self.point(self.param_of_point(q))

    def implicit(self, q):
        p = self._to_circle @ (np.asarray(q, dtype=float) - np.asarray(self.center))
        return float(p @ p) - 1.0

    def implicit_grad(self, q):
        p = self._to_circle @ (np.asarray(q, dtype=float) - np.asarray(self.center))
        return 2.0 * (self._to_circle.T @ p)

    def contains(self, q, tol=0.0):
        return self.implicit(q) < tol

    def support(self, n):
        a, b = self.semi_axes
        local = self._rot.T @ np.asarray(n, dtype=float)
        return math.hypot(a * local[0], b * local[1])

    def curvature_range(self):
        a, b = self.semi_axes
        return (b / a**2, a / b**2)

    def ray_coefficients(self, q0, v):
        p = self._to_circle @ (np.asarray(q0, dtype=float) - np.asarray(self.center))
        w = self._to_circle @ np.asarray(v, dtype=float)
        return float(w @ w), 2.0 * float(p @ w), float(p @ p) - 1.0


# ---------------------------------------------------------------------------
# bumps and regimes


class Regime(enum.Enum):
    WEAK = "weak"
    STRONG = "strong"
    NEITHER = "neither"


@dataclass(frozen=True)
class Bump:
    shape: object  # Disk or Ellipse
    b: float  # field strength inside the shape, nonzero

    def __post_init__(self):
        if self.b == 0:
            raise DomainError("field strength b must be nonzero")

    @property
    def center(self):
        return np.asarray(self.shape.center, dtype=float)


def curvature_range(bump: Bump):
    """Extremal boundary curvatures (kappa_min, kappa_max) of the bump."""
    return bump.shape.curvature_range()


def classify_field(bump: Bump) -> Regime:
    """Weak / strong / neither, by strict comparison of |b| with the
    extremal boundary curvatures."""
    kmin, kmax = curvature_range(bump)
    ab = abs(bump.b)
    if ab < kmin:
        return Regime.WEAK
    if ab > kmax:
        return Regime.STRONG
    return Regime.NEITHER


def very_strong_threshold(d: float, alpha_min: float, kappa_max: float) -> float:
    """Positive root x of 1/d = x (x - kappa) / (x + kappa) * alpha_min.

    Field strengths above this value satisfy the very-strong inequality
    |b| > 1/(d alpha_min) + 2 kappa_max with room to spare; the closed form
    is bounded by c + 2 kappa_max with c = 1/(d alpha_min).
    """
    if d <= 0 or alpha_min <= 0 or kappa_max <= 0:
        raise DomainError("very_strong_threshold needs positive arguments")
    c = 1.0 / (d * alpha_min)
    k = kappa_max
    return 0.5 * (c + k + math.sqrt(c * c + 6.0 * c * k + k * k))


# ---------------------------------------------------------------------------
# scene


def _pair_gap(sa, sb):
    """Minimal boundary-to-boundary distance between two disjoint shapes."""
    if isinstance(sa, Disk) and isinstance(sb, Disk):
        d = np.linalg.norm(np.asarray(sa.center) - np.asarray(sb.center))
        return float(d - sa.radius - sb.radius)

    def dist(t):
        d = sa.point(t[0]) - sb.point(t[1])
        return float(d @ d)

    grid = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    best = None
    vals = [(dist((ta, tb)), ta, tb) for ta in grid for tb in grid]
    vals.sort()
    for v0, ta, tb in vals[:6]:
        res = minimize(dist, [ta, tb], method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": 2000})
        if best is None or res.fun < best:
            best = res.fun
    return math.sqrt(best)


def _triple_angle(x, y, z):
    """Angle at vertex y between the directions towards x and z."""
    u = x - y
    w = z - y
    cu = np.linalg.norm(u, axis=-1)
    cw = np.linalg.norm(w, axis=-1)
    c = np.sum(u * w, axis=-1) / (cu * cw)
    return np.arccos(np.clip(c, -1.0, 1.0))


def _min_triple_angle(sk, sl, sm, n_grid=48):
    """Minimum over x in C_k, y in C_l, z in C_m of the vertex angle at y.

    The minimum over each convex body is attained on its boundary (the level
    sets of the vertex angle are circular arcs, so there is no interior
    minimum), so it suffices to optimize over the three boundary parameters.
    """
    grid = np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False)
    tk, tl, tm = np.meshgrid(grid, grid, grid, indexing="ij")
    ang = _triple_angle(sk.point(tk), sl.point(tl), sm.point(tm))
    idx = np.unravel_index(np.argmin(ang), ang.shape)
    x0 = [grid[idx[0]], grid[idx[1]], grid[idx[2]]]

    def obj(t):
        return float(_triple_angle(sk.point(t[0]), sl.point(t[1]), sm.point(t[2])))

    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    return min(float(ang[idx]), float(res.fun))


class Scene:
    """Ordered collection of pairwise disjoint bumps plus derived constants.

    Immutable after construction; derived quantities are cached.
    """

    def __init__(self, bumps):
        bumps = list(bumps)
        if not bumps:
            raise DomainError("scene needs at least one bump")
        self.bumps = tuple(bumps)
        self._validate_disjoint()

    @property
    def n(self):
        return len(self.bumps)

    @property
    def alphabet(self):
        return tuple(range(1, self.n + 1))

    def _validate_disjoint(self):
        for i in range(self.n):
            for j in range(i + 1, self.n):
                si, sj = self.bumps[i].shape, self.bumps[j].shape
                if si.contains(np.asarray(sj.center, dtype=float)) or \
                        sj.contains(np.asarray(si.center, dtype=float)) or \
                        _pair_gap(si, sj) <= 0:
                    raise DomainError(
                        f"bumps {i + 1} and {j + 1} are not disjoint with a positive gap")

    # -- derived constants --------------------------------------------------

    def pairwise_gap(self, ell):
        """d_ell: minimal distance from bump ell (1-based) to any other bump."""
        if self.n < 2:
            raise SingleBump("pairwise gap undefined for a single bump")
        i = ell - 1
        return min(_pair_gap(self.bumps[i].shape, self.bumps[j].shape)
                   for j in range(self.n) if j != i)

    @cached_property
    def gaps(self):
        return tuple(self.pairwise_gap(ell) for ell in self.alphabet)

    @cached_property
    def alpha_min(self):
        """Minimal vertex angle over ordered bump triples, in (0, pi/3].

        For n = 2 the conventional value pi/3 is returned.  Raises
        CollinearBumps when some line meets three bumps (infimum 0).
        """
        if self.n < 2:
            raise SingleBump("alpha_min undefined for a single bump")
        if self.n == 2:
            return math.pi / 3.0
        best = math.inf
        for l in range(self.n):
            for k in range(self.n):
                if k == l:
                    continue
                for m in range(k + 1, self.n):
                    if m == l:
                        continue
                    a = _min_triple_angle(self.bumps[k].shape,
                                          self.bumps[l].shape,
                                          self.bumps[m].shape)
                    best = min(best, a)
        if best < COLLINEAR_TOL:
            raise CollinearBumps("a straight line meets three bumps")
        return min(best, math.pi / 3.0)

    def check_no_three_on_line(self):
        """True iff no straight line meets three distinct bumps."""
        if self.n <= 2:
            return True
        try:
            return self.alpha_min > 0
        except CollinearBumps:
            return False

    @cached_property
    def regimes(self):
        return tuple(classify_field(b) for b in self.bumps)

    def very_strong(self):
        """True iff |b_ell| > 1/(d_ell alpha_min) + 2 kappa_max holds for all
        bumps (strict).  False for a single bump."""
        if self.n < 2:
            return False
        try:
            a = self.alpha_min
        except CollinearBumps:
            return False
        for bump, d in zip(self.bumps, self.gaps):
            kmax = curvature_range(bump)[1]
            if abs(bump.b) <= 1.0 / (d * a) + 2.0 * kmax:
                return False
        return True

    def classification(self):
        """Per-bump regimes plus the scene-level very-strong flag."""
        report = {
            "bumps": [
                {
                    "index": ell,
                    "b": self.bumps[ell - 1].b,
                    "kappa_min": curvature_range(self.bumps[ell - 1])[0],
                    "kappa_max": curvature_range(self.bumps[ell - 1])[1],
                    "regime": self.regimes[ell - 1].value,
                }
                for ell in self.alphabet
            ],
        }
        if self.n >= 2:
            report["alpha_min"] = self.alpha_min
            for entry, d in zip(report["bumps"], self.gaps):
                entry["gap"] = d
                entry["very_strong_bound"] = 1.0 / (d * self.alpha_min) \
                    + 2.0 * entry["kappa_max"]
            report["very_strong"] = self.very_strong()
        else:
            report["very_strong"] = False
            report["note"] = "single bump: gaps and alpha_min undefined"
        return report

    # -- geometry helpers used by the flow ---------------------------------

    @cached_property
    def bounding_radius(self):
        """Radius of an origin-centered disk containing every bump."""
        r = 0.0
        for b in self.bumps:
            big = (b.shape.radius if isinstance(b.shape, Disk)
                   else b.shape.semi_axes[0])
            r = max(r, float(np.linalg.norm(b.center)) + big)
        return r

    # -- serialization ------------------------------------------------------

    @staticmethod
    def from_dict(data):
        if not isinstance(data, dict) or "bumps" not in data:
            raise SceneFormatError("scene file must be an object with a 'bumps' list")
        bumps = []
        for i, entry in enumerate(data["bumps"]):
            where = f"bumps[{i}]"
            if not isinstance(entry, dict):
                raise SceneFormatError(f"{where}: expected an object")
            kind = entry.get("kind")
            try:
                center = tuple(float(c) for c in entry["center"])
                b = float(entry["b"])
                if kind == "disk":
                    shape = Disk(center=center, radius=float(entry["radius"]))
                elif kind == "ellipse":
                    shape = Ellipse(center=center,
                                    semi_axes=tuple(float(x) for x in entry["semi_axes"]),
                                    angle=float(entry.get("angle", 0.0)))
                else:
                    raise SceneFormatError(
                        f"{where}.kind: expected 'disk' or 'ellipse', got {kind!r}")
                bumps.append(Bump(shape=shape, b=b))
            except KeyError as exc:
                raise SceneFormatError(f"{where}.{exc.args[0]}: missing field") from exc
            except (TypeError, ValueError, DomainError) as exc:
                raise SceneFormatError(f"{where}: {exc}") from exc
        try:
            return Scene(bumps)
        except DomainError as exc:
            raise SceneFormatError(str(exc)) from exc

    @staticmethod
    def from_file(path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SceneFormatError(
                    f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                    f"{exc.msg}") from exc
        return Scene.from_dict(data)

    def to_dict(self):
        out = []
        for b in self.bumps:
            if isinstance(b.shape, Disk):
                out.append({"kind": "disk", "center": list(b.shape.center),
                            "radius": b.shape.radius, "b": b.b})
            else:
                out.append({"kind": "ellipse", "center": list(b.shape.center),
                            "semi_axes": list(b.shape.semi_axes),
                            "angle": b.shape.angle, "b": b.b})
        return {"bumps": out}


# functional aliases mirroring the Scene API

def pairwise_gap(scene: Scene, ell: int) -> float:
    return scene.pairwise_gap(ell)


def alpha_min(scene: Scene) -> float:
    return scene.alpha_min


def check_no_three_on_line(scene: Scene) -> bool:
    return scene.check_no_three_on_line()


def classify_scene(scene: Scene) -> dict:
    return scene.classification()
