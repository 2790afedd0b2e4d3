"""Transverse Jacobi data along orbits and derivatives of the bump-to-bump
Poincare map.

The analytic derivative is assembled as a product of closed-form flow
Jacobians and event-time (saltation) corrections in the full (q, v) space,
then restricted either to section coordinates (s, u) or to transverse Jacobi
coordinates (J, Jdot).  A central-difference oracle on the exact event map
serves as independent ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import flow as fl
from .errors import Escaped, GlancingNearby, IndeterminateRegime, NotInDomain
from .geometry import J2, Regime, Scene, classify_field

GLANCING_CUTOFF = 1e-6  # refuse differentiation when |<v, N>| falls below this


# ---------------------------------------------------------------------------
# elementary transfer matrices (reduced (J, Jdot) coordinates)


def free_transfer(d: float) -> np.ndarray:
    """Shear [[1, d], [0, 1]] of a free-flight stretch of length d."""
    if d < 0:
        raise ValueError("free-flight length must be nonnegative")
    return np.array([[1.0, d], [0.0, 1.0]])


def arc_transfer(b: float, T: float) -> np.ndarray:
    """In-field rotation [[cos bT, sin(bT)/b], [-b sin bT, cos bT]]."""
    if b == 0:
        raise ValueError("arc_transfer needs b != 0")
    s, c = math.sin(b * T), math.cos(b * T)
    return np.array([[c, s / b], [-b * s, c]])


# ---------------------------------------------------------------------------
# section states and reference steps


@dataclass(frozen=True)
class SectionState:
    """Inward unit-velocity state over a bump boundary: symbol ell (1-based),
    boundary arclength s and tangential velocity component u in (-1, 1)."""
    ell: int
    s: float
    u: float


def section_to_state(scene: Scene, x: SectionState) -> fl.State:
    shape = scene.bumps[x.ell - 1].shape
    theta = shape.theta_from_arclength(x.s)
    q = shape.point(theta)
    t_hat = shape.tangent(theta)
    n_hat = shape.outward_normal(theta)
    if not (-1.0 < x.u < 1.0):
        raise GlancingNearby("tangential component |u| must be < 1")
    v = x.u * t_hat - math.sqrt(1.0 - x.u * x.u) * n_hat
    return fl.State(q, v, region=None)


def state_to_section(scene: Scene, ell: int, q, v) -> SectionState:
    shape = scene.bumps[ell - 1].shape
    theta = shape.param_of_point(q)
    s = float(shape.arclength(theta))
    u = float(np.dot(v, shape.tangent(theta)))
    return SectionState(ell, s, u)


@dataclass
class StepData:
    """Reference quantities of one Poincare step x -> P(x)."""
    start: SectionState
    entry_state: fl.State  # on the boundary of bump ell, inward
    exit_state: fl.State  # on the boundary of bump ell, outward
    T_arc: float
    free_length: float
    target: int  # arrival bump, 1-based
    arrival_state: fl.State  # on the boundary of the arrival bump, inward
    end: SectionState


def reference_step(scene: Scene, x: SectionState,
                   glancing_policy="straight") -> StepData:
    """Trace one bump traversal plus free flight to the next bump."""
    bump = scene.bumps[x.ell - 1]
    st = section_to_state(scene, x)
    n_hat = bump.shape.outward_normal(bump.shape.theta_from_arclength(x.s))
    if abs(float(np.dot(st.v, n_hat))) < GLANCING_CUTOFF:
        raise GlancingNearby("entry is within the glancing cutoff")
    q1, v1, T = fl.arc_exit(bump, st.q, st.v)
    hit, _ = fl.next_entry(scene, q1, v1, glancing_policy)
    if hit is None:
        raise Escaped("orbit escapes before reaching another bump")
    if hit.glancing:
        raise GlancingNearby("free flight is tangent to the next bump")
    target = scene.bumps[hit.bump - 1]
    q2, _ = fl.advance_free(q1, v1, hit.t)
    q2 = target.shape.project_to_boundary(q2)
    n2 = target.shape.outward_normal(target.shape.param_of_point(q2))
    if abs(float(np.dot(v1, n2))) < GLANCING_CUTOFF:
        raise GlancingNearby("arrival is within the glancing cutoff")
    end = state_to_section(scene, hit.bump, q2, v1)
    return StepData(
        start=x,
        entry_state=fl.State(st.q, st.v),
        exit_state=fl.State(q1, v1),
        T_arc=T,
        free_length=hit.t,
        target=hit.bump,
        arrival_state=fl.State(q2, v1.copy()),
        end=end,
    )


def poincare_step(scene: Scene, x: SectionState,
                  glancing_policy="straight") -> SectionState:
    return reference_step(scene, x, glancing_policy).end


# ---------------------------------------------------------------------------
# the 4x4 saltation chain


def _flow_jacobian(b: float | None, t: float) -> np.ndarray:
    """d(phi_t)/d(q0, v0) for constant field b (None/0 = free flight)."""
    D = np.eye(4)
    if not b:
        D[0:2, 2:4] = t * np.eye(2)
        return D
    s, c = math.sin(b * t), math.cos(b * t)
    D[0:2, 2:4] = np.array([[s, c - 1.0], [1.0 - c, s]]) / b
    D[2:4, 2:4] = np.array([[c, -s], [s, c]])
    return D


def _crossing_correction(D: np.ndarray, shape, q, v, b_pre) -> np.ndarray:
    """Append the event-time correction so rows map onto the crossing point.

    D is the accumulated fixed-time derivative; (q, v) the crossing state;
    b_pre the field the trajectory carries into the crossing.
    """
    n = shape.implicit_grad(q)
    denom = float(n @ v)
    if abs(denom) < 1e-14:
        raise GlancingNearby("tangential crossing in the derivative chain")
    f = np.concatenate([v, (b_pre * (J2 @ v)) if b_pre else np.zeros(2)])
    n4 = np.concatenate([n, np.zeros(2)])
    return D - np.outer(f, n4 @ D) / denom


def _chain_matrix(scene: Scene, step: StepData, interior_only=False) -> np.ndarray:
    """4x4 derivative of the hit-to-hit composition along the reference step."""
    bump = scene.bumps[step.start.ell - 1]
    # anchor incoming variations onto the entry boundary (free-flight hit, T=0)
    D = _crossing_correction(np.eye(4), bump.shape,
                             step.entry_state.q, step.entry_state.v, 0.0)
    # in-field arc to the exit crossing
    D = _flow_jacobian(bump.b, step.T_arc) @ D
    D = _crossing_correction(D, bump.shape,
                             step.exit_state.q, step.exit_state.v, bump.b)
    if interior_only:
        return D
    # free flight to the arrival crossing
    target = scene.bumps[step.target - 1]
    D = _flow_jacobian(None, step.free_length) @ D
    D = _crossing_correction(D, target.shape,
                             step.arrival_state.q, step.arrival_state.v, 0.0)
    return D


# chart differentials ---------------------------------------------------------


def _section_chart_jacobian(scene: Scene, x: SectionState) -> np.ndarray:
    """4x2 differential of (s, u) -> (q, v) on the inward section."""
    shape = scene.bumps[x.ell - 1].shape
    theta = shape.theta_from_arclength(x.s)
    t_hat = shape.tangent(theta)
    n_hat = shape.outward_normal(theta)
    kappa = float(shape.curvature(theta))
    w = math.sqrt(1.0 - x.u * x.u)
    dq_ds = t_hat
    dv_ds = x.u * (-kappa * n_hat) - w * (kappa * t_hat)
    dq_du = np.zeros(2)
    dv_du = t_hat + (x.u / w) * n_hat
    out = np.zeros((4, 2))
    out[0:2, 0] = dq_ds
    out[2:4, 0] = dv_ds
    out[0:2, 1] = dq_du
    out[2:4, 1] = dv_du
    return out


def _section_cochart_jacobian(scene: Scene, x: SectionState) -> np.ndarray:
    """2x4 differential of (q, v) -> (s, u) restricted to section tangents."""
    shape = scene.bumps[x.ell - 1].shape
    theta = shape.theta_from_arclength(x.s)
    t_hat = shape.tangent(theta)
    n_hat = shape.outward_normal(theta)
    kappa = float(shape.curvature(theta))
    st = section_to_state(scene, x)
    out = np.zeros((2, 4))
    out[0, 0:2] = t_hat
    out[1, 0:2] = -kappa * float(np.dot(st.v, n_hat)) * t_hat
    out[1, 2:4] = t_hat
    return out


def _jacobi_basis(v) -> np.ndarray:
    """4x2 injection of free-flight (J, Jdot) data at a state with velocity v."""
    e2 = J2 @ np.asarray(v, dtype=float)
    out = np.zeros((4, 2))
    out[0:2, 0] = e2
    out[2:4, 1] = e2
    return out


def _jacobi_extract(v) -> np.ndarray:
    """2x4 extraction of free-flight (J, Jdot) data at velocity v."""
    e2 = J2 @ np.asarray(v, dtype=float)
    out = np.zeros((2, 4))
    out[0, 0:2] = e2
    out[1, 2:4] = e2
    return out


# public derivative operations ------------------------------------------------


def linearize_poincare(scene: Scene, x: SectionState, rep="section",
                       step: StepData | None = None) -> np.ndarray:
    """2x2 derivative of the Poincare map at x.

    rep='section' gives d(s', u')/d(s, u); rep='jacobi' expresses the same
    linear map in transverse (J, Jdot) coordinates (free-flight convention
    at both the departure and the arrival section).
    """
    if step is None:
        step = reference_step(scene, x)
    D4 = _chain_matrix(scene, step)
    if rep == "section":
        Cin = _section_chart_jacobian(scene, x)
        Cout = _section_cochart_jacobian(scene, step.end)
        return Cout @ D4 @ Cin
    if rep == "jacobi":
        Bin = _jacobi_basis(step.entry_state.v)
        Bout = _jacobi_extract(step.arrival_state.v)
        return Bout @ D4 @ Bin
    raise ValueError(f"unknown representation {rep!r}")


def interior_transfer(scene: Scene, x: SectionState,
                      step: StepData | None = None) -> np.ndarray:
    """(J, Jdot) derivative of the interior map alone (entry crossing, arc,
    exit crossing), free-flight convention on both sides."""
    if step is None:
        step = reference_step_interior(scene, x)
    D4 = _chain_matrix(scene, step, interior_only=True)
    return _jacobi_extract(step.exit_state.v) @ D4 @ _jacobi_basis(step.entry_state.v)


def reference_step_interior(scene: Scene, x: SectionState) -> StepData:
    """Like reference_step but without requiring a next bump (exit data only)."""
    bump = scene.bumps[x.ell - 1]
    st = section_to_state(scene, x)
    n_hat = bump.shape.outward_normal(bump.shape.theta_from_arclength(x.s))
    if abs(float(np.dot(st.v, n_hat))) < GLANCING_CUTOFF:
        raise GlancingNearby("entry is within the glancing cutoff")
    q1, v1, T = fl.arc_exit(bump, st.q, st.v)
    return StepData(start=x, entry_state=fl.State(st.q, st.v),
                    exit_state=fl.State(q1, v1), T_arc=T, free_length=0.0,
                    target=x.ell, arrival_state=fl.State(q1, v1), end=x)


def fd_oracle(scene: Scene, x: SectionState, eps=1e-6,
              glancing_policy="straight") -> np.ndarray:
    """Central-difference Jacobian of the exact Poincare map in (s, u)."""
    if not 1e-8 <= eps <= 1e-3:
        raise ValueError("eps outside [1e-8, 1e-3]")
    ref = reference_step(scene, x, glancing_policy)
    per_out = scene.bumps[ref.target - 1].shape.perimeter

    def wrapped(dx_s, dx_u):
        y = poincare_step(scene, SectionState(x.ell, x.s + dx_s, x.u + dx_u),
                          glancing_policy)
        if y.ell != ref.target:
            raise NotInDomain("finite-difference stencil leaves the branch")
        ds = (y.s - ref.end.s + per_out / 2.0) % per_out - per_out / 2.0
        return np.array([ds, y.u - ref.end.u])

    col_s = (wrapped(eps, 0.0) - wrapped(-eps, 0.0)) / (2.0 * eps)
    col_u = (wrapped(0.0, eps) - wrapped(0.0, -eps)) / (2.0 * eps)
    return np.column_stack([col_s, col_u])


# ---------------------------------------------------------------------------
# focusing diagnostics


def sample_entries(shape, n, rng, margin=0.05):
    """Uniform transversal entries: boundary arclength plus inward angle
    bounded away from tangency by `margin` (radians)."""
    ss = rng.uniform(0.0, shape.perimeter, size=n)
    angles = rng.uniform(margin, math.pi - margin, size=n)
    return ss, np.cos(angles)  # u = cos(angle against the tangent)


def focusing_check(scene: Scene, ell: int, n_entries=100, seed=0, margin=0.05):
    """Propagate parallel incoming data (J, Jdot) = (1, 0) through the
    interior map of a strong bump; both outgoing components must be < 0."""
    bump = scene.bumps[ell - 1]
    if classify_field(bump) is not Regime.STRONG:
        _strong_required(bump)
    rng = np.random.default_rng(seed)
    ss, us = sample_entries(bump.shape, n_entries, rng, margin)
    rows = []
    ok = True
    for s, u in zip(ss, us):
        x = SectionState(ell, float(s), float(u))
        M = interior_transfer(scene, x)
        J_T, Jd_T = M @ np.array([1.0, 0.0])
        rows.append({"s": float(s), "u": float(u),
                     "J_out": float(J_T), "Jdot_out": float(Jd_T)})
        ok = ok and J_T < 0 and Jd_T < 0
    return {
        "bump": ell,
        "b": bump.b,
        "n_entries": n_entries,
        "seed": seed,
        "max_J_out": max(r["J_out"] for r in rows),
        "max_Jdot_out": max(r["Jdot_out"] for r in rows),
        "all_negative": ok,
        "entries": rows,
    }


def _strong_required(bump):
    raise IndeterminateRegime(
        f"focusing check requires a strong-field bump, got b={bump.b} with "
        f"curvature range {bump.shape.curvature_range()}")


def focal_points(scene: Scene, ell: int, phi: float, L_values):
    """Interior focal point of each parallel-beam ray: the point inside the
    bump where the transverse Jacobi field of the beam first vanishes.

    For a strong-field disk of radius r these points sweep out a half-circle
    of radius r - 1/|b| (centered at the Larmor offset of the beam
    direction), the envelope of the beam.
    """
    from scipy.optimize import brentq
    from .scattering import line_to_state  # local import avoids a cycle
    bump = scene.bumps[ell - 1]
    b = bump.b
    out = []
    for L in L_values:
        st = line_to_state(scene, phi, float(L))
        hit, _ = fl.next_entry(scene, st.q, st.v)
        if hit is None or hit.bump != ell or hit.glancing:
            out.append(None)
            continue
        q_in, _ = fl.advance_free(st.q, st.v, hit.t)
        q_in = bump.shape.project_to_boundary(q_in)
        v = st.v
        # parallel-beam variation (dq, dv) = (J v, 0), pushed through the
        # entry crossing and the in-field flow
        D_in = _crossing_correction(np.eye(4), bump.shape, q_in, v, 0.0)
        xi0 = D_in @ np.concatenate([J2 @ v, [0.0, 0.0]])
        _, _, T = fl.arc_exit(bump, q_in, v)

        def J_of_t(t):
            _, vt = fl.advance_in_field(q_in, v, b, t)
            xi = _flow_jacobian(b, t) @ xi0
            return float(xi[:2] @ (J2 @ vt))

        ts = np.linspace(1e-9, T, 200)
        vals = [J_of_t(t) for t in ts]
        t_f = None
        for k in range(len(ts) - 1):
            if vals[k] * vals[k + 1] <= 0:
                t_f = brentq(J_of_t, ts[k], ts[k + 1], xtol=1e-14)
                break
        if t_f is None:
            out.append(None)
            continue
        q_f, _ = fl.advance_in_field(q_in, v, b, t_f)
        out.append(q_f)
    return out
