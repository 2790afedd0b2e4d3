"""Itineraries, admissible words and orbit-from-word finding: the numerical
realization of the conjugacy between the Poincare map and the shift on
consecutive-distinct symbol sequences."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import flow as fl
from .errors import (Escaped, ExcludedDirection, GlancingNearby, NoConvergence,
                     NoEvents, NotInDomain, NotVeryStrong)
from .geometry import J2, Scene
from .linearization import (SectionState, linearize_poincare, poincare_step,
                            reference_step, reference_step_interior,
                            section_to_state, state_to_section)

RESIDUAL_TOL = 1e-10
MAX_NEWTON_ITERS = 100


@dataclass(frozen=True)
class Word:
    """Finite symbol sequence over the bump alphabet (1-based)."""
    symbols: tuple
    kind: str = "periodic"  # 'periodic' | 'segment'

    def __post_init__(self):
        if self.kind not in ("periodic", "segment"):
            raise ValueError("word kind must be 'periodic' or 'segment'")
        object.__setattr__(self, "symbols", tuple(int(a) for a in self.symbols))

    def __len__(self):
        return len(self.symbols)

    def shifted(self):
        s = self.symbols
        return Word(s[1:] + s[:1], self.kind)


def is_admissible(word: Word) -> bool:
    """Consecutive symbols distinct; periodic words also cyclically."""
    s = word.symbols
    if any(a == b for a, b in zip(s, s[1:])):
        return False
    if word.kind == "periodic" and len(s) >= 2 and s[-1] == s[0]:
        return False
    return True


def itinerary(orbit: fl.Orbit) -> Word:
    """Sequence of bump indices in traversal order."""
    syms = orbit.itinerary
    if not syms:
        raise NoEvents("orbit has no bump traversal")
    return Word(syms, kind="segment")


def admissible_periodic_words(n_symbols: int, period: int):
    """All cyclically admissible words of exactly the given period length."""
    out = []

    def extend(prefix):
        if len(prefix) == period:
            if prefix[-1] != prefix[0]:
                out.append(Word(tuple(prefix), "periodic"))
            return
        for a in range(1, n_symbols + 1):
            if a != prefix[-1]:
                extend(prefix + [a])

    for a in range(1, n_symbols + 1):
        extend([a])
    return out


def count_admissible_periodic_words(n_symbols: int, period: int) -> int:
    """trace((ones - I)^p): transfer-matrix count of cyclic sequences."""
    m = np.ones((n_symbols, n_symbols)) - np.eye(n_symbols)
    return int(round(np.trace(np.linalg.matrix_power(m, period))))


# ---------------------------------------------------------------------------
# the Poincare map in section coordinates (re-exported operation)


def poincare_map(scene: Scene, x: SectionState) -> SectionState:
    """One bump-to-bump return: interior traversal then free flight."""
    return poincare_step(scene, x)


# ---------------------------------------------------------------------------
# orbit finding


@dataclass
class PeriodicOrbit:
    word: Word
    states: list  # SectionState per symbol
    residual: float
    orbit: fl.Orbit
    newton_iterations: int
    monodromy_matrix: np.ndarray | None = None


def _wrap_ds(ds, perimeter):
    return (ds + perimeter / 2.0) % perimeter - perimeter / 2.0


def _entry_seed(scene: Scene, sym: int, d_in, d_out, n_scan=720):
    """Entry guess on bump `sym`: velocity fixed at d_in, boundary point
    chosen so the exact in-field arc exits closest to direction d_out.

    One-dimensional scan over the inward half of the boundary; the Newton
    stage then corrects both coordinates.
    """
    bump = scene.bumps[sym - 1]
    shape = bump.shape
    d_in = np.asarray(d_in, dtype=float)
    phi_out = math.atan2(d_out[1], d_out[0])

    def miss(theta):
        if float(np.dot(d_in, shape.outward_normal(theta))) > -0.01:
            return math.inf
        try:
            _, v1, _ = fl.arc_exit(bump, shape.point(theta), d_in)
        except Exception:
            return math.inf
        return abs(_wrap_angle(math.atan2(v1[1], v1[0]) - phi_out))

    thetas = np.linspace(0.0, 2.0 * math.pi, n_scan, endpoint=False)
    vals = [miss(t) for t in thetas]
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        raise NotInDomain(f"no inward entry on bump {sym} for the seed direction")
    # golden-section polish around the best scan point
    lo = thetas[i] - 2.0 * math.pi / n_scan
    hi = thetas[i] + 2.0 * math.pi / n_scan
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = hi - g * (hi - lo), lo + g * (hi - lo)
    fa, fb = miss(a), miss(b)
    for _ in range(60):
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - g * (hi - lo)
            fa = miss(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = miss(b)
    theta = a if fa <= fb else b
    return state_to_section(scene, sym, shape.point(theta), d_in)


def _geometric_seed(scene: Scene, word: Word, rng=None, jitter=0.0):
    """Entry guesses: incoming velocity along the previous center-to-center
    direction, entry point chosen so the arc exits toward the next bump."""
    states = []
    syms = word.symbols
    p = len(syms)
    for k in range(p):
        prev = syms[(k - 1) % p]
        cur = syms[k]
        nxt = syms[(k + 1) % p]
        bump = scene.bumps[cur - 1]
        d_in = bump.center - scene.bumps[prev - 1].center
        d_in = d_in / np.linalg.norm(d_in)
        d_out = scene.bumps[nxt - 1].center - bump.center
        d_out = d_out / np.linalg.norm(d_out)
        x = _entry_seed(scene, cur, d_in, d_out)
        s, u = x.s, x.u
        if rng is not None and jitter > 0:
            s = s + rng.normal(0.0, jitter * bump.shape.perimeter)
            u = float(np.clip(u + rng.normal(0.0, jitter), -0.9, 0.9))
        states.append(SectionState(cur, s % bump.shape.perimeter, u))
    return states


def _shooting_residual(scene: Scene, word: Word, states):
    """Residual blocks P(x_k) - x_{k+1} and per-step derivatives."""
    p = len(states)
    F = np.zeros(2 * p)
    blocks = []
    for k in range(p):
        x = states[k]
        x_next = states[(k + 1) % p]
        step = reference_step(scene, x)
        if step.target != x_next.ell:
            raise NotInDomain(
                f"step {k}: orbit reaches bump {step.target}, word wants {x_next.ell}")
        per = scene.bumps[x_next.ell - 1].shape.perimeter
        F[2 * k] = _wrap_ds(step.end.s - x_next.s, per)
        F[2 * k + 1] = step.end.u - x_next.u
        blocks.append(linearize_poincare(scene, x, rep="section", step=step))
    return F, blocks


def _newton_polish(scene: Scene, word: Word, states, res_tol=RESIDUAL_TOL,
                   max_iters=MAX_NEWTON_ITERS):
    """Damped Newton on the multiple-shooting system; returns (states,
    residual, iterations) or raises NoConvergence."""
    p = len(states)
    trace = []
    best = math.inf
    F, blocks = _shooting_residual(scene, word, states)
    for it in range(max_iters):
        res = float(np.max(np.abs(F)))
        trace.append(res)
        best = min(best, res)
        if res < res_tol:
            return states, res, it
        Jac = np.zeros((2 * p, 2 * p))
        for k in range(p):
            Jac[2 * k:2 * k + 2, 2 * k:2 * k + 2] = blocks[k]
            kn = (k + 1) % p
            Jac[2 * k:2 * k + 2, 2 * kn:2 * kn + 2] -= np.eye(2)
        try:
            delta = np.linalg.solve(Jac, -F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular shooting Jacobian", best, trace) from exc
        lam = 1.0
        norm0 = float(np.linalg.norm(F))
        for _ in range(30):
            cand = [
                SectionState(
                    x.ell,
                    (x.s + lam * delta[2 * k]) % scene.bumps[x.ell - 1].shape.perimeter,
                    float(np.clip(x.u + lam * delta[2 * k + 1], -0.999, 0.999)))
                for k, x in enumerate(states)
            ]
            try:
                F_new, blocks_new = _shooting_residual(scene, word, cand)
            except (NotInDomain, Escaped, GlancingNearby):
                lam *= 0.5
                continue
            if np.linalg.norm(F_new) <= (1.0 - 1e-4 * lam) * norm0:
                states, F, blocks = cand, F_new, blocks_new
                break
            lam *= 0.5
        else:
            raise NoConvergence("Armijo line search stalled", best, trace)
    raise NoConvergence("Newton did not reach the residual tolerance",
                        best, trace)


def _replay(scene: Scene, word: Word, states):
    """Propagate one full period from x_0 and return the closed orbit."""
    st = section_to_state(scene, states[0])
    back = 1e-6  # start just outside so the entry itself is an event
    start = fl.State(st.q - back * st.v, st.v)
    return fl.propagate(scene, start, max_events=4 * len(word) + 4,
                        max_time=math.inf)


def find_periodic_orbit(scene: Scene, word: Word, seed=0, jitter=0.0,
                        res_tol=RESIDUAL_TOL, require_very_strong=True):
    """The unique periodic orbit realizing a cyclically admissible word.

    Multiple shooting with damped Newton, geometric seed (optionally
    jittered for independent-seed uniqueness checks).
    """
    if require_very_strong and not scene.very_strong():
        raise NotVeryStrong("orbit existence is only guaranteed for very strong fields")
    if not is_admissible(word) or word.kind != "periodic" or len(word) < 2:
        raise ValueError("word must be cyclically admissible and of period >= 2")
    rng = np.random.default_rng(seed) if jitter > 0 else None
    last_exc = None
    for attempt in range(8):
        # a jittered seed can leave the (small) branch domain; retry with
        # fresh, shrinking perturbations from the same stream
        states = _geometric_seed(scene, word, rng, jitter * 0.5 ** attempt)
        try:
            states, res, iters = _newton_polish(scene, word, states, res_tol)
            break
        except (Escaped, NotInDomain, NoConvergence) as exc:
            last_exc = exc
            if jitter <= 0:
                raise
    else:
        raise NoConvergence("all jittered seeds failed") from last_exc
    orbit = _replay(scene, word, states)
    return PeriodicOrbit(word=word, states=states, residual=res,
                         orbit=orbit, newton_iterations=iters)


def monodromy(scene: Scene, po: PeriodicOrbit):
    """Cycle product of the per-step linearized Poincare maps in (J, Jdot)
    coordinates, with hyperbolicity classification."""
    M = np.eye(2)
    det = 1.0
    for x in po.states:
        B = linearize_poincare(scene, x, rep="jacobi")
        M = B @ M
        # determinant as a product of per-step determinants: the determinant
        # of the accumulated product is ill-conditioned when entries are large
        det *= float(np.linalg.det(B))
    tr = float(np.trace(M))
    po.monodromy_matrix = M
    return {
        "matrix": M,
        "det": det,
        "trace": tr,
        "hyperbolic": abs(tr) > 2.0,
    }


# ---------------------------------------------------------------------------
# finite-word scattering connections


def _direction_excluded(scene: Scene, phi: float) -> bool:
    """True iff some line with direction phi meets two bumps (projection
    intervals onto the normal overlap)."""
    n = J2 @ np.array([math.cos(phi), math.sin(phi)])
    proj = []
    for bump in scene.bumps:
        mid = float(bump.center @ n)
        h = bump.shape.support(n)
        proj.append((mid - h, mid + h))
    for i in range(len(proj)):
        for j in range(i + 1, len(proj)):
            lo = max(proj[i][0], proj[j][0])
            hi = min(proj[i][1], proj[j][1])
            if lo <= hi:
                return True
    return False


@dataclass
class ScatteringOrbit:
    word: Word
    phi_in: float
    phi_out: float
    states: list
    residual: float
    orbit: fl.Orbit


def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def find_scattering_orbit(scene: Scene, word: Word, phi_in: float,
                          phi_out: float, res_tol=RESIDUAL_TOL,
                          require_very_strong=True):
    """An orbit entering with direction phi_in, traversing the bumps of the
    finite word in order, and exiting with direction phi_out."""
    if require_very_strong and not scene.very_strong():
        raise NotVeryStrong("scattering connections are only guaranteed for "
                            "very strong fields")
    if word.kind != "segment" or not is_admissible(word):
        raise ValueError("word must be an admissible segment")
    for phi in (phi_in, phi_out):
        if _direction_excluded(scene, phi):
            raise ExcludedDirection(
                f"direction {phi} lies along a line meeting two bumps")
    m = len(word)
    if m == 0:
        from .scattering import line_to_state
        # any free line of direction phi_in realizes the empty word; take an
        # angular momentum beyond the reach of every bump
        n = J2 @ np.array([math.cos(phi_in), math.sin(phi_in)])
        L = max(-float(b.center @ n) + b.shape.support(n) for b in scene.bumps) + 1.0
        st = line_to_state(scene, phi_in, L)
        orbit = fl.propagate(scene, st)
        if orbit.itinerary:
            raise NoConvergence("empty word but the reference line hits a bump")
        return ScatteringOrbit(word, phi_in, phi_out, [], 0.0, orbit)

    def residual(z):
        if np.any(np.abs(z[1::2]) >= 0.999):
            # clipping u would flatten a Jacobian column; reject instead
            raise NotInDomain("tangential component left the chart")
        states = [SectionState(word.symbols[k],
                               z[2 * k] % scene.bumps[word.symbols[k] - 1].shape.perimeter,
                               float(z[2 * k + 1]))
                  for k in range(m)]
        F = np.zeros(2 * m)
        st0 = section_to_state(scene, states[0])
        F[0] = _wrap_angle(math.atan2(st0.v[1], st0.v[0]) - phi_in)
        for k in range(m - 1):
            step = reference_step(scene, states[k])
            if step.target != word.symbols[k + 1]:
                raise NotInDomain("intermediate step leaves the word's branch")
            per = scene.bumps[word.symbols[k + 1] - 1].shape.perimeter
            F[2 * k + 1] = _wrap_ds(step.end.s - states[k + 1].s, per)
            F[2 * k + 2] = step.end.u - states[k + 1].u
        last = reference_step_interior(scene, states[m - 1])
        v_out = last.exit_state.v
        F[2 * m - 1] = _wrap_angle(math.atan2(v_out[1], v_out[0]) - phi_out)
        return F, states

    # seed: incoming directions phi_in then center-to-center; each entry
    # point picked so the exact arc exits toward the next target direction
    dirs_in = [np.array([math.cos(phi_in), math.sin(phi_in)])]
    for k in range(1, m):
        d = scene.bumps[word.symbols[k] - 1].center - \
            scene.bumps[word.symbols[k - 1] - 1].center
        dirs_in.append(d / np.linalg.norm(d))
    dirs_out = dirs_in[1:] + [np.array([math.cos(phi_out), math.sin(phi_out)])]
    seed_states = [_entry_seed(scene, sym, din, dout)
                   for sym, din, dout in zip(word.symbols, dirs_in, dirs_out)]
    # fixed-point refinement: re-aim every entry at the current neighbour
    # entry points (contracts because the bumps are widely separated)
    candidates = [list(seed_states)]
    for _ in range(12):
        pts = [section_to_state(scene, x).q for x in seed_states]
        new_states = []
        for k, sym_k in enumerate(word.symbols):
            if k == 0:
                din = np.array([math.cos(phi_in), math.sin(phi_in)])
            else:
                d = pts[k] - pts[k - 1]
                din = d / np.linalg.norm(d)
            if k == m - 1:
                dout = np.array([math.cos(phi_out), math.sin(phi_out)])
            else:
                d = pts[k + 1] - pts[k]
                dout = d / np.linalg.norm(d)
            new_states.append(_entry_seed(scene, sym_k, din, dout))
        seed_states = new_states
        candidates.append(list(seed_states))
    # start Newton from the best evaluable candidate, preferring the most
    # refined ones
    z = F = None
    for states in reversed(candidates):
        zc = np.zeros(2 * m)
        for k, x in enumerate(states):
            zc[2 * k] = x.s
            zc[2 * k + 1] = x.u
        try:
            Fc, _ = residual(zc)
        except (NotInDomain, Escaped, GlancingNearby):
            continue
        if F is None or np.linalg.norm(Fc) < np.linalg.norm(F):
            z, F = zc, Fc
    if z is None:
        raise NoConvergence("no seed stayed on the word's branch")

    best = math.inf
    trace = []
    for _ in range(MAX_NEWTON_ITERS):
        res = float(np.max(np.abs(F)))
        trace.append(res)
        best = min(best, res)
        if res < res_tol:
            break
        Jac = np.zeros((2 * m, 2 * m))
        eps = 1e-7
        for j in range(2 * m):
            sides = []
            for sgn in (1.0, -1.0):
                zs = z.copy()
                zs[j] += sgn * eps
                try:
                    Fs, _ = residual(zs)
                except (NotInDomain, GlancingNearby):
                    Fs = None
                sides.append(Fs)
            Fp, Fm = sides
            if Fp is not None and Fm is not None:
                Jac[:, j] = (Fp - Fm) / (2.0 * eps)
            elif Fp is not None:  # one-sided near a branch boundary
                Jac[:, j] = (Fp - F) / eps
            elif Fm is not None:
                Jac[:, j] = (F - Fm) / eps
            else:
                raise NoConvergence("stencil leaves the branch", best, trace)
        try:
            delta = np.linalg.solve(Jac, -F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular shooting Jacobian", best, trace) from exc
        lam = 1.0
        norm0 = float(np.linalg.norm(F))
        for _ in range(30):
            try:
                F_new, _ = residual(z + lam * delta)
            except (NotInDomain, Escaped, GlancingNearby):
                lam *= 0.5
                continue
            if np.linalg.norm(F_new) <= (1.0 - 1e-4 * lam) * norm0:
                z = z + lam * delta
                F = F_new
                break
            lam *= 0.5
        else:
            raise NoConvergence("Armijo line search stalled", best, trace)
    else:
        raise NoConvergence("Newton did not reach the residual tolerance",
                            best, trace)
    F, states = residual(z)
    res = float(np.max(np.abs(F)))
    st0 = section_to_state(scene, states[0])
    back = 4.0 * scene.bounding_radius
    start = fl.State(st0.q - back * st0.v, st0.v)
    orbit = fl.propagate(scene, start, max_events=4 * m + 4)
    return ScatteringOrbit(word, phi_in, phi_out, states, res, orbit)
