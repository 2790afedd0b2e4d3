"""Shared fixtures and the independent ODE-integrator oracle."""
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from magbump.geometry import Bump, Disk, Ellipse, Scene


SIDE = 10.0
EQUILATERAL_CENTERS = [(0.0, 0.0), (SIDE, 0.0),
                       (SIDE / 2.0, SIDE * math.sqrt(3.0) / 2.0)]


@pytest.fixture(scope="session")
def equilateral_scene():
    """Three unit disks on an equilateral triangle of side 10, b = 10."""
    return Scene([Bump(Disk(c, 1.0), 10.0) for c in EQUILATERAL_CENTERS])


@pytest.fixture()
def unit_disk_scene():
    def make(b, radius=1.0):
        return Scene([Bump(Disk((0.0, 0.0), radius), b)])
    return make


def random_scene(rng, n_min=2, n_max=3, ellipses=True):
    """Non-overlapping random bumps in a box, mixed shapes and field signs."""
    n = int(rng.integers(n_min, n_max + 1))
    bumps = []
    attempts = 0
    while len(bumps) < n and attempts < 200:
        attempts += 1
        c = rng.uniform(-4.0, 4.0, 2)
        r = float(rng.uniform(0.5, 1.2))
        clear = all(
            np.linalg.norm(c - b.center) > r + 0.3 +
            (b.shape.radius if isinstance(b.shape, Disk) else b.shape.semi_axes[0])
            for b in bumps)
        if not clear:
            continue
        b_val = float(rng.uniform(0.5, 3.0) * rng.choice([-1.0, 1.0]))
        if ellipses and rng.random() < 0.5:
            minor = r * float(rng.uniform(0.5, 0.95))
            shape = Ellipse(tuple(c), (r, minor), float(rng.uniform(0.0, math.pi)))
        else:
            shape = Disk(tuple(c), r)
        bumps.append(Bump(shape, b_val))
    return Scene(bumps)


def _rk4_step(f, t, y, h):
    k1 = np.asarray(f(t, y))
    k2 = np.asarray(f(t + h / 2.0, y + h / 2.0 * k1))
    k3 = np.asarray(f(t + h / 2.0, y + h / 2.0 * k2))
    k4 = np.asarray(f(t + h, y + h * k3))
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def ode_oracle_positions(scene, q0, v0, times, t_final, rtol=1e-12):
    """Positions at the requested times from a high-order ODE integration.

    The piecewise-smooth field is handled with terminal boundary events; the
    step size is capped below the narrowest bump so no crossing is skipped.
    Completely independent of the closed-form event-driven propagation.
    """
    widths = [b.shape.radius if isinstance(b.shape, Disk) else b.shape.semi_axes[1]
              for b in scene.bumps]
    max_step = 0.25 * min(widths)

    def region_of(q):
        for i, b in enumerate(scene.bumps):
            if b.shape.contains(q):
                return i + 1
        return None

    def rhs_for(region):
        b = scene.bumps[region - 1].b if region else 0.0
        return lambda t, y: [y[2], y[3], -b * y[3], b * y[2]]

    events = []
    for bump in scene.bumps:
        def ev(t, y, shape=bump.shape):
            return shape.implicit(y[:2])
        ev.terminal = True
        events.append(ev)

    y = np.concatenate([np.asarray(q0, float), np.asarray(v0, float)])
    t = 0.0
    out = {}
    times = sorted(times)
    ti = 0
    for _ in range(400):
        if t >= t_final - 1e-13:
            break
        region = region_of(y[:2] + 1e-8 * y[2:4])
        sol = solve_ivp(rhs_for(region), (t, t_final), y, method="DOP853",
                        rtol=rtol, atol=rtol * 1e-2, events=events,
                        dense_output=True, max_step=max_step)
        t_end = sol.t[-1]
        while ti < len(times) and times[ti] <= t_end + 1e-9:
            out[times[ti]] = sol.sol(min(times[ti], t_end))[:2]
            ti += 1
        y = sol.y[:, -1]
        t = t_end
        if sol.status == 0:
            break
        # one tiny fixed step across the boundary in the new region, so the
        # terminal event does not re-fire at the restart
        region = region_of(y[:2] + 1e-8 * y[2:4])
        y = _rk4_step(rhs_for(region), t, y, 1e-9)
        t += 1e-9
    return out
