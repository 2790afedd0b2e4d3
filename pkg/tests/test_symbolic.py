"""Symbol words, periodic orbits from words and scattering connections."""
import math

import numpy as np
import pytest

from magbump.errors import ExcludedDirection, NotVeryStrong
from magbump.geometry import Bump, Disk, Scene
from magbump.symbolic import (Word, admissible_periodic_words,
                              count_admissible_periodic_words,
                              find_periodic_orbit, find_scattering_orbit,
                              is_admissible, itinerary, monodromy,
                              poincare_map)


def test_word_admissibility():
    assert is_admissible(Word((1, 2, 3)))
    assert not is_admissible(Word((1, 1, 2)))
    assert not is_admissible(Word((1, 2, 1)))  # cyclic repeat
    assert is_admissible(Word((1, 2, 1), kind="segment"))
    assert not is_admissible(Word((1, 2, 2, 3), kind="segment"))
    with pytest.raises(ValueError):
        Word((1, 2), kind="loop")


def test_admissible_word_counts():
    for n in (2, 3, 4):
        for p in (2, 3, 4, 5):
            words = admissible_periodic_words(n, p)
            assert len(words) == count_admissible_periodic_words(n, p)
            assert all(is_admissible(w) for w in words)
    # explicit small case
    assert count_admissible_periodic_words(3, 2) == 6
    assert count_admissible_periodic_words(3, 3) == 6
    assert count_admissible_periodic_words(3, 4) == 18


def test_periodic_orbit_two_bumps(equilateral_scene):
    po = find_periodic_orbit(equilateral_scene, Word((1, 2)))
    assert po.residual < 1e-10
    assert tuple(x.ell for x in po.states) == (1, 2)
    # the replayed flow visits exactly the word's bumps in order
    assert itinerary(po.orbit).symbols[:2] == (1, 2)
    mono = monodromy(equilateral_scene, po)
    assert abs(mono["det"] - 1.0) < 1e-8
    assert mono["hyperbolic"]


def test_periodic_orbit_closes_under_poincare_map(equilateral_scene):
    po = find_periodic_orbit(equilateral_scene, Word((1, 3, 2)))
    for k, x in enumerate(po.states):
        y = poincare_map(equilateral_scene, x)
        x_next = po.states[(k + 1) % 3]
        assert y.ell == x_next.ell
        per = equilateral_scene.bumps[y.ell - 1].shape.perimeter
        ds = (y.s - x_next.s + per / 2.0) % per - per / 2.0
        assert abs(ds) < 1e-8 and abs(y.u - x_next.u) < 1e-8


def test_shift_conjugacy(equilateral_scene):
    # the orbit of the shifted word is the same orbit, advanced one step
    po = find_periodic_orbit(equilateral_scene, Word((1, 2, 3)))
    po_s = find_periodic_orbit(equilateral_scene, Word((2, 3, 1)))
    for k in range(3):
        a, b = po.states[(k + 1) % 3], po_s.states[k]
        assert a.ell == b.ell
        per = equilateral_scene.bumps[a.ell - 1].shape.perimeter
        ds = (a.s - b.s + per / 2.0) % per - per / 2.0
        assert abs(ds) < 1e-8 and abs(a.u - b.u) < 1e-8


def test_independent_seeds_converge_to_same_orbit(equilateral_scene):
    base = find_periodic_orbit(equilateral_scene, Word((1, 3)))
    for seed in (1, 2, 3):
        po = find_periodic_orbit(equilateral_scene, Word((1, 3)),
                                 seed=seed, jitter=0.02)
        for x, y in zip(base.states, po.states):
            assert abs(x.s - y.s) < 1e-8 and abs(x.u - y.u) < 1e-8


def test_periodic_orbit_guards(equilateral_scene):
    weak = Scene([Bump(Disk((0.0, 0.0), 1.0), 2.0),
                  Bump(Disk((6.0, 0.0), 1.0), 2.0)])
    with pytest.raises(NotVeryStrong):
        find_periodic_orbit(weak, Word((1, 2)))
    with pytest.raises(ValueError):
        find_periodic_orbit(equilateral_scene, Word((1, 2, 1)))
    with pytest.raises(ValueError):
        find_periodic_orbit(equilateral_scene, Word((1,)))


def _admissible_direction(scene, start=0.4):
    from magbump.symbolic import _direction_excluded
    phi = start
    while _direction_excluded(scene, phi):
        phi += 0.05
    return phi


def test_scattering_connection(equilateral_scene):
    phi_in = _admissible_direction(equilateral_scene, 0.4)
    phi_out = _admissible_direction(equilateral_scene, 2.5)
    so = find_scattering_orbit(equilateral_scene, Word((1, 3), kind="segment"),
                               phi_in, phi_out)
    assert so.residual < 1e-10
    assert so.orbit.itinerary == (1, 3)
    # incoming direction realized exactly
    v0 = so.orbit.pieces[0].q1 - so.orbit.pieces[0].q0
    v0 = v0 / np.linalg.norm(v0)
    assert abs(math.atan2(v0[1], v0[0]) - phi_in) % (2.0 * math.pi) < 1e-8
    assert so.orbit.escaped
    v1 = so.orbit.final_state.v
    dphi = (math.atan2(v1[1], v1[0]) - phi_out + math.pi) % (2.0 * math.pi) - math.pi
    assert abs(dphi) < 1e-8


def test_scattering_empty_word(equilateral_scene):
    phi = _admissible_direction(equilateral_scene, 0.4)
    so = find_scattering_orbit(equilateral_scene, Word((), kind="segment"),
                               phi, phi)
    assert so.residual == 0.0
    assert so.orbit.itinerary == ()
    assert so.orbit.escaped


def test_excluded_direction_raises(equilateral_scene):
    # the line through the centers of bumps 1 and 2 runs along phi = 0
    with pytest.raises(ExcludedDirection):
        find_scattering_orbit(equilateral_scene, Word((1,), kind="segment"),
                              0.0, 2.0)
