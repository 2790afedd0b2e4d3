"""The invariant cone field in (J, Jdot) coordinates and a sampled check of
its strict invariance under the linearized Poincare map."""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, Escaped, GlancingNearby, NotVeryStrong, ZeroVector
from .geometry import Scene
from .linearization import (SectionState, linearize_poincare, reference_step,
                            sample_entries)

INSIDE = "inside"
BOUNDARY = "boundary"
OUTSIDE = "outside"


def cone_coefficients(xi, d):
    """Coefficients (lambda_l, lambda_u) of xi = (J, Jdot) in the generator
    basis e_l = (1, 0), e_u = (d, 1)."""
    J, Jd = float(xi[0]), float(xi[1])
    return J - d * Jd, Jd


def in_cone(xi, d):
    """Classify xi relative to the open cone spanned between e_l and e_u.

    Returns (classification, margin) with margin = lambda_l*lambda_u/|xi|^2;
    strictly positive margin means strictly inside.
    """
    if d <= 0:
        raise DomainError("cone gap d must be positive")
    xi = np.asarray(xi, dtype=float)
    n2 = float(xi @ xi)
    if n2 == 0.0:
        raise ZeroVector("zero vector has no cone classification")
    ll, lu = cone_coefficients(xi, d)
    margin = ll * lu / n2
    if margin > 0:
        return INSIDE, margin
    if ll == 0.0 or lu == 0.0:
        return BOUNDARY, 0.0
    return OUTSIDE, margin


def f_arc_gap(alpha, r):
    """f(alpha) = alpha - 2 arctan(r sin alpha / (1 + r cos alpha)), the
    normalized arc-length gap used in the cone-invariance estimate.

    Bounded below by (1 - r)/(1 + r) * alpha on [0, pi] for r in [0, 1).
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(alpha > math.pi):
        raise DomainError("alpha must lie in [0, pi]")
    if not 0 <= r < 1:
        raise DomainError("r must lie in [0, 1)")
    out = alpha - 2.0 * np.arctan(r * np.sin(alpha) / (1.0 + r * np.cos(alpha)))
    return float(out) if out.ndim == 0 else out


def f_arc_gap_derivative(alpha, r):
    alpha = np.asarray(alpha, dtype=float)
    out = (1.0 - r * r) / (r * r + 2.0 * r * np.cos(alpha) + 1.0)
    return float(out) if out.ndim == 0 else out


def cone_invariance_check(scene: Scene, n_samples=1000, seed=0,
                          margin_angle=0.05, require_very_strong=True):
    """Sample section states and verify that both cone generators map
    strictly inside the arrival cone under the linearized Poincare map.

    The arrival cone uses the arrival bump's gap d_m; margins under the
    alternative departure-gap reading are reported alongside.
    """
    if require_very_strong and not scene.very_strong():
        raise NotVeryStrong("cone invariance is only asserted for very strong fields")
    rng = np.random.default_rng(seed)
    gaps = scene.gaps
    per_bump = {ell: [] for ell in scene.alphabet}
    skipped = 0
    margins = []
    alt_margins = []
    det_err = 0.0
    n_each = max(1, n_samples // scene.n)
    max_attempts = 1000 * n_each
    for ell in scene.alphabet:
        shape = scene.bumps[ell - 1].shape
        attempts = 0
        # rejection-sample until n_each states stay in the domain (most
        # entries of a very strong bump back-scatter to infinity)
        while len(per_bump[ell]) < n_each and attempts < max_attempts:
            attempts += 1
            ss, us = sample_entries(shape, 1, rng, margin_angle)
            x = SectionState(ell, float(ss[0]), float(us[0]))
            try:
                step = reference_step(scene, x)
                D = linearize_poincare(scene, x, rep="jacobi", step=step)
            except (Escaped, GlancingNearby):
                skipped += 1
                continue
            det_err = max(det_err, abs(np.linalg.det(D) - 1.0))
            d_src = gaps[ell - 1]
            d_tgt = gaps[step.target - 1]
            sample_margin = math.inf
            alt_sample_margin = math.inf
            for gen in (np.array([1.0, 0.0]), np.array([d_src, 1.0])):
                img = D @ gen
                _, m = in_cone(img, d_tgt)
                _, m_alt = in_cone(img, d_src)
                sample_margin = min(sample_margin, m)
                alt_sample_margin = min(alt_sample_margin, m_alt)
            per_bump[ell].append(sample_margin)
            margins.append(sample_margin)
            alt_margins.append(alt_sample_margin)
    if not margins:
        raise Escaped("all sampled section states escaped")
    min_margin = min(margins)
    return {
        "n_samples": len(margins),
        "skipped": skipped,
        "seed": seed,
        "min_margin": min_margin,
        "min_margin_departure_gap": min(alt_margins),
        "max_det_error": det_err,
        "pass": bool(min_margin > 0),
        "per_bump": {
            str(ell): {
                "count": len(v),
                "min_margin": min(v) if v else None,
                "histogram": _histogram(v),
            }
            for ell, v in per_bump.items()
        },
    }


def _histogram(values, n_bins=10):
    if not values:
        return None
    counts, edges = np.histogram(values, bins=n_bins)
    return {"edges": [float(e) for e in edges],
            "counts": [int(c) for c in counts]}
