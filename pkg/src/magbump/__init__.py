"""Exact-geometry simulator and verification toolkit for classical motion
through convex constant-field magnetic bumps."""

from .geometry import (Bump, Disk, Ellipse, Regime, Scene, classify_field,
                       classify_scene, curvature_range, very_strong_threshold)
from .flow import (Orbit, State, advance_in_field, arc_exit, interior_trapped,
                   larmor_center, next_entry, propagate)
from .linearization import (SectionState, arc_transfer, fd_oracle,
                            focusing_check, free_transfer, linearize_poincare)
from .scattering import (OrientedLine, line_to_state, scattering_degree,
                         scattering_map, state_to_line, total_curvature)
from .conefield import cone_invariance_check, f_arc_gap, in_cone
from .symbolic import (Word, find_periodic_orbit, find_scattering_orbit,
                       is_admissible, itinerary, monodromy, poincare_map)

__version__ = "0.1.0"
