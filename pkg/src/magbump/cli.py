"""Command-line front end: scene loading, simulation, checks, orbit finding
and report emission.

Exit codes: 0 = pass, 1 = check failure, 2 = usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import conefield, flow, linearization, scattering, symbolic
from .errors import MagbumpError, SceneFormatError
from .geometry import Scene
from .render import orbit_csv, scene_svg

DEFAULT_TOLERANCES = {
    "glancing": 1e-10,
    "residual": 1e-10,
    "collinear": 1e-9,
    "fd_eps": 1e-6,
}


def _load_scene(path):
    return Scene.from_file(path)


def _parse_tolerances(pairs):
    tol = dict(DEFAULT_TOLERANCES)
    for item in pairs or []:
        if "=" not in item:
            raise SceneFormatError(f"--tolerance expects NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        if name not in tol:
            raise SceneFormatError(f"unknown tolerance {name!r}")
        tol[name] = float(value)
    return tol


def _write(outdir, name, text):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    path.write_text(text)
    return str(path)


def _json_report(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _report_header(args, tol):
    return {
        "scene": args.scene,
        "tolerances": tol,
        "seed": getattr(args, "seed", None),
        "samples": getattr(args, "samples", None),
    }


# -- subcommands --------------------------------------------------------------


def cmd_classify(args):
    scene = _load_scene(args.scene)
    report = scene.classification()
    text = _json_report(report)
    sys.stdout.write(text)
    if args.out:
        _write(args.out, "classify.json", text)
    return 0


def cmd_alpha_min(args):
    scene = _load_scene(args.scene)
    value = scene.alpha_min
    print(f"alpha_min = {value:.12f} rad")
    if args.out:
        _write(args.out, "alpha_min.json",
               _json_report({"alpha_min": value}))
    return 0


def cmd_simulate(args):
    scene = _load_scene(args.scene)
    tol = _parse_tolerances(args.tolerance)
    formats = (args.format or "csv,svg").split(",")
    orbits = []
    if args.beam:
        phi, l0, l1, n = args.beam.split(":")
        for L in np.linspace(float(l0), float(l1), int(n)):
            st = scattering.line_to_state(scene, float(phi), float(L))
            orbits.append(flow.propagate(scene, st, max_events=args.max_events,
                                         glancing_policy=args.glancing))
    elif args.line:
        phi, L = (float(x) for x in args.line.split(","))
        st = scattering.line_to_state(scene, phi, L)
        orbits.append(flow.propagate(scene, st, max_events=args.max_events,
                                     glancing_policy=args.glancing))
    elif args.state:
        x, y, vx, vy = (float(v) for v in args.state.split(","))
        st = flow.State(np.array([x, y]), np.array([vx, vy]))
        nrm = np.linalg.norm(st.v)
        st.v = st.v / nrm
        for i, bump in enumerate(scene.bumps):
            if bump.shape.contains(st.q):
                st.region = i + 1
        orbits.append(flow.propagate(scene, st, max_events=args.max_events,
                                     glancing_policy=args.glancing))
    else:
        print("simulate needs --line, --state or --beam", file=sys.stderr)
        return 2
    for i, orbit in enumerate(orbits):
        status = "escaped" if orbit.escaped else \
            ("trapped" if orbit.trapped else "limit")
        itin = ",".join(str(s) for s in orbit.itinerary) or "-"
        print(f"orbit {i}: itinerary [{itin}] status {status}"
              + (" glancing" if orbit.glancing else ""))
    outdir = args.out or "."
    written = []
    if "csv" in formats:
        for i, orbit in enumerate(orbits):
            written.append(_write(outdir, f"orbit_{i:03d}.csv",
                                  orbit_csv(orbit, resolution=args.resolution)))
    if "svg" in formats:
        written.append(_write(outdir, "scene.svg", scene_svg(scene, orbits)))
    if "json" in formats:
        payload = _report_header(args, tol)
        payload["orbits"] = [
            {"itinerary": list(o.itinerary), "escaped": o.escaped,
             "glancing": o.glancing, "trapped": o.trapped,
             "total_time": o.total_time}
            for o in orbits
        ]
        written.append(_write(outdir, "simulate.json", _json_report(payload)))
    for w in written:
        print(f"wrote {w}")
    return 0


def cmd_degree(args):
    scene = _load_scene(args.scene)
    tol = _parse_tolerances(args.tolerance)
    phis = np.linspace(0.0, 2.0 * math.pi, args.directions, endpoint=False)
    report = _report_header(args, tol)
    report["bumps"] = []
    for i, bump in enumerate(scene.bumps):
        sub = scattering.single_bump_scene(bump)
        degs = [scattering.scattering_degree(sub, float(phi),
                                             glancing_policy=args.glancing)
                for phi in phis]
        report["bumps"].append({"index": i + 1, "b": bump.b,
                                "degrees": degs,
                                "degree": degs[0],
                                "consistent": len(set(degs)) == 1})
        print(f"bump {i + 1}: degree {degs[0]}"
              + ("" if len(set(degs)) == 1 else "  (direction-dependent!)"))
    if args.out:
        _write(args.out, "degree.json", _json_report(report))
        if args.sweep_points:
            for entry in report["bumps"]:
                i = entry["index"]
                sub = scattering.single_bump_scene(scene.bumps[i - 1])
                Ls = np.linspace(-args.sweep_span, args.sweep_span,
                                 args.sweep_points)
                rows = scattering.scattering_sweep(sub, 0.0, Ls, args.glancing)
                text = "L,phi_out,L_out,total_curvature\n" + "\n".join(
                    f"{r[0]:.12g},{r[1]:.12g},{r[2]:.12g},{r[3]:.12g}"
                    for r in rows) + "\n"
                _write(args.out, f"sweep_bump{i}.csv", text)
    ok = all(e["consistent"] for e in report["bumps"])
    return 0 if ok else 1


def cmd_cone_check(args):
    scene = _load_scene(args.scene)
    tol = _parse_tolerances(args.tolerance)
    report = _report_header(args, tol)
    result = conefield.cone_invariance_check(scene, n_samples=args.samples,
                                             seed=args.seed)
    report["cone_check"] = result
    text = _json_report(report)
    sys.stdout.write(text)
    if args.out:
        _write(args.out, "cone_check.json", text)
    return 0 if result["pass"] else 1


def cmd_find_orbit(args):
    scene = _load_scene(args.scene)
    tol = _parse_tolerances(args.tolerance)
    symbols = tuple(int(x) for x in args.word.split(","))
    word = symbolic.Word(symbols, args.kind)
    if args.kind == "periodic":
        po = symbolic.find_periodic_orbit(scene, word, seed=args.seed,
                                          res_tol=tol["residual"])
        mono = symbolic.monodromy(scene, po)
        payload = _report_header(args, tol)
        payload["orbit"] = {
            "word": list(symbols),
            "residual": po.residual,
            "states": [{"bump": x.ell, "s": x.s, "u": x.u} for x in po.states],
            "monodromy": [[float(v) for v in row] for row in mono["matrix"]],
            "trace": mono["trace"],
            "det": mono["det"],
            "hyperbolic": mono["hyperbolic"],
        }
        print(f"word ({args.word}): residual {po.residual:.3e}, "
              f"trace {mono['trace']:.6g}, "
              f"{'hyperbolic' if mono['hyperbolic'] else 'not hyperbolic'}")
        orbit = po.orbit
    else:
        so = symbolic.find_scattering_orbit(scene, word, args.phi_in,
                                            args.phi_out,
                                            res_tol=tol["residual"])
        payload = _report_header(args, tol)
        payload["orbit"] = {
            "word": list(symbols),
            "residual": so.residual,
            "phi_in": so.phi_in,
            "phi_out": so.phi_out,
            "states": [{"bump": x.ell, "s": x.s, "u": x.u} for x in so.states],
        }
        print(f"segment ({args.word}): residual {so.residual:.3e}")
        orbit = so.orbit
    if args.out:
        _write(args.out, "orbit.json", _json_report(payload))
        _write(args.out, "orbit.svg", scene_svg(scene, [orbit]))
    return 0


def cmd_check(args):
    """Composite verification: classification, degrees, focusing, cone field."""
    scene = _load_scene(args.scene)
    tol = _parse_tolerances(args.tolerance)
    report = _report_header(args, tol)
    failures = []

    cls = scene.classification()
    report["classification"] = cls

    report["degrees"] = []
    for i, bump in enumerate(scene.bumps):
        entry = {"index": i + 1}
        try:
            sub = scattering.single_bump_scene(bump)
            entry["degree"] = scattering.scattering_degree(sub, 0.0)
        except MagbumpError as exc:
            entry["error"] = str(exc)
            failures.append(f"degree bump {i + 1}: {exc}")
        report["degrees"].append(entry)

    report["focusing"] = []
    for i, bump in enumerate(scene.bumps):
        if cls["bumps"][i]["regime"] != "strong":
            report["focusing"].append({"index": i + 1, "skipped": "not strong"})
            continue
        res = linearization.focusing_check(scene, i + 1,
                                           n_entries=min(args.samples, 200),
                                           seed=args.seed)
        res.pop("entries")
        report["focusing"].append(res)
        if not res["all_negative"]:
            failures.append(f"focusing bump {i + 1}: nonnegative outgoing data")

    if cls.get("very_strong"):
        cone = conefield.cone_invariance_check(scene, n_samples=args.samples,
                                               seed=args.seed)
        report["cone_check"] = cone
        if not cone["pass"]:
            failures.append("cone invariance check failed")
    else:
        report["cone_check"] = {"skipped": "scene is not very strong"}

    report["failures"] = failures
    text = _json_report(report)
    sys.stdout.write(text)
    if args.out:
        _write(args.out, "check.json", text)
    return 0 if not failures else 1


def cmd_sweep(args):
    """Vary the field strength of one bump over a grid; tabulate degree and
    cone-margin transitions."""
    scene = _load_scene(args.scene)
    tol = _parse_tolerances(args.tolerance)
    lo, hi, n = args.values.split(":")
    values = np.linspace(float(lo), float(hi), int(n))
    rows = []
    for value in values:
        data = scene.to_dict()
        data["bumps"][args.bump - 1]["b"] = float(value)
        mod = Scene.from_dict(data)
        row = {"b": float(value)}
        try:
            sub = scattering.single_bump_scene(mod.bumps[args.bump - 1])
            row["degree"] = scattering.scattering_degree(sub, 0.0)
        except MagbumpError as exc:
            row["degree"] = None
            row["degree_error"] = type(exc).__name__
        if mod.n >= 2 and mod.very_strong():
            try:
                cone = conefield.cone_invariance_check(
                    mod, n_samples=max(50, args.samples // 10), seed=args.seed)
                row["cone_min_margin"] = cone["min_margin"]
            except MagbumpError as exc:
                row["cone_error"] = type(exc).__name__
        rows.append(row)
        print(f"b={value:.6g} degree={row.get('degree')} "
              f"margin={row.get('cone_min_margin', '-')}")
    if args.out:
        payload = _report_header(args, tol)
        payload["sweep"] = rows
        _write(args.out, "sweep.json", _json_report(payload))
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="magbump",
        description="Exact simulator and hyperbolicity toolkit for planar "
                    "motion through convex constant-field magnetic bumps.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, samples=1000):
        sp.add_argument("--scene", required=True, help="scene JSON file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--tolerance", action="append", metavar="NAME=VALUE")
        sp.add_argument("--samples", type=int, default=samples)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--parallel", type=int, default=1)
        sp.add_argument("--glancing", choices=["straight", "larmor"],
                        default="straight")

    sp = sub.add_parser("classify", help="field regimes and scene constants")
    common(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("alpha-min", help="minimal triple turning angle")
    common(sp)
    sp.set_defaults(func=cmd_alpha_min)

    sp = sub.add_parser("simulate", help="propagate one orbit or a beam")
    common(sp)
    sp.add_argument("--line", metavar="PHI,L")
    sp.add_argument("--state", metavar="X,Y,VX,VY")
    sp.add_argument("--beam", metavar="PHI:L0:L1:N")
    sp.add_argument("--format", default="csv,svg")
    sp.add_argument("--max-events", type=int, default=1000)
    sp.add_argument("--resolution", type=float, default=0.05)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("degree", help="scattering degree per bump")
    common(sp)
    sp.add_argument("--directions", type=int, default=8)
    sp.add_argument("--sweep-points", type=int, default=0)
    sp.add_argument("--sweep-span", type=float, default=5.0)
    sp.set_defaults(func=cmd_degree)

    sp = sub.add_parser("cone-check", help="sampled cone-field invariance")
    common(sp)
    sp.set_defaults(func=cmd_cone_check)

    sp = sub.add_parser("find-orbit", help="orbit realizing a symbol word")
    common(sp)
    sp.add_argument("--word", required=True, metavar="A,B,C")
    sp.add_argument("--kind", choices=["periodic", "segment"],
                    default="periodic")
    sp.add_argument("--phi-in", type=float, default=0.0)
    sp.add_argument("--phi-out", type=float, default=math.pi)
    sp.set_defaults(func=cmd_find_orbit)

    sp = sub.add_parser("check", help="composite verification report")
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("sweep", help="vary one field strength over a grid")
    common(sp)
    sp.add_argument("--bump", type=int, default=1)
    sp.add_argument("--values", required=True, metavar="LO:HI:N")
    sp.set_defaults(func=cmd_sweep)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SceneFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MagbumpError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
