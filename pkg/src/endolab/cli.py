"""Command-line entry point: ``endolab <subcommand> --config cfg.json [--out dir]``.

Exit status is 0 when every certificate passes, 1 when one fails and 2 on an
invalid configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels, profiles, reports
from .cones import SampledCurve, default_seed_curve
from .io import ConfigError, Manifest, load_config, resolve_out, write_json
from .maps import BudgetError, ck_distance
from .params import ParamError

FLAT = ("build", "certify-cones", "critical", "distances", "destroy", "trap", "cover", "all")


def _common(p: argparse.ArgumentParser, out_help="output directory"):
    p.add_argument("--config", help="flat JSON config with dotted keys")
    p.add_argument("--out", help=out_help + " (ENDOLAB_OUT overrides)")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--seed", type=int, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="endolab", description="Fold endomorphisms of the torus: construction and certificates.")
    ap.add_argument("--backend", choices=("numba", "numpy"), help="orbit kernel backend")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in FLAT:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        _common(p)
        if name == "critical":
            p.add_argument("action", nargs="?", choices=("extract", "graph"), help="write a single CSV instead of the full pipeline")
        if name == "trap":
            p.add_argument("--eta", type=float)
            p.add_argument("--iters", type=int)
            p.add_argument("--samples", type=int)
        if name == "cover":
            p.add_argument("--map", default="h")
            p.add_argument("--balls", type=int)
            p.add_argument("--bins", type=int)

    prof = sub.add_parser("profiles", help="profile utilities").add_subparsers(dest="action", required=True)
    p = prof.add_parser("dump", help="write a profile table as CSV (x, value, d1, d2)")
    _common(p, "CSV file")
    p.add_argument("--kind", choices=("psi", "phi", "plateau"), required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--samples", type=int, default=2001)

    maps = sub.add_parser("maps", help="map construction and distances").add_subparsers(dest="action", required=True)
    p = maps.add_parser("build", help="write map parameter manifests")
    _common(p)
    p = maps.add_parser("distance", help="C0/C1/C2 distance between two maps")
    _common(p, "JSON file")
    p.add_argument("--m1", default="h")
    p.add_argument("--m2", default="destroyer")
    p.add_argument("--grid", type=int)
    p.add_argument("--eta", type=float)

    cones = sub.add_parser("cones", help="cone certificates and curve growth").add_subparsers(dest="action", required=True)
    p = cones.add_parser("certify", help="cone invariance and expansion on a grid")
    _common(p, "JSON file")
    p.add_argument("--map", default="h")
    p.add_argument("--a0", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--eta", type=float)
    p = cones.add_parser("grow", help="diameter growth of a seed curve")
    _common(p, "CSV file")
    p.add_argument("--curve", help="CSV with columns x,y (default: horizontal seed across S)")
    p.add_argument("--steps", type=int)

    lab = sub.add_parser("lab", help="trapping and covering experiments").add_subparsers(dest="action", required=True)
    p = lab.add_parser("trap", help="trap demo for the destroyer")
    _common(p, "JSON file")
    p.add_argument("--eta", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--samples", type=int)
    p = lab.add_parser("cover", help="density diagnostic over random balls")
    _common(p, "CSV file")
    p.add_argument("--map", default="h")
    p.add_argument("--balls", type=int)
    p.add_argument("--bins", type=int)

    return ap


def _file_target(args, default_name: str) -> Path:
    """``--out`` names a file; ENDOLAB_OUT redirects it into that directory."""
    name = Path(args.out).name if args.out else default_name
    env = os.environ.get("ENDOLAB_OUT")
    if env:
        return Path(env) / name
    return Path(args.out) if args.out else Path(default_name)


def _read_curve(path) -> SampledCurve:
    data = np.genfromtxt(path, delimiter=",", names=True)
    pts = np.column_stack([data["x"], data["y"]])
    step = float(np.median(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    return SampledCurve(pts, step)


def dispatch(args, run: reports.Run, target: Path | None):
    cmd, action = args.command, getattr(args, "action", None)
    if cmd in ("build",) or (cmd == "maps" and action == "build"):
        reports.run_build(run)
    elif cmd == "critical" and action == "extract":
        reports.write_critical_csv(run, target)
    elif cmd == "critical" and action == "graph":
        reports.write_graph_csv(run, target)
    elif cmd == "critical":
        reports.run_critical(run)
    elif cmd == "certify-cones":
        reports.run_certify_cones(run)
    elif cmd == "distances":
        reports.run_distances(run)
    elif cmd == "destroy":
        reports.run_destroy(run)
    elif cmd == "trap" or (cmd == "lab" and action == "trap"):
        reports.run_trap(run, args.eta, args.iters, args.samples, target)
    elif cmd == "cover" or (cmd == "lab" and action == "cover"):
        reports.run_cover(run, args.map, args.balls, args.bins, target)
    elif cmd == "all":
        reports.run_all(run)
    elif cmd == "profiles":
        p = run.params
        prof = {"psi": p.psi, "phi": p.phi, "plateau": run.con.F.bump}[args.kind]
        profiles.dump_csv(prof, target, n=args.samples)
        run.add(profiles.verify_profile(prof, profiles.constraints_for(prof)))
    elif cmd == "maps" and action == "distance":
        m1 = run.map_named(args.m1, args.eta)
        m2 = run.map_named(args.m2, args.eta)
        grid = reports.distance_grid(run, args.grid)
        rep = ck_distance(m1, m2, grid)
        write_json(target, {"m1": m1.name, "m2": m2.name} | rep.to_dict())
    elif cmd == "cones" and action == "certify":
        m = run.map_named(args.map, args.eta)
        certs = reports.cone_certificates(run, m, args.a0, args.grid)
        run.add(*certs)
        write_json(target, [c.to_dict() for c in certs])
    elif cmd == "cones" and action == "grow":
        seed = _read_curve(args.curve) if args.curve else default_seed_curve(run.params, run.config["growth.length"])
        reports.run_growth(run, seed, args.steps, target)
    else:  # pragma: no cover - argparse rejects everything else
        raise SystemExit(2)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend:
        kernels.set_backend(args.backend)
    kernels.set_threads(args.threads)
    overrides = {"seed": args.seed}
    if args.command == "profiles":
        overrides.update(theta=args.theta, delta=args.delta)
    t0 = time.perf_counter()
    try:
        config = load_config(args.config, overrides)
        file_cmd = args.command in ("profiles", "lab", "cones") or (args.command == "maps" and args.action == "distance") or (args.command == "critical" and args.action)
        if file_cmd:
            defaults = {
                "profiles": f"{getattr(args, 'kind', 'psi')}.csv",
                "lab": "trap.json" if getattr(args, "action", "") == "trap" else "cover.csv",
                "cones": "cert.json" if getattr(args, "action", "") == "certify" else "growth.csv",
                "maps": "dist.json",
                "critical": "sf.csv" if getattr(args, "action", "") == "extract" else "graph.csv",
            }
            target = _file_target(args, defaults[args.command])
            out = target.parent
        else:
            target = None
            out = resolve_out(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if target is not None:
            target.parent.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(out, " ".join([args.command] + ([args.action] if getattr(args, "action", None) else [])), config)
        run = reports.Run(config, manifest)
        dispatch(args, run, target)
    except (ConfigError, ParamError, BudgetError) as exc:
        print(f"endolab: {exc}", file=sys.stderr)
        return 2
    manifest.wall_clock = round(time.perf_counter() - t0, 3)
    if manifest.certificates:
        write_json(out / "certificates.json", [c.to_dict() for c in manifest.certificates])
    manifest.write()
    for c in manifest.certificates:
        print(c.summary())
    failed = manifest.failed
    print(f"{len(manifest.certificates) - len(failed)}/{len(manifest.certificates)} certificates passed; manifest: {out / 'manifest.json'}")
    if failed:
        print("failed: " + ", ".join(c.lemma for c in failed), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
