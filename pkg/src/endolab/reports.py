"""Pipelines behind the CLI subcommands.

Each ``run_*`` function takes a :class:`Run`, writes its artifacts under
``run.out`` and appends certificates to the run manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import profiles
from .certificate import Certificate
from .checks import (
    action_certificate,
    critical_sets_agree,
    determinant_anchors,
    flattening_certificate,
    kernel_certificate,
    near_identity_certificate,
    point_anchors,
)
from .cones import (
    SampledCurve,
    certification_grid,
    cone_margin,
    default_seed_curve,
    expansion_margin,
    growth_run,
    search_params,
)
from .critical import (
    default_critical_grid,
    find_non_fold_points,
    sample_critical_set,
    transversality_to_rank1,
)
from .io import Manifest, RunConfig, write_csv, write_json
from .lab import (
    ball_growth_run,
    covering_exponent_linear,
    density_diagnostic,
    invariant_circle_check,
    random_balls,
    sample_strip,
    trap_demo,
)
from .maps import (
    build_A,
    build_destroyer,
    ck_distance,
    construction,
    expanding_certificate,
    perturb_map,
    strip_gap_constant,
)
from .torus import GridSpec, check_r_conditions, sup_ball


@dataclass
class Run:
    config: RunConfig
    manifest: Manifest

    @property
    def out(self):
        return self.manifest.out

    @property
    def params(self):
        return self.config.params()

    @property
    def con(self):
        return construction(self.params)

    def add(self, *certs):
        self.manifest.add(*certs)
        return certs

    def map_named(self, name: str, eta: float | None = None):
        """Resolve ``A``, ``f``, ``F``, ``h`` or ``g``/``destroyer``."""
        con = self.con
        if name in ("g", "destroyer"):
            return build_destroyer(self.params, eta)
        table = {"A": build_A, "f": lambda: con.f, "F": lambda: con.F, "h": lambda: con.h}
        if name not in table:
            raise ValueError(f"unknown map {name!r}; use A, f, F, h or destroyer")
        return table[name]()


# ---------------------------------------------------------------- build


def write_profiles(run: Run, kinds=("psi", "phi", "plateau")):
    p = run.params
    profs = {"psi": p.psi, "phi": p.phi, "plateau": run.con.F.bump}
    for kind in kinds:
        profiles.dump_csv(profs[kind], run.out / f"{kind}.csv")
    write_json(run.out / "profiles.json", {k: profs[k].to_json() for k in kinds})
    return profs


def run_build(run: Run):
    p, con = run.params, run.con
    A = build_A()
    profs = write_profiles(run)
    for kind in ("psi", "phi"):
        c = profiles.verify_profile(profs[kind], profiles.constraints_for(profs[kind]))
        c.lemma = f"profile[{kind}]"
        run.add(c)
    run.add(check_r_conditions(p.r))
    run.add(determinant_anchors(con.f, p, seed=run.config["seed"]))
    run.add(point_anchors(con.f, A, con.h))
    budget = con.F.check_budget()
    run.add(Certificate("flattening_budget", margin=min(budget["limits"][k] - v for k, v in budget["measured"].items()), details=budget))
    run.add(flattening_certificate(con))
    g = build_destroyer(p)
    for m in (A, con.f, con.h, g):
        run.add(invariant_circle_check(m))
    write_json(
        run.out / "maps.json",
        {
            "params": p.to_json(),
            "rho": con.rho,
            "fold_window": con.fold_window.to_dict(),
            "budget": con.budget.to_json(),
            "gamma1_bounds": con.gamma.bounds(),
            "graph_window": list(con.graph.window),
            "maps": [m.describe() for m in (A, con.f, con.F, con.h, g)],
        },
    )


# ---------------------------------------------------------------- critical


def critical_rows(extraction):
    for c in extraction.curves:
        for i in range(len(c)):
            yield [
                float(c.points[i, 0]),
                float(c.points[i, 1]),
                float(c.tangent[i, 0]),
                float(c.tangent[i, 1]),
                float(c.angle[i]),
                "fold" if c.angle[i] > c.threshold else "non_fold",
            ]


def write_critical_csv(run: Run, path):
    ext = sample_critical_set(run.params, default_critical_grid(run.params, run.config["grid.critical"]))
    write_csv(path, ["x", "y", "tangent_x", "tangent_y", "kernel_angle", "fold_flag"], critical_rows(ext))
    return ext


def write_graph_csv(run: Run, path):
    g = run.con.graph
    c = g.c(g.xs)
    write_csv(path, ["x", "y", "dy", "c_offset"], zip(g.xs.tolist(), g.ys.tolist(), g.dys.tolist(), c.tolist()))


def run_critical(run: Run):
    p, con = run.params, run.con
    n = run.config["grid.critical"]
    ext = write_critical_csv(run, run.out / "sf.csv")
    write_graph_csv(run, run.out / "graph.csv")
    run.add(critical_sets_agree(con.f, con.h, p, n))
    run.add(kernel_certificate(con.h, p, n))
    run.add(find_non_fold_points(p, ext).certificate())
    run.add(transversality_to_rank1(con.h, default_critical_grid(p, n)))
    res = float(np.max(np.abs(con.graph.residual(np.linspace(*con.graph.window, 4001)))))
    run.add(Certificate("critical_graph_residual", margin=1e-12 - res, tolerance=1e-12, details={"max_residual": res}))


# ---------------------------------------------------------------- cones


def cone_certificates(run: Run, m, a0=None, n=None):
    p = run.params
    a0 = p.a0 if a0 is None else a0
    grid = certification_grid(p, run.config["grid.certify"] if n is None else n)
    c1, c2 = cone_margin(m, a0, grid), expansion_margin(m, a0, grid)
    c1.lemma = f"cone_invariance[{m.name}]"
    c2.lemma = f"cone_expansion[{m.name}]"
    return c1, c2


def run_certify_cones(run: Run):
    p, con = run.params, run.con
    cfg = run.config
    sr = search_params(p.theta, p.a, n=cfg["grid.certify"], base=p)
    run.add(
        Certificate(
            "cone_bound_analytic",
            margin=-sr.cone_bound_residual,
            details={"a0": sr.a0, "delta0": sr.delta0, "M": sr.M, "residual": sr.cone_bound_residual, "halvings": sr.halvings},
        )
    )
    maps = [con.f, con.h] + [perturb_map(con.h, cfg["perturb.amplitude"], cfg["seed"] + i) for i in range(cfg["perturb.count"])]
    for m in maps:
        run.add(*cone_certificates(run, m))
    run.add(expanding_certificate(con.h, GridSpec(cfg["grid.certify"])))
    rep = run_growth(run, default_seed_curve(p, cfg["growth.length"]))
    ball = random_balls(1, cfg["cover.radius"], cfg["seed"])[0]
    run.add(ball_growth_run(con.h, ball, p.a0, p, n_iter=cfg["ball.iters"]))
    write_json(run.out / "cones.json", {"search": sr.__dict__ | {"certificates": [c.to_dict() for c in sr.certificates]}, "growth": rep.certificate.to_dict()})


def run_growth(run: Run, seed: SampledCurve, steps: int | None = None, path=None):
    rep = growth_run(run.con.h, seed, run.params.a0, n=steps, params=run.params)
    write_csv(path or run.out / "growth.csv", ["step", "diameter", "ratio", "surgery_count"], rep.rows())
    run.add(rep.certificate)
    return rep


# ---------------------------------------------------------------- distances and the destroyer


def distance_grid(run: Run, n=None):
    """Torus grid refined over the bump support, extended down to cover the destroyer strips."""
    p = run.params
    n = run.config["grid.distance"] if n is None else n
    grid = GridSpec(n)
    box = (p.psi.support[0], p.psi.support[1], p.phi.support[0] - 2 * max(run.config["eta.sweep"]), p.phi.support[1])
    return grid.with_refinement(GridSpec(n, box))


def run_distances(run: Run):
    con = run.con
    g = build_destroyer(run.params)
    run.add(action_certificate([con.f, con.h, g]))
    run.add(near_identity_certificate(con.F, run.params.epsilon, run.config["grid.distance"]))
    rep = ck_distance(con.h, con.f, distance_grid(run))
    write_json(run.out / "distances.json", {"h_vs_f": rep.to_dict()})


def destroyer_sweep(run: Run):
    rows = []
    for eta in sorted(run.config["eta.sweep"], reverse=True):
        g = build_destroyer(run.params, eta)
        rep = ck_distance(g, run.con.h, distance_grid(run))
        rows.append({"eta": eta, "c0": rep.c0, "c1": rep.c1, "c2": rep.c2, "strip_gap": strip_gap_constant(g), "argmax": rep.argmax})
    return rows


def run_destroy(run: Run):
    rows = destroyer_sweep(run)
    c1 = [r["c1"] for r in rows]
    c2 = [r["c2"] for r in rows]
    gap = min(r["strip_gap"] for r in rows)
    mono = min((a - b for a, b in zip(c1, c1[1:])), default=math.inf)
    run.add(Certificate("destroyer_c1_decreasing", margin=mono, details={"eta": [r["eta"] for r in rows], "c1": c1}))
    run.add(Certificate("destroyer_c2_floor", margin=min(c2) - gap, tolerance=gap, details={"c0": gap, "c2": c2}))
    run.manifest.reported["destroyer_c0"] = gap
    write_json(run.out / "destroy.json", {"sweep": rows, "c0": gap})


# ---------------------------------------------------------------- lab


def trap_payload(run: Run, etas, iters, samples):
    p, con = run.params, run.con
    reports = []
    for eta in etas:
        g = build_destroyer(p, eta)
        rep = trap_demo(g, p, n_iter=iters, samples=samples, seed=run.config["seed"])
        c = rep.certificate()
        c.lemma = f"trap[eta={eta!r}]"
        run.add(c)
        reports.append({"eta": eta} | rep.to_dict())
    # the control needs enough iterates for the escape to show
    h_rep = trap_demo(g, p, n_iter=max(iters, 10), samples=samples, seed=run.config["seed"], m=con.h)
    escape = max(h_rep.max_distance[2:], default=0.0)
    run.add(Certificate("h_not_trapped", margin=escape - 1e-3, tolerance=1e-3, details={"max_distance": h_rep.max_distance}))
    first = [r["first_trapped_iterate"] for r in reports]
    payload = {
        "first_trapped_iterate": None if None in first else max(first),
        "runs": reports,
        "h_control": h_rep.to_dict(),
    }
    return payload


def run_trap(run: Run, eta=None, iters=None, samples=None, path=None):
    cfg = run.config
    etas = [eta] if eta is not None else list(cfg["eta.sweep"])
    payload = trap_payload(run, etas, iters or cfg["trap.iters"], samples or cfg["trap.samples"])
    write_json(path or run.out / "trap.json", payload)


def run_cover(run: Run, map_name: str = "h", balls=None, bins=None, path=None):
    cfg = run.config
    bins = bins or cfg["cover.bins"]
    balls = cfg["cover.balls"] if balls is None else balls
    path = path or run.out / "cover.csv"
    pgm_dir = path.parent
    A = build_A()
    m_lin = covering_exponent_linear(1.0 / 64.0, 1.0 / 64.0)
    ref = density_diagnostic(A, sup_ball((0.5, 0.5), 1.0 / 128.0), m_max=max(m_lin + 2, 8), bins=bins, n_points=cfg["cover.points"], seed=cfg["seed"])
    ref.write_pgm(pgm_dir / "cover_A.pgm")
    run.add(Certificate("covering_linear_cross_check", margin=0.5 - abs((ref.first_full if ref.first_full is not None else -99) - m_lin), details={"exact": m_lin, "observed": ref.first_full}))
    m = run.map_named(map_name)
    rows = [ref.to_row()]
    worst = -1
    for i, ball in enumerate(random_balls(balls, cfg["cover.radius"], cfg["seed"])):
        rep = density_diagnostic(m, ball, m_max=cfg["cover.m_max"], bins=bins, n_points=cfg["cover.points"], seed=cfg["seed"] + i)
        rep.write_pgm(pgm_dir / f"cover_{m.name}_{i:02d}.pgm")
        rows.append(rep.to_row())
        worst = max(worst, rep.first_full if rep.first_full is not None else math.inf)
    if balls:
        run.add(Certificate(f"covering[{m.name}]", margin=cfg["cover.m_max"] + 0.5 - worst, tolerance=cfg["cover.m_max"], details={"worst_first_full": worst}))
    g = build_destroyer(run.params)
    x, y, s = sample_strip(g, cfg["cover.points"], cfg["seed"])
    trap = density_diagnostic(g, sup_ball((s["center_x"], 0.25), 1e-3), m_max=cfg["cover.m_max"], bins=bins, points=(x, y))
    trap.write_pgm(pgm_dir / "cover_g_strip.pgm")
    rows.append(trap.to_row() | {"map": "g_strip"})
    run.add(Certificate("destroyer_no_cover", margin=0.1 - max(trap.fractions), details={"fractions": trap.fractions}))
    header = ["map", "center_x", "center_y", "radius", "bins", "n_points", "first_full", "final_fraction", "final_union_fraction"]
    write_csv(path, header, rows)


def run_all(run: Run):
    for step in (run_build, run_critical, run_certify_cones, run_distances, run_destroy, run_trap, run_cover):
        step(run)
