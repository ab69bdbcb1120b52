"""``repellor-lab`` command line: one command per numerical operation."""
from __future__ import annotations

import argparse
import math
import os
import re
import sys
import time

import numpy as np

from . import __version__, parallel
from . import branches as br
from . import correlations as co
from . import exponents as ex
from . import measures as me
from . import thermo as th
from .config import ExperimentConfig, apply_override, load_config, parse_config
from .errors import ConfigError, Inconclusive, RepellorLabError
from .output import heatmap_svg, line_svg, write_csv, write_manifest, write_report
from .systems import TORAL, SystemSpec, apply, distance, eigen_exponents, integer_det, repellor_point, unperturbed_exponents

EXIT_OK, EXIT_ERROR, EXIT_DIAGNOSTIC = 0, 1, 2


class Result:
    def __init__(self):
        self.files = []
        self.report = {}
        self.ok = True

    def csv(self, ctx, name, header, rows):
        write_csv(os.path.join(ctx.out, name), header, rows)
        self.files.append(name)

    def svg(self, ctx, name, writer, *args, **kw):
        if ctx.svg:
            writer(os.path.join(ctx.out, name), *args, **kw)
            self.files.append(name)


class Context:
    def __init__(self, cfg: ExperimentConfig, system: SystemSpec, out: str, svg: bool):
        self.cfg, self.system, self.out, self.svg = cfg, system, out, svg

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def point(self, key="point"):
        s = self.system
        p = self.cfg.get(key)
        if p is None:
            return repellor_point(s, np.full(s.m, 0.3))
        p = np.asarray(p, dtype=float)
        if p.size == 1 and s.q > 1:
            p = np.full(s.q, float(p[0]))
        if p.shape != (s.q,):
            raise ConfigError(f"'{key}' needs {s.q} coordinates")
        return p


def coord_names(q):
    return [f"x{i}" for i in range(q)]


def parse_observable(text: str, dim: int) -> me.TrigObservable:
    """``cos(axis[, freq])``, ``const(c)`` or terms ``k1 k2 : coef ; ...``."""
    s = text.strip()
    m = re.fullmatch(r"cos\(\s*(\d+)\s*(?:,\s*(-?\d+)\s*)?\)", s)
    if m:
        axis, freq = int(m.group(1)), int(m.group(2) or 1)
        if axis >= dim:
            raise ConfigError(f"observable axis {axis} out of range for dimension {dim}")
        return me.TrigObservable.cosine(dim, axis, freq)
    m = re.fullmatch(r"const\(\s*([-+0-9.eE]+)\s*\)", s)
    if m:
        return me.TrigObservable.constant(dim, float(m.group(1)))
    freqs, coefs = [], []
    try:
        for term in filter(None, (t.strip() for t in s.split(";"))):
            k, c = term.split(":")
            k = [int(v) for v in k.replace(",", " ").split()]
            if len(k) != dim:
                raise ValueError(f"frequency {k} has the wrong dimension")
            freqs.append(k)
            coefs.append(complex(c.strip().replace("i", "j")))
        return me.TrigObservable(freqs, coefs)
    except ValueError as exc:
        raise ConfigError(f"cannot parse observable {text!r}: {exc}") from None


def centres(system: SystemSpec, k: int, seed: int):
    rng = parallel.stream(seed, 7)
    if system.variant == TORAL:
        return rng.random((k, system.m))
    out = []
    for _ in range(k):
        z = repellor_point(system, rng.random(2), rng.random())
        out.append(br.random_backward_orbit(system, z, 20, rng)[0])
    return np.array(out)


# -- commands --------------------------------------------------------------------

def cmd_system_info(ctx: Context, res: Result):
    s = ctx.system
    rows = [
        ("name", s.name or "custom"), ("variant", s.variant),
        ("matrix", "; ".join(" ".join(str(v) for v in r) for r in s.matrix)),
        ("det", integer_det(s.A)), ("degree", s.degree), ("phase_dim", s.q),
        ("epsilon", s.epsilon), ("delta", s.delta),
    ]
    rows += [(f"eigen_exponent_{i}", v) for i, v in enumerate(eigen_exponents(s))]
    rows += [(f"reference_exponent_{i}", v) for i, v in enumerate(unperturbed_exponents(s))]
    res.csv(ctx, "system.csv", ["key", "value"], rows)
    res.report = dict(rows)


def cmd_preimages(ctx: Context, res: Result):
    s = ctx.system
    x = ctx.point()
    pre = br.preimages(s, x)
    resid = distance(s, apply(s, pre), x)
    res.csv(ctx, "preimages.csv", ["branch", *coord_names(s.q), "residual"],
            [(i, *p, r) for i, (p, r) in enumerate(zip(pre, resid))])
    res.report = {"point": " ".join(map(repr, x.tolist())), "count": len(pre), "max_residual": float(resid.max())}


def cmd_tree(ctx: Context, res: Result):
    s = ctx.system
    n = ctx.cfg.get("depth", 4)
    tree = br.preimage_tree(s, ctx.point(), n, v_margin=ctx.cfg.get("v_margin"))
    rows = []
    for ell, lv in enumerate(tree.levels):
        for i in range(len(lv)):
            rows.append((ell, i, lv.parent[i], lv.label[i], *lv.points[i]))
    res.csv(ctx, "tree.csv", ["level", "index", "parent", "label", *coord_names(s.q)], rows)
    res.report = {"depth": n, "counts": " ".join(map(str, tree.counts)),
                  "consistency_error": br.tree_consistency_error(tree)}


def _build_cloud(ctx: Context, depth: int, kind: str = "average"):
    s = ctx.system
    tree = br.preimage_tree(s, ctx.point(), depth, v_margin=ctx.cfg.get("v_margin"))
    if kind == "leaves":
        return me.leaf_cloud(tree, depth)
    return me.cloud_from_tree(tree, depth, include_level_n=ctx.cfg.get("include_level_n", False))


def cmd_measure(ctx: Context, res: Result):
    s = ctx.system
    n, K = ctx.cfg.get("depth", 6), ctx.cfg.get("K", 3)
    z = ctx.point()
    cloud = _build_cloud(ctx, n)
    rep = me.fourier_discrepancy(cloud, me.HAAR, K)
    res.csv(ctx, "atoms.csv", [*coord_names(s.q), "weight"], [(*p, w) for p, w in zip(cloud.points, cloud.weights)])
    dim = s.fourier_dim
    header = [f"k{i}" for i in range(dim)] + ["re", "im"]
    rows = []
    oracle = s.variant == TORAL
    if oracle:
        header += ["oracle_re", "oracle_im"]
    worst = 0.0
    for k, c in rep.coefficients.items():
        row = [*k, c.real, c.imag]
        if oracle:
            o = me.exact_empirical_coefficient(s.A, z, k, n, ctx.cfg.get("include_level_n", False))
            worst = max(worst, abs(o - c))
            row += [o.real, o.imag]
        rows.append(row)
    res.csv(ctx, "fourier.csv", header, rows)
    res.report = {"depth": n, "K": K, "atoms": len(cloud), "total_mass": cloud.total,
                  "discrepancy_vs_haar": rep.discrepancy}
    if oracle:
        res.report["max_oracle_gap"] = worst
    grid = me.histogram(cloud, ctx.cfg.get("bins", 32))
    while grid.ndim > 2:
        grid = grid.sum(axis=-1)
    if grid.ndim == 1:
        grid = grid[None, :]
    res.svg(ctx, "measure.svg", heatmap_svg, grid.T, title=f"mu_{n} histogram")


def cmd_converge(ctx: Context, res: Result):
    s = ctx.system
    default = list(range(2, 11)) if s.degree ** 12 > br.DEFAULT_NODE_BUDGET else list(range(2, 13))
    n_list = ctx.cfg.get("n_list", tuple(default))
    rows = me.convergence_experiment(s, n_list, ctx.cfg.get("num_z", 20), ctx.cfg.get("K", 3), ctx.seed,
                                     v_margin=ctx.cfg.get("v_margin"))
    res.csv(ctx, "converge.csv", ["n", "mean_discrepancy", "min_discrepancy", "max_discrepancy", "num_z"],
            [(r.n, r.mean_discrepancy, r.min_discrepancy, r.max_discrepancy, r.num_z) for r in rows])
    tail = [r.mean_discrepancy for r in rows if r.n >= 4]
    mono = all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))
    res.ok = mono
    res.report = {"n_values": " ".join(str(r.n) for r in rows), "final_mean": rows[-1].mean_discrepancy,
                  "monotone_beyond_4": mono}
    res.svg(ctx, "converge.svg", line_svg, [r.n for r in rows], {"mean": [r.mean_discrepancy for r in rows]},
            title="Fourier discrepancy", logy=True)


def cmd_pressure(ctx: Context, res: Result):
    s = ctx.system
    pe = th.pressure_estimate(s, ctx.cfg.get("potential", "stable_minus_log_d"), ctx.cfg.get("epsilon_ball", 0.05),
                              ctx.cfg.get("n_range", (2, 8)), ctx.cfg.get("grid_step"), ctx.seed,
                              ctx.cfg.get("method", "window"), ctx.cfg.get("num_windows", 16))
    res.csv(ctx, "pressure.csv", ["n", "P_n", "log_sum", "cardinality", "count"],
            zip(pe.n_values, pe.P, pe.log_sums, pe.cardinalities, pe.counts))
    res.report = {"potential": pe.potential, "epsilon": pe.epsilon, "method": pe.method,
                  "extrapolated_pressure": pe.extrapolated, "intercept": pe.intercept}
    res.svg(ctx, "pressure.svg", line_svg, pe.n_values, {"P_n": pe.P}, title="P_n")


def cmd_lyapunov(ctx: Context, res: Result):
    s = ctx.system
    x0 = ctx.point("x0") if ctx.cfg.get("x0") is not None else ctx.point()
    sp = ex.lyapunov_spectrum(s, x0, ctx.cfg.get("n", 10000), ctx.seed)
    res.csv(ctx, "lyapunov.csv", ["index", "exponent", "multiplicity"],
            [(i, lam, m) for i, (lam, m) in enumerate(sp.exponents)])
    res.report = {"n": sp.n, "raw": " ".join(repr(float(v)) for v in sp.raw), "sum": sp.total,
                  "negative_sum": sp.negative_sum(), "min_spacing": sp.min_spacing}
    if s.variant == TORAL:
        res.report["max_eigen_gap"] = float(np.max(np.abs(sp.raw - eigen_exponents(s))))


def cmd_pesin_check(ctx: Context, res: Result):
    s = ctx.system
    cloud = _build_cloud(ctx, ctx.cfg.get("depth", 10))
    sp = ex.lyapunov_spectrum(s, ctx.point(), ctx.cfg.get("n", 10000), ctx.seed)
    pe = None
    if ctx.cfg.get("cross_check", s.variant == TORAL):
        pe = th.pressure_estimate(s, "stable_minus_log_d", ctx.cfg.get("epsilon_ball", 0.05),
                                  ctx.cfg.get("n_range", (2, 8)), seed=ctx.seed,
                                  num_windows=ctx.cfg.get("num_windows", 16))
    r = ex.pesin_check(s, cloud, sp, pe)
    rows = [("sum_negative", r.sum_negative), ("integral_phi_s", r.integral_phi_s), ("log_d", r.log_d),
            ("entropy_estimate", r.entropy_estimate), ("residual_1", r.residual_1),
            ("strict_inequality", r.strict_inequality)]
    if pe is not None:
        rows += [("pressure_cross_check", r.pressure_cross_check), ("residual_2", r.residual_2)]
    res.csv(ctx, "pesin.csv", ["quantity", "value"], rows)
    res.report = dict(rows)


def cmd_jacobian_check(ctx: Context, res: Result):
    s = ctx.system
    cloud = _build_cloud(ctx, ctx.cfg.get("depth", 12), ctx.cfg.get("cloud", "leaves"))
    jr = ex.jacobian_check(s, cloud, ctx.cfg.get("num_boxes", 50), ctx.cfg.get("box_size", 0.05), ctx.seed)
    res.csv(ctx, "jacobian.csv", ["box", "ratio"], enumerate(jr.ratios))
    res.report = {"degree": jr.degree, "median_ratio": jr.median, "mean_ratio": jr.mean,
                  "boxes_used": jr.num_used, "boxes_empty": jr.num_empty, "boxes_flagged": jr.num_flagged,
                  "median_relative_error": jr.median_rel_error}


def cmd_correlations(ctx: Context, res: Result):
    s = ctx.system
    dim = s.fourier_dim
    default_obs = "cos(0)" if s.variant == TORAL else "cos(1)"
    phi = parse_observable(ctx.cfg.get("phi", default_obs), dim)
    psi = parse_observable(ctx.cfg.get("psi", ctx.cfg.get("phi", default_obs)), dim)
    kind = ctx.cfg.get("sampler", "haar" if s.variant == TORAL else "cloud")
    if kind == "cloud":
        sampler = me.mixture_cloud(s, ctx.cfg.get("depth", 6), ctx.cfg.get("num_roots", 100), ctx.seed,
                                   v_margin=ctx.cfg.get("v_margin")).merged()
    else:
        sampler = me.HAAR
    n_max = ctx.cfg.get("n_max", 10)
    seq = co.correlation_sequence(s, sampler, phi, psi, n_max, ctx.cfg.get("num_samples", 100000), ctx.seed)
    vals = np.asarray(seq.values)
    cplx = np.iscomplexobj(vals)
    header = ["n", "C_n_re", "C_n_im", "stderr"] if cplx else ["n", "C_n", "stderr"]
    oracle = s.variant == TORAL and kind == "haar"
    if oracle:
        header.append("oracle")
    rows = []
    for n in range(n_max + 1):
        row = [n, vals[n].real, vals[n].imag] if cplx else [n, vals[n]]
        row.append(seq.stderr[n])
        if oracle:
            row.append(co.toral_correlation_oracle(s.A, phi, psi, n).real)
        rows.append(row)
    res.csv(ctx, "correlations.csv", header, rows)
    floor = seq.default_noise_floor()
    res.report = {"sampler": seq.sampler, "effective_samples": seq.effective_samples, "noise_floor": floor,
                  "below_noise_floor": co.below_noise_floor(seq)}
    try:
        fit = co.decay_rate_fit(seq)
        res.report["fit"] = {"rate": fit.rate, "prefactor": fit.prefactor, "goodness": fit.goodness,
                             "points": " ".join(map(str, fit.indices))}
    except Inconclusive as exc:
        res.report["fit"] = {"status": f"Inconclusive: {exc}"}
    res.svg(ctx, "correlations.svg", line_svg, np.arange(n_max + 1), {"|C_n|": np.abs(vals)},
            title="correlations", logy=True)


def cmd_repellor_check(ctx: Context, res: Result):
    rep = br.check_repellor(ctx.system, ctx.cfg.get("grid_step", 0.05))
    res.csv(ctx, "repellor.csv", ["preimages_in_U", "num_points"], sorted(rep.count_values.items()))
    res.ok = rep.ok
    res.report = {"num_points": rep.num_points, "fraction_with_preimage": rep.fraction_with_preimage,
                  "count_constant": rep.count_constant, "min_branch_separation": rep.min_separation}


def _span(vals):
    v = np.asarray([x for x in vals if np.isfinite(x) and x > 0])
    return float(v.max() / v.min()) if len(v) else math.nan


def cmd_tube_volume(ctx: Context, res: Result):
    s = ctx.system
    lo, hi = ctx.cfg.get("n_range", (1, 6))
    eps = ctx.cfg.get("epsilon_ball", 0.1)
    N = ctx.cfg.get("num_samples", 100000)
    rows = []
    for c, y in enumerate(centres(s, ctx.cfg.get("num_centers", 10), ctx.seed)):
        for n in range(lo, hi + 1):
            tv = th.tubular_volume(s, y, n, eps, N, ctx.seed + 1000 * c + n)
            rows.append((c, n, tv.volume, tv.stderr, tv.hits, tv.reference, tv.ratio))
    res.csv(ctx, "tube.csv", ["center", "n", "volume", "stderr", "hits", "reference", "ratio"], rows)
    res.report = {"epsilon": eps, "num_samples": N, "ratio_span": _span([r[-1] for r in rows])}


def cmd_ball_measure(ctx: Context, res: Result):
    s = ctx.system
    lo, hi = ctx.cfg.get("n_range", (2, 8))
    eps = ctx.cfg.get("epsilon_ball", 0.1)
    N = ctx.cfg.get("num_samples", 200000)
    kind = ctx.cfg.get("sampler", "haar")
    sampler = _build_cloud(ctx, ctx.cfg.get("depth", 10)) if kind == "cloud" else me.HAAR
    rows = []
    for c, y in enumerate(centres(s, ctx.cfg.get("num_centers", 10), ctx.seed)):
        for n in range(lo, hi + 1):
            bm = th.bowen_ball_measure(s, sampler, th.BowenBall(y, n, eps), N, ctx.seed + 1000 * c + n)
            rows.append((c, n, bm.estimate, bm.stderr, bm.hits, bm.reference, bm.ratio, bm.zero_hits))
    res.csv(ctx, "ball.csv", ["center", "n", "estimate", "stderr", "hits", "reference", "ratio", "zero_hits"], rows)
    res.report = {"epsilon": eps, "sampler": kind, "num_samples": N,
                  "zero_hit_balls": sum(r[-1] for r in rows), "ratio_span": _span([r[-2] for r in rows])}


COMMANDS = {
    "system-info": cmd_system_info,
    "preimages": cmd_preimages,
    "tree": cmd_tree,
    "measure": cmd_measure,
    "converge": cmd_converge,
    "pressure": cmd_pressure,
    "lyapunov": cmd_lyapunov,
    "pesin-check": cmd_pesin_check,
    "jacobian-check": cmd_jacobian_check,
    "correlations": cmd_correlations,
    "repellor-check": cmd_repellor_check,
    "tube-volume": cmd_tube_volume,
    "ball-measure": cmd_ball_measure,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repellor-lab", description="Numerical experiments on toral and skew-product repellors.")
    p.add_argument("--version", action="version", version=f"repellor-lab {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="INI file with [system], [experiment], [run]")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", help="64-bit unsigned seed")
    p.add_argument("--threads", help="worker threads")
    p.add_argument("--deterministic", action="store_true", help="record the run as deterministic")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        for a in args.set:
            apply_override(cfg, a)
        for key in ("out", "seed", "threads"):
            v = getattr(args, key)
            if v is not None:
                apply_override(cfg, f"run.{key}={v}")
        if args.deterministic:
            apply_override(cfg, "run.deterministic=true")
        assert parse_config(cfg.to_ini()) == cfg
        system = cfg.build_system()
        out = cfg.run["out"]
        os.makedirs(out, exist_ok=True)
        parallel.set_threads(cfg.run["threads"])
        ctx = Context(cfg, system, out, args.svg)
        res = Result()
        t0 = time.perf_counter()
        COMMANDS[args.command](ctx, res)
        wall = time.perf_counter() - t0
        header = {"command": args.command, "system": system.name or "custom", "seed": cfg.seed,
                  "config_hash": cfg.digest(), "status": "ok" if res.ok else "diagnostic failure"}
        write_report(os.path.join(out, "report.txt"), f"repellor-lab {args.command}", {**header, **res.report})
        write_manifest(out, cfg.to_ini(), cfg.digest(), cfg.seed, __version__, args.command, wall,
                       res.files + ["report.txt"])
    except RepellorLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: wrote {len(res.files)} file(s) to {out}" + ("" if res.ok else " (diagnostic failure)"))
    return EXIT_OK if res.ok else EXIT_DIAGNOSTIC


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
