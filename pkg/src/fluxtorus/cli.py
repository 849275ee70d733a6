"""Command-line driver.

Every command loads a model config (or a built-in model name), runs one
experiment, writes CSV/JSON artifacts plus ``manifest.json`` into ``--out`` and
exits with

* 0 when every configured check passed,
* 2 when a check failed (the failures are listed in ``failures.json``),
* 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DenseLimitError, FluxTorusError, GeometryError, ModelSpecError
from .flux import BlockFamily, FluxFamily, FluxPath, SectorFamily, gauge_distribute
from .models import MODEL_NAMES, ModelSpec, build_model, load_config
from .operators import SectorBasis, materialize
from .parallel import default_threads
from .report import GAP_HEADER, SCALING_HEADER, RunManifest, dumps, write_csv, write_json

COMMANDS = ("gap-scan", "curvature-scan", "chern", "constancy", "gauge-check", "lr-cone",
            "qa-check", "corner-check", "local-approximant", "scaling")

TOLERANCES = {
    "gap_min": 1e-3,
    "identity": 1e-6,  # ||d P - i [K, P]||
    "quadrature": 1e-7,  # eigenbasis vs time-quadrature generator
    "flow": 1e-4,  # transported projector
    "gauge_residual": 1e-12,
    "gauge_ratio": 2.0,  # max/min of L * max ||W(X)||
    "cone_ratio": 0.2,  # norm(d far) / norm(d near) at t_fix
    "cone_time": 0.5,
    "corner": 0.5,
    "covariance": 1e-8,
    "method_fraction": 0.1,  # method error bar / spread
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default=None,
                        help=f"config file (.toml/.json) or a built-in name: {', '.join(MODEL_NAMES)}")
    common.add_argument("--L", default=None, help="torus side(s): 4, 4x3 or a list 8,12,16")
    common.add_argument("--grid", type=int, default=None, help="flux grid size N")
    common.add_argument("--sector", default=None, help="charge sector Q (or Q1,Q2 for a direct sum)")
    common.add_argument("--out", default="fluxtorus-out", help="output directory")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help=f"override a tolerance ({', '.join(TOLERANCES)})")
    common.add_argument("--threads", type=int, default=None,
                        help="worker count (default: FLUXTORUS_THREADS or 1)")
    common.add_argument("--backend", choices=("many-body", "free-fermion"), default="many-body")
    common.add_argument("--phi", default=None, help="flux point phi1,phi2")
    common.add_argument("--method", choices=("resolvent", "kubo"), default="resolvent")

    p = _Parser(prog="fluxtorus", description="Flux-threading experiments on small tori.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


# --------------------------------------------------------------------------
# setup helpers


def resolve_spec(model: str | None, command: str) -> ModelSpec:
    if model is None:
        if command == "scaling":
            return ModelSpec("hofstadter-fermion", p=1, q=4)
        raise UsageError("--model is required")
    path = Path(model)
    if path.suffix.lower() in (".toml", ".json") or path.exists():
        if not path.exists():
            raise UsageError(f"config file {model} not found")
        return load_config(path)
    if model in MODEL_NAMES:
        return ModelSpec(model)
    raise UsageError(f"unknown model {model!r}")


def parse_sizes(text, spec: ModelSpec) -> list:
    if text is None:
        if spec.L is None:
            raise UsageError("no torus size: set L in the config or pass --L")
        return [spec.L]
    out = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        out.append(tuple(int(v) for v in tok.split("x")) if "x" in tok else int(tok))
    return out


def geometry_for(spec: ModelSpec, L):
    g = spec.geometry(L)
    spec.validate_on(g)
    return g


def default_sectors(model) -> list[int]:
    spec, n = model.spec, model.n_sites
    if spec.name == "trivial-insulator":
        return [0, 1]
    if spec.name == "xxz-spin":
        return [n // 2]
    if spec.p:
        return [int(spec.alpha * n)] if (spec.alpha * n).denominator == 1 else [n // 4]
    return [n // 4]


def sector_family(fam: FluxFamily, sectors, kind: str = "twist"):
    fams = [SectorFamily(fam, SectorBasis(fam.charges, Q), kind) for Q in sectors]
    return fams[0] if len(fams) == 1 else BlockFamily(fams)


def parse_tols(items) -> dict:
    tol = dict(TOLERANCES)
    for item in items:
        if "=" not in item:
            raise UsageError(f"--tol expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        if k not in tol:
            raise UsageError(f"unknown tolerance {k!r}")
        tol[k] = float(v)
    return tol


class Context:
    def __init__(self, args):
        self.args = args
        self.spec = resolve_spec(args.model, args.command)
        self.sizes = parse_sizes(args.L, self.spec)
        self.tol = parse_tols(args.tol)
        self.threads = args.threads if args.threads is not None else default_threads()
        self.out = Path(args.out)
        self.phi = np.array(_floats(args.phi)) if args.phi else None
        if self.phi is not None and self.phi.shape != (2,):
            raise UsageError("--phi expects two numbers")
        self.grid = args.grid
        g = geometry_for(self.spec, self.sizes[0])
        self.model = build_model(self.spec, g)
        self.sectors = _ints(args.sector) if args.sector else default_sectors(self.model)
        config = {
            "model": self.spec.to_json(), "L": [list(s) if isinstance(s, tuple) else s for s in self.sizes],
            "grid": self.grid, "sector": self.sectors, "tol": self.tol, "backend": args.backend,
            "phi": None if self.phi is None else self.phi.tolist(), "method": args.method,
        }
        self.manifest = RunManifest(args.command, config, self.spec.to_json(), g.flags(), __version__)
        if not g.conforming:
            self.manifest.warnings.append(f"geometry {g.shape} is not a square torus with even side")

    @property
    def geometry(self):
        return self.model.geometry

    def artifact(self, name: str) -> Path:
        self.manifest.artifacts.append(name)
        return self.out / name

    def family(self, kind: str = "twist"):
        return sector_family(FluxFamily(self.model), self.sectors, kind)

    def single_sector(self) -> SectorBasis:
        return SectorBasis(self.model.charges, self.sectors[0])


# --------------------------------------------------------------------------
# commands


def cmd_gap_scan(ctx: Context) -> dict:
    from .spectral import gap_scan

    with ctx.manifest.timer("gap_scan"):
        scan = gap_scan(ctx.family(), ctx.grid or 8, ctx.tol["gap_min"], ctx.threads)
    rows = [(p[0], p[1], gp) for p, gp in zip(scan.phis.reshape(-1, 2), scan.gaps.ravel())]
    write_csv(ctx.artifact("gaps.csv"), GAP_HEADER, rows)
    ctx.manifest.check("min_gap", scan.min_gap, ctx.tol["gap_min"], ">")
    return {"min_gap": scan.min_gap, "flagged": [list(f) for f in scan.flagged], "grid": scan.gaps.shape[0]}


def _curvature_map(ctx: Context, N: int):
    from .curvature import curvature_map
    from .quasiadiabatic import EigenSystem, make_weight

    if ctx.args.backend == "free-fermion":
        from .freefermion import SingleParticleFamily, sp_curvature_map

        return sp_curvature_map(SingleParticleFamily(ctx.model), ctx.sectors[0], N, threads=ctx.threads)
    fam = ctx.family()
    W = None
    if ctx.args.method == "kubo":
        W = make_weight(0.9 * EigenSystem.of(fam.matrix(np.zeros(2))).gap)
    return curvature_map(fam, N, ctx.args.method, W, threads=ctx.threads)


def _chern(ctx: Context, N: int):
    if ctx.args.backend == "free-fermion":
        from .freefermion import SingleParticleFamily, sp_chern

        return sp_chern(SingleParticleFamily(ctx.model), ctx.sectors[0], N, ctx.threads)
    from .curvature import chern_fhs

    return chern_fhs(ctx.family(), N, threads=ctx.threads)


def cmd_curvature_scan(ctx: Context) -> dict:
    with ctx.manifest.timer("curvature_map"):
        cmap = _curvature_map(ctx, ctx.grid or 8)
    cmap.write_csv(ctx.artifact("curvature.csv"))
    ctx.manifest.check("min_gap", float(cmap.gap.min()), ctx.tol["gap_min"], ">")
    return cmap.summary() | {"meta": cmap.meta}


def cmd_chern(ctx: Context) -> dict:
    with ctx.manifest.timer("chern"):
        res = _chern(ctx, ctx.grid or 8)
    ctx.manifest.require("admissible", res.admissible)
    return res.to_json()


def cmd_constancy(ctx: Context) -> dict:
    from .curvature import constancy_spread, quantization_error

    N = ctx.grid or 8
    rows = []
    for L in ctx.sizes:
        sub = _sub_context(ctx, L)
        with ctx.manifest.timer(f"L={L}"):
            cmap = _curvature_map(sub, N)
            ch = _chern(sub, N)
        q = quantization_error(cmap)
        row = {"L": L, "spread": constancy_spread(cmap), "max_qerror": q.max_error, "n0": q.n0,
               "chern": ch.n, "method_error": cmap.meta.get("method_error")}
        rows.append(row)
        ctx.manifest.require(f"n0_constant[L={L}]", q.n0 is not None, f"offending points: {q.offending[:5]}")
        ctx.manifest.require(f"n0_equals_chern[L={L}]", q.n0 == ch.n)
        if row["method_error"] is not None and row["spread"] > 0:
            ctx.manifest.check(f"method_error[L={L}]", row["method_error"] / row["spread"],
                               ctx.tol["method_fraction"], "<")
    if len(rows) > 1:
        sp_ = [r["spread"] for r in rows]
        ctx.manifest.require("spread_decreasing", all(b < a for a, b in zip(sp_, sp_[1:])))
    return {"rows": rows, "grid": N}


def _sub_context(ctx: Context, L) -> Context:
    sub = object.__new__(Context)
    sub.__dict__.update(ctx.__dict__)
    sub.model = build_model(ctx.spec, geometry_for(ctx.spec, L))
    sub.sectors = _ints(ctx.args.sector) if ctx.args.sector else default_sectors(sub.model)
    return sub


def cmd_gauge_check(ctx: Context) -> dict:
    sizes = ctx.sizes if ctx.args.L else [4, 6, 8]
    phi = ctx.phi if ctx.phi is not None else np.array([0.7, 2.1])
    rows = []
    for L in sizes:
        model = build_model(ctx.spec, geometry_for(ctx.spec, L))
        fam = FluxFamily(model)
        with ctx.manifest.timer(f"L={L}"):
            rem = gauge_distribute(fam, phi, tol=np.inf)
        side = max(model.geometry.shape)
        rows.append({"L": L, "residual": rem.residual, "max_norm": rem.max_term_norm,
                     "max_norm_times_L": rem.max_term_norm * side, "max_diam": rem.max_diam(model.geometry)})
        ctx.manifest.check(f"residual[L={L}]", rem.residual, ctx.tol["gauge_residual"], "<")
        ctx.manifest.check(f"max_diam[L={L}]", rem.max_diam(model.geometry), model.R, "<=")
    scaled = [r["max_norm_times_L"] for r in rows]
    if len(rows) > 1:
        ctx.manifest.check("norm_times_L_ratio", max(scaled) / min(scaled), ctx.tol["gauge_ratio"], "<=")
    return {"phi": phi.tolist(), "rows": rows}


def cmd_lr_cone(ctx: Context) -> dict:
    from .locality import cone_along_axis, geometric_times

    g = ctx.geometry
    basis = ctx.single_sector()
    H = materialize(ctx.model.H, basis).dense()
    with ctx.manifest.timer("cone"):
        prof = cone_along_axis(H, basis, g, times=geometric_times())
    prof.write_csv(ctx.artifact("cone.csv"))
    t_fix = ctx.tol["cone_time"]
    d_far = g.L1 // 2
    d_near = max(1, d_far // 2)
    ratio = prof.norm_at(t_fix, d_far) / prof.norm_at(t_fix, d_near)
    ctx.manifest.check(f"ratio_d{d_far}_over_d{d_near}", ratio, ctx.tol["cone_ratio"], "<")
    ctx.manifest.check("slope_at_t_fix", prof.decay_slope(t_fix), 0.0, "<")
    ctx.manifest.require("below_trivial_bound", prof.within_bound())
    fit = prof.fit.to_json() | {"samples_inside_cone": prof.n_inside(), "samples": len(prof.samples)}
    write_json(ctx.artifact("cone_fit.json"), fit)
    return {"fit": fit, "ratio": ratio, "t_fix": t_fix, "d": [d_near, d_far]}


def cmd_qa_check(ctx: Context) -> dict:
    from .quasiadiabatic import EigenSystem, generator, generator_identity_error, make_weight, spectral_flow

    phi = ctx.phi if ctx.phi is not None else np.array([0.7, 2.1])
    fam = FluxFamily(ctx.model)
    sf = SectorFamily(fam, ctx.single_sector())
    path = FluxPath.antitwist_to_twist(sf, phi)
    eig = EigenSystem.of(sf.matrix(phi))
    gaps = [eig.gap] + [EigenSystem.of(path.matrix(s)).gap for s in (0.0, 0.5)]
    W = make_weight(0.9 * min(gaps))
    out = {"phi": phi.tolist(), "dim": sf.dim, "gamma": W.gamma}
    with ctx.manifest.timer("identity"):
        for j in (1, 2):
            e = generator_identity_error(sf, phi, j, W)
            out[f"identity_{j}"] = e
            ctx.manifest.check(f"identity[j={j}]", e, ctx.tol["identity"], "<")
    if sf.dim <= 200:
        with ctx.manifest.timer("quadrature"):
            dH = sf.dmatrix(phi, 1)
            Ke = generator(None, dH, W, "eigen", eig)
            Kq = generator(None, dH, W, "quadrature", eig)
            out["quadrature"] = float(np.abs(Ke - Kq).max())
        ctx.manifest.check("quadrature", out["quadrature"], ctx.tol["quadrature"], "<")
    else:
        ctx.manifest.warnings.append("time quadrature skipped above dimension 200")
    method = "rk45" if sf.dim <= 400 else "rk4"
    with ctx.manifest.timer("flow"):
        flow = spectral_flow(path, W, method=method, n_steps=8)
    out["flow_error"] = flow.max_error
    out["flow_method"] = method
    ctx.manifest.check("flow", flow.max_error, ctx.tol["flow"], "<")
    return out


def cmd_corner_check(ctx: Context) -> dict:
    from .quasiadiabatic import corner_check

    phi = ctx.phi if ctx.phi is not None else np.zeros(2)
    with ctx.manifest.timer("corner"):
        rep = corner_check(FluxFamily(ctx.model), ctx.single_sector(), phi)
    ctx.manifest.check("corner_error", rep.corner_error, ctx.tol["corner"], "<")
    ctx.manifest.check("covariance", rep.covariance, ctx.tol["covariance"], "<")
    return rep.to_json()


def cmd_local_approximant(ctx: Context) -> dict:
    from .quasiadiabatic import local_approximant

    phi = ctx.phi if ctx.phi is not None else np.array([0.7, 2.1])
    with ctx.manifest.timer("approximant"):
        rows, data = local_approximant(FluxFamily(ctx.model), phi)
    errs = [r.error for r in rows]
    ctx.manifest.require("non_increasing", all(b <= a + 1e-12 for a, b in zip(errs, errs[1:])))
    return {"phi": phi.tolist(), "kappa": data.kappa, "gap": data.gap, "sector": data.sector,
            "rows": [r.__dict__ for r in rows]}


def cmd_scaling(ctx: Context) -> dict:
    from .freefermion import sp_scaling

    if ctx.args.backend != "free-fermion":
        raise UsageError("scaling needs --backend free-fermion (many-body sizes are out of reach)")
    spec = ctx.spec
    sizes = ctx.sizes if ctx.args.L else [8, 12, 16]
    with ctx.manifest.timer("scaling"):
        rep = sp_scaling(sizes, spec.p, spec.q, float(spec.alpha), ctx.grid or 24, spec.t, ctx.threads)
    write_csv(ctx.artifact("scaling.csv"), SCALING_HEADER, [(r.L, r.chern, r.spread, r.qerror) for r in rep.rows])
    q = rep.column("qerror")
    s = rep.column("spread")
    ch = rep.column("chern")
    ctx.manifest.require("chern_stable_N_2N", all(r.chern == r.chern_2N for r in rep.rows))
    ctx.manifest.require("chern_equals_n0", all(r.chern == r.n0 for r in rep.rows))
    ctx.manifest.require("chern_constant_in_L", len(set(ch)) == 1)
    ctx.manifest.require("qerror_decreasing", all(b < a for a, b in zip(q, q[1:])))
    ctx.manifest.require("spread_decreasing", all(b < a for a, b in zip(s, s[1:])))
    for r in rep.rows:
        ctx.manifest.check(f"method_error[L={r.L}]", r.method_error / r.spread, ctx.tol["method_fraction"], "<")
    return rep.to_json()


HANDLERS = {
    "gap-scan": cmd_gap_scan,
    "curvature-scan": cmd_curvature_scan,
    "chern": cmd_chern,
    "constancy": cmd_constancy,
    "gauge-check": cmd_gauge_check,
    "lr-cone": cmd_lr_cone,
    "qa-check": cmd_qa_check,
    "corner-check": cmd_corner_check,
    "local-approximant": cmd_local_approximant,
    "scaling": cmd_scaling,
}

CONFIG_ERRORS = (UsageError, ModelSpecError, GeometryError, DenseLimitError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
    except CONFIG_ERRORS as exc:
        print(f"fluxtorus: configuration error: {exc}", file=sys.stderr)
        return 1
    ctx.out.mkdir(parents=True, exist_ok=True)
    name = args.command.replace("-", "_")
    try:
        summary = HANDLERS[args.command](ctx)
    except CONFIG_ERRORS as exc:
        print(f"fluxtorus: configuration error: {exc}", file=sys.stderr)
        return 1
    except FluxTorusError as exc:
        ctx.manifest.require(type(exc).__name__, False, str(exc))
        summary = {"error": str(exc)}
    write_json(ctx.artifact(f"{name}.json"), summary)
    ctx.manifest.write(ctx.out)
    print(dumps(summary))
    if not ctx.manifest.passed:
        write_json(ctx.out / "failures.json", ctx.manifest.failures)
        print(json.dumps({"failures": ctx.manifest.failures}), file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())
