"""Command-line entry point: solve, flow, verify, inequalities, report.

Exit status: 0 when every applicable check passes, 1 when a check fails,
2 on a configuration error (nothing is written), 3 when a numerical
solver did not converge. Progress goes to standard error; reports go to
``--out`` (standard output by default).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import json
import numpy as np
from scipy import special

from . import __version__
from . import grid_ot as G
from . import heatflow as H
from . import inequalities as I
from . import measures as M
from . import specfile
from . import transport1d as T1
from . import transport_radial as R
from . import verify as V
from .report import VerificationReport, make_entry, status_entry

DEFAULT_SEED = 20240601
INEQUALITY_CHECKS = ("correlation", "b_inequality", "harge", "strong_poincare",
                     "bakry_ledoux", "concentration", "nu_profile")
CALIBRATION_SIGMA = 0.5
CALIBRATION_TOL = 0.03


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    source_spec: str | None = None
    target_spec: str | None = None
    grid_n: int = 64
    eps_start: float = 1.0
    eps_end: float = 5e-3
    tol: float = G.DEFAULT_TOL
    max_iter: int = G.DEFAULT_MAX_ITER
    t_max: float = H.T_MAX
    dt: float = H.DT
    gh_order: int = H.GH_ORDER
    seeds: int = 201
    n_samples: int = 1_000_000
    n_pairs: int = 100_000
    r_max: float = 4.0
    seed: int = DEFAULT_SEED
    checks: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    jobs: int = 1
    output: str = "-"
    format: str = "json"
    map_out: str | None = None

    def validate(self) -> None:
        rules = [
            (8 <= self.grid_n <= 512, "--grid-n must lie in [8, 512]"),
            (0 < self.eps_end < self.eps_start <= 100, "need 0 < --eps-end < --eps-start <= 100"),
            (0 < self.tol < 1, "--tol must lie in (0, 1)"),
            (self.max_iter >= 1, "--max-iter must be positive"),
            (0 < self.t_max <= 100, "--t-max must lie in (0, 100]"),
            (0 < self.dt <= 1, "--dt must lie in (0, 1]"),
            (8 <= self.gh_order <= 200, "--gh-order must lie in [8, 200]"),
            (5 <= self.seeds <= 5000, "--seeds must lie in [5, 5000]"),
            (self.n_samples >= 1000, "--n-samples must be at least 1000"),
            (self.n_pairs >= 1, "--n-pairs must be positive"),
            (self.r_max > 0, "--r-max must be positive"),
            (0 <= self.seed < 2**64, "--seed must be a 64-bit unsigned integer"),
            (self.jobs >= 1, "--jobs must be positive"),
            (self.format in ("json", "csv"), "--format must be json or csv"),
        ]
        for ok, msg in rules:
            if not ok:
                raise ConfigError(msg)
        unknown = [c for c in self.checks if c not in INEQUALITY_CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks: {', '.join(unknown)}")

    def eps_list(self) -> list:
        return G.default_schedule(self.eps_start, self.eps_end)

    def meta(self) -> dict:
        d = asdict(self)
        for k in ("output", "format", "map_out", "jobs"):
            d.pop(k)
        return {"version": __version__, "config": d}


def _progress(msg) -> None:
    print(f"[contraction-lab] {msg}", file=sys.stderr, flush=True)


# --------------------------------------------------------------------------
# contraction bounds for a (source, target) pair


def _contraction_bound(src: M.MeasureSpec, tgt: M.MeasureSpec):
    """``(bound, check)`` for the Lipschitz constant, or ``(None, reason)``."""
    if src.kind == "model_nu" and tgt.kind == "model_nu":
        if tgt.A >= src.A:
            return 1.0, "nu-image"
        return None, "target parameter smaller than source parameter"
    ps, pt = src.potential, tgt.potential
    if ps is None or pt is None:
        return None, "bound needs potentials for both measures"
    if (pt.family == "sum" and ps.family == "quadratic" and len(pt.components) == 2
            and pt.components[0].family == "quadratic"
            and pt.components[0].params == ps.params
            and pt.components[1].convexity_lower_bound is not None
            and pt.components[1].convexity_lower_bound >= 0):
        return 1.0, "contraction-pair"
    lam, K = ps.directional_upper_bound, pt.convexity_lower_bound
    if lam is None or K is None or K <= 0:
        return None, "no curvature bounds for the pair"
    return math.sqrt(lam / K), "contraction"


def _window_1d(T: T1.TransportMap):
    lo, hi = float(T.domain[0]), float(T.domain[1])
    lo, hi = max(lo, -8.0), min(hi, 8.0)
    pad = 1e-6 * (hi - lo)  # the mass coordinate of an open end overflows closer in
    return lo + pad, hi - pad


def _bound_entry(name, check, computed, bound, reason, tol, inputs, seed=None, details=None):
    if bound is None:
        return status_entry(name, "contraction", "not_applicable", inputs=inputs, seed=seed,
                            details={"computed": computed, "reason": reason, **(details or {})})
    return make_entry(name, check, computed, bound, tol, tol_mode="abs", inputs=inputs,
                      seed=seed, details=details)


# --------------------------------------------------------------------------
# solve / verify


def _verify_1d(src, tgt, cfg, report, progress):
    T = T1.monotone_map(src, tgt)
    lo, hi = _window_1d(T)
    grid = np.linspace(lo, hi, 4001)
    bound, check = _contraction_bound(src, tgt)
    reason = check if bound is None else None
    inputs = {"source": src.params.get("spec"), "target": tgt.params.get("spec"),
              "window": [lo, hi]}
    sup = V.jacobian_opnorm_sup(T, grid)
    report.add(_bound_entry("sup_jacobian", check, sup, bound, reason, 1e-6, inputs))
    if cfg.command == "verify":
        pw = V.lipschitz_pairwise(T, V.interval_sampler(lo, hi), cfg.n_pairs, cfg.seed)
        report.add(_bound_entry("lipschitz_pairwise", check, pw, bound, reason, 1e-6,
                                {**inputs, "n_pairs": cfg.n_pairs}, seed=cfg.seed))
        K = None if tgt.potential is None else tgt.potential.convexity_lower_bound
        if (src.potential is not None and K and K > 0 and src.is_probability
                and tgt.is_probability):
            report.extend(V.lp_norm_check(T, src, src.potential, K, seed=cfg.seed))
    progress(f"1-D monotone map: sup T' = {sup:.10g}")
    return T, grid


def _verify_radial(src, cfg, report, progress):
    psi, d = src.radial_density, src.dim
    r_grid = np.linspace(0.0, cfg.r_max, 401)
    report.add(R.contraction_criterion(psi, d, r_grid))
    progress("radial profile done")
    return R.radial_profile, r_grid


def _calibration(cfg, progress):
    progress("calibration run: gaussian -> gaussian(0.5)")
    gm = G.solve_pair(M.make_standard_gaussian(2), M.make_gaussian(2, CALIBRATION_SIGMA),
                      cfg.grid_n, cfg.eps_list(), cfg.tol, cfg.max_iter)
    return V.gaussian_calibration(gm, CALIBRATION_SIGMA, cfg.n_pairs, cfg.seed)


def _verify_2d(src, tgt, cfg, report, progress):
    inputs = {"source": src.params.get("spec"), "target": tgt.params.get("spec"),
              "grid_n": cfg.grid_n, "eps": cfg.eps_list(), "tol": cfg.tol}
    try:
        gm = G.solve_pair(src, tgt, cfg.grid_n, cfg.eps_list(), cfg.tol, cfg.max_iter,
                          progress=lambda d: progress(f"sinkhorn eps={d['epsilon']:.4g} "
                                                      f"iters={d['iterations']}"))
    except G.ConvergenceError as exc:
        c = exc.coupling
        report.add(status_entry("entropic_solve", "contraction", "not_converged", inputs=inputs,
                                details={"epsilon": c.epsilon, "marginal_error": c.marginal_error,
                                         "iterations": c.iterations}))
        return None
    bound, check = _contraction_bound(src, tgt)
    reason = check if bound is None else None
    js = V.jacobian_opnorm_sup(gm)
    if cfg.command == "solve":
        report.add(_bound_entry("sup_jacobian", check, js, bound, reason, 0.05, inputs))
        return gm
    cal = _calibration(cfg, progress)
    budget = cal["budget"]
    report.add(make_entry("calibration", "calibration", cal["pairwise"], CALIBRATION_SIGMA,
                          CALIBRATION_TOL, direction="equal", tol_mode="abs", seed=cfg.seed,
                          inputs={"grid_n": cfg.grid_n, "eps": cfg.eps_list()}, details=cal))
    pw = V.grid_pairwise_lipschitz(gm, cfg.n_pairs, cfg.seed)
    tol = budget * (bound if bound is not None else 1.0)
    details = {"budget": budget, "jacobian_sup": js}
    report.add(_bound_entry("lipschitz_pairwise", check, pw, bound, reason, tol,
                            {**inputs, "n_pairs": cfg.n_pairs}, seed=cfg.seed, details=details))
    report.add(_bound_entry("sup_jacobian", check, js, bound, reason, tol, inputs,
                            details={"budget": budget}))
    progress(f"entropic map: pairwise {pw:.6g}, jacobian sup {js:.6g}, budget {budget:.3g}")
    return gm


def _load_pair(cfg):
    if not cfg.source_spec:
        raise ConfigError("--source is required")
    src = specfile.load(cfg.source_spec)
    if src.kind == "radial" and not cfg.target_spec:
        return src, src
    if not cfg.target_spec:
        raise ConfigError("--target is required")
    tgt = specfile.load(cfg.target_spec)
    if src.dim != tgt.dim:
        raise ConfigError("source and target dimensions differ")
    return src, tgt


def run_solve_or_verify(cfg: RunConfig, progress) -> tuple[VerificationReport, str | None]:
    src, tgt = _load_pair(cfg)
    report = VerificationReport(meta=cfg.meta())
    table = None
    if src.kind == "radial":
        _verify_radial(src, cfg, report, progress)
        if cfg.map_out:
            table = R.to_csv(src.radial_density, src.dim, np.linspace(0.0, cfg.r_max, 401))
    elif src.dim == 1:
        try:
            T, grid = _verify_1d(src, tgt, cfg, report, progress)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.map_out:
            table = T1.to_csv(T, grid)
    elif src.dim == 2:
        gm = _verify_2d(src, tgt, cfg, report, progress)
        if cfg.map_out and gm is not None:
            table = gm.to_csv()
    else:
        raise ConfigError("only dimensions 1 and 2 are supported")
    return report, table


# --------------------------------------------------------------------------
# flow


def run_flow(cfg: RunConfig, progress):
    if not cfg.target_spec:
        raise ConfigError("--target is required")
    tgt = specfile.load(cfg.target_spec)
    try:
        U = H.target_tilt(tgt)
        H.check_whitelist(U)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = VerificationReport(meta=cfg.meta())
    inputs = {"target": tgt.params.get("spec"), "t_max": cfg.t_max, "dt": cfg.dt,
              "order": cfg.gh_order, "seeds": cfg.seeds}
    if tgt.dim == 1:
        law = T1.law_of(tgt)
        a, b = law.quantile(special.ndtr(np.array([-4.2, 4.2])))
        seeds = np.linspace(a, b, cfg.seeds)
        x_probe = np.linspace(-4, 4, 161)
    else:
        law = None
        lo, hi = G.auto_box(tgt)
        side = max(int(round(math.sqrt(cfg.seeds))), 5)
        g1, g2 = np.meshgrid(np.linspace(lo[0], hi[0], side), np.linspace(lo[1], hi[1], side),
                             indexing="ij")
        seeds = np.stack([g1.ravel(), g2.ravel()], 1)
        x_probe = seeds
    fs = H.integrate_flow(U, seeds, cfg.t_max, cfg.dt, cfg.gh_order,
                          progress=lambda t: progress(f"flow t={t:.3g}"))
    report.add(H.logconcavity_probe(U, np.linspace(0, cfg.t_max, 11), x_probe, cfg.gh_order))
    T = H.inverse_flow_map(fs)
    if tgt.dim == 1:
        grid = np.linspace(-4, 4, 801)
        sup = V.jacobian_opnorm_sup(T, grid)
        report.add(make_entry("heatflow_sup_jacobian", "heatflow-agreement", sup, 1.0, 1e-4,
                              tol_mode="abs", inputs=inputs))
        Tm = T1.monotone_map(M.make_standard_gaussian(1), tgt)
        diff = float(np.max(np.abs(T.forward(grid) - Tm.forward(grid))))
        report.add(make_entry("heatflow_vs_monotone", "heatflow-agreement", diff, 0.0, 1e-4,
                              tol_mode="abs", inputs=inputs))
        # the window must hold every recorded position, not just the seeds
        span = np.concatenate([h[:, 0] for h in fs.history])
        res = H.pushforward_residual(fs, float(span.min()) - 2, float(span.max()) + 2)
        report.add(make_entry("pushforward_residual", "pushforward", res, 0.0, 1e-4,
                              tol_mode="abs", inputs=inputs))
    else:
        i = fs.positions
        inner = np.all(np.abs(i) <= 3.0, axis=1)
        J = np.linalg.inv(fs.jacobians[inner])
        sup = float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2))))
        report.add(make_entry("heatflow_sup_jacobian", "heatflow-agreement", sup, 1.0, 1e-4,
                              tol_mode="abs", inputs=inputs,
                              details={"n_nodes": int(inner.sum())}))
    report.add(make_entry("flow_residual_velocity", "heatflow-agreement", fs.residual_velocity,
                          0.0, 1e-3, tol_mode="abs", inputs=inputs))
    return report, fs.to_csv() if cfg.map_out else None


# --------------------------------------------------------------------------
# inequalities


def _ineq_task(name: str, n: int, seed: int) -> list:
    if name == "correlation":
        return [I.correlation_check(M.strip(0.5, 0, 2), M.disk(1.0, 2), 2, n, seed)]
    if name == "b_inequality":
        return I.b_inequality_check(M.square(1.0, 2), 0.5, 2.0, 2, n, seed)
    if name == "harge":
        return I.harge_check(lambda x: np.exp(-x[:, 0] ** 4), lambda x: x[:, 0] ** 2, 1, n, seed)
    if name == "strong_poincare":
        return [I.strong_poincare_check(lambda x: x[:, 0] ** 2 - 1, lambda x: 2 * x,
                                        name="strong_poincare[x^2-1]"),
                I.strong_poincare_check(lambda x: x[:, 0] ** 3 - 3 * x[:, 0],
                                        lambda x: 3 * x**2 - 3, name="strong_poincare[x^3-3x]")]
    if name == "bakry_ledoux":
        return [I.bakry_ledoux_check(M.quartic(1, 1.0, 1.0))]
    if name == "concentration":
        return I.concentration_transfer_check(M.quartic(1, 1.0, 1.0), lambda r: np.asarray(r) ** 2,
                                              [0.5, 1.0, 2.0, 4.0], [-1.0, 0.0, 1.0])
    if name == "nu_profile":
        ts = [0.5, 1.0, 2.0]
        got = I.isoperimetric_profile_1d(M.make_model_nu(1.0), ts)
        want = I.nu_profile(1.0, ts)
        return [make_entry(f"nu_profile[t={t:g}]", "nu-profile", g, w, 1e-6, direction="equal",
                           tol_mode="abs", inputs={"A": 1.0, "t": t})
                for t, g, w in zip(ts, got, want)]
    raise ConfigError(f"unknown check {name!r}")


def run_inequalities(cfg: RunConfig, progress):
    names = cfg.checks or list(INEQUALITY_CHECKS)
    report = VerificationReport(meta=cfg.meta())
    if cfg.jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(names))) as ex:
            futs = [ex.submit(_ineq_task, nm, cfg.n_samples, cfg.seed) for nm in names]
            results = [f.result() for f in futs]
    else:
        results = []
        for nm in names:
            results.append(_ineq_task(nm, cfg.n_samples, cfg.seed))
            progress(f"{nm} done")
    for r in results:
        report.extend(r)
    return report, None


# --------------------------------------------------------------------------
# report merging


def run_report(cfg: RunConfig, progress):
    if not cfg.inputs:
        raise ConfigError("report needs at least one input file")
    merged = VerificationReport(meta={"version": __version__, "merged": list(cfg.inputs)})
    for p in cfg.inputs:
        try:
            data = json.loads(Path(p).read_text())
            merged.extend(VerificationReport.from_dict(data).entries)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read report {p}: {exc}") from exc
    return merged, None


# --------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contraction-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", dest="output", default="-", help="report path ('-' = stdout)")
        sp.add_argument("--format", default="json", choices=("json", "csv"))
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--quiet", action="store_true", help="no progress on stderr")

    def numeric(sp):
        sp.add_argument("--source", dest="source_spec")
        sp.add_argument("--target", dest="target_spec")
        sp.add_argument("--grid-n", type=int, default=64)
        sp.add_argument("--eps-start", type=float, default=1.0)
        sp.add_argument("--eps-end", type=float, default=5e-3)
        sp.add_argument("--tol", type=float, default=G.DEFAULT_TOL)
        sp.add_argument("--max-iter", type=int, default=G.DEFAULT_MAX_ITER)
        sp.add_argument("--n-pairs", type=int, default=100_000)
        sp.add_argument("--r-max", type=float, default=4.0)
        sp.add_argument("--map-out", help="write the plot-ready map table (CSV) here")

    for name, helptext in (("solve", "build a transport map and certify its Jacobian"),
                           ("verify", "build a map and run every applicable check")):
        sp = sub.add_parser(name, help=helptext)
        numeric(sp)
        common(sp)
    sp = sub.add_parser("flow", help="heat-flow transport onto a polynomial target")
    sp.add_argument("--target", dest="target_spec")
    sp.add_argument("--t-max", type=float, default=H.T_MAX)
    sp.add_argument("--dt", type=float, default=H.DT)
    sp.add_argument("--gh-order", type=int, default=H.GH_ORDER)
    sp.add_argument("--seeds", type=int, default=201)
    sp.add_argument("--map-out", help="write the flow trajectories (CSV) here")
    common(sp)
    sp = sub.add_parser("inequalities", help="Monte Carlo and quadrature inequality checks")
    sp.add_argument("--checks", default="", help="comma list from: " + ", ".join(INEQUALITY_CHECKS))
    sp.add_argument("--n-samples", type=int, default=1_000_000)
    common(sp)
    sp = sub.add_parser("report", help="merge JSON reports and re-emit them")
    sp.add_argument("inputs", nargs="+")
    common(sp)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    kw = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__}
    if isinstance(kw.get("checks"), str):
        kw["checks"] = [c.strip() for c in kw["checks"].split(",") if c.strip()]
    cfg = RunConfig(**kw)
    cfg.validate()
    return cfg


RUNNERS = {"solve": run_solve_or_verify, "verify": run_solve_or_verify, "flow": run_flow,
           "inequalities": run_inequalities, "report": run_report}


def exit_status(report: VerificationReport) -> int:
    if report.any_nonconverged:
        return 3
    return 0 if report.all_passed else 1


def run(cfg: RunConfig, progress=_progress) -> int:
    """Execute ``cfg``; write the report and return the exit status."""
    try:
        report, table = RUNNERS[cfg.command](cfg, progress)
    except (ConfigError, specfile.SpecError) as exc:
        print(f"contraction-lab: error: {exc}", file=sys.stderr)
        return 2
    text = report.to_json() if cfg.format == "json" else report.to_csv()
    if cfg.output == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(cfg.output).write_text(text)
    if table is not None and cfg.map_out:
        Path(cfg.map_out).write_text(table)
    return exit_status(report)


def main(argv=None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        print(f"contraction-lab: error: {exc}", file=sys.stderr)
        return 2
    progress = (lambda msg: None) if ns.quiet else _progress
    return run(cfg, progress)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
