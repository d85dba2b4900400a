"""Command-line experiment runner.

    minmove run|convergence|compare|selfcheck --config <path|preset> [--out DIR] [--jobs N]

Exit codes: 0 success, 1 failed self-check, 2 configuration error,
3 a step could not stay inside the admissible set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, config
from .export import write_csv, write_json, write_trajectory_csv
from .minimize import convexity_threshold
from .reference import exact_linear_reference, solve_limit_rk4, solve_time_delayed, ExactReference
from .scheme import SchemeAborted, eval_piecewise_affine, eval_piecewise_constant, run

EXIT_OK, EXIT_SELFCHECK, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3


def run_id(cfg) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _solve(cfg, tau=None, h=None):
    """Build everything from the config and march one trajectory."""
    model = config.build_model(cfg)
    eta0, eta_star = config.build_initial(cfg, model)
    f = config.build_forcing(cfg)
    params = config.build_params(cfg, tau, h)
    traj = run(model, params, eta0, eta_star, f, config.build_settings(cfg), audit=cfg["audit"])
    return model, eta0, eta_star, f, traj


def _sweep_member(args):
    cfg, tau, h = args
    model, eta0, eta_star, f, traj = _solve(cfg, tau, h)
    cert = analysis.stability_certificate(traj, model, eta0, eta_star, f)
    return traj, cert


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _diagnostics(model, traj, cert) -> dict:
    p = traj.params
    thr = convexity_threshold(model, cert.K)
    d = {
        "steps": p.steps,
        "nonconverged_steps": int((~traj.converged[:, 1:]).sum()),
        "max_residual": float(traj.residuals[:, 1:].max()),
        "max_iterations": int(traj.iterations[:, 1:].max()),
        "convexity_threshold_tau_h": thr,
        "above_convexity_threshold": bool(p.tau * p.h >= thr),
    }
    if traj.energy_defect is not None:
        excess = traj.energy_defect[:, 1:] - traj.energy_slack[:, 1:]
        d["energy_inequality_max_excess"] = float(excess.max())
        d["energy_inequality_ok"] = bool(np.all(excess <= 0))
    return d


def _meta(cfg, cmd, extra=None) -> dict:
    meta = {"command": cmd, "run_id": run_id(cfg), "config": cfg}
    if extra:
        meta.update(extra)
    return meta


def cmd_run(cfg, out: Path, jobs: int = 1) -> int:
    try:
        model, eta0, eta_star, f, traj = _solve(cfg)
    except SchemeAborted as exc:
        k, ell = exc.index
        write_json(out / "meta.json", _meta(cfg, "run", {"error": str(exc), "k": k, "l": ell}))
        print(f"error: collision at step k={k}, window l={ell}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    cert = analysis.stability_certificate(traj, model, eta0, eta_star, f)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_json(out / "certificate.json", cert.to_dict())
    diag = _diagnostics(model, traj, cert)
    write_json(out / "meta.json", _meta(cfg, "run", {
        "model": model.name,
        "params": {"tau": traj.params.tau, "h": traj.params.h, "T": traj.params.T,
                   "N": traj.params.N, "M": traj.params.M},
        "diagnostics": diag,
    }))
    print(f"run {run_id(cfg)}: {traj.params.steps} steps, final state "
          f"{np.array2string(traj.final_state(), precision=6)}, certificate {'ok' if cert.ok else 'VIOLATED'}"
          f"{'' if cert.hypothesis_ok else ' (step restriction h(1+2C tau) <= 1/2 not met)'}")
    return EXIT_OK


def _reference(cfg, model, eta0, eta_star, f, finest_tau):
    ref = cfg["reference"]
    kind = ref["kind"]
    T = float(cfg["scheme"]["T"])
    if kind == "auto":
        kind = {"quadratic": "exact", "double_well": "rk4", "bar": "scheme"}[model.name]
    if kind == "exact":
        if model.name != "quadratic" or f.kind != "zero":
            raise config.ConfigError("reference.kind", "exact reference needs the quadratic model and zero forcing")
        return exact_linear_reference(model.params["omega"], float(eta0[0]), float(eta_star[0]), T)
    if kind == "rk4":
        return solve_limit_rk4(model, eta0, eta_star, f, T, min(ref["step"], finest_tau / 10), ref["blowup"])
    tau = ref["tau"] if ref["tau"] is not None else finest_tau / 10
    fine = config.build_params(cfg, tau, tau)
    traj = run(model, fine, eta0, eta_star, f, config.build_settings(cfg))
    return ExactReference(lambda t: eval_piecewise_affine(traj, t), fine.T, f"scheme tau=h={tau}")


def _delayed_substep(cfg, h):
    sub = cfg["reference"]["delayed_substep"] or cfg["reference"]["step"]
    return h / math.ceil(h / sub - 1e-9)


def cmd_convergence(cfg, out: Path, jobs: int = 1) -> int:
    sw = cfg.get("sweep")
    if sw is None:
        raise config.ConfigError("sweep", "convergence needs a sweep section")
    model = config.build_model(cfg)
    eta0, eta_star = config.build_initial(cfg, model)
    f = config.build_forcing(cfg)
    T = float(cfg["scheme"]["T"])

    if sw["tau_h"] is not None:
        taus = sorted(sw["tau_h"], reverse=True)
        members = [(cfg, t, t) for t in taus]
    else:
        taus = sorted(sw["tau"], reverse=True)
        members = [(cfg, t, sw["h"]) for t in taus]
    try:
        results = _map(_sweep_member, members, jobs)
    except SchemeAborted as exc:
        print(f"error: collision at (k, l) = {exc.index}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    margins = [float(c.margin.min()) for _, c in results]

    if sw["tau_h"] is not None:
        ref = _reference(cfg, model, eta0, eta_star, f, taus[-1])
        errs = [analysis.linf_error(tr, ref) for tr, _ in results]
        write_csv(out / "errors.csv", ["tau", "linf_error"], zip(taus, errs))
        rep = analysis.rate_fit(list(zip(taus, errs)), margins)
        rep.extras = {"reference": ref.method, "monotone": bool(np.all(np.diff(errs) < 0)),
                      "certificates_ok": [bool(c.ok) for _, c in results]}
        write_json(out / "rate.json", rep.to_dict())
        print(f"slope {rep.slope:.4f} over tau = {taus}")
    else:
        h = float(sw["h"])
        delayed = solve_time_delayed(model, eta0, eta_star, h, T, _delayed_substep(cfg, h), f, cfg["reference"]["blowup"])
        limit = solve_limit_rk4(model, eta0, eta_star, f, T, min(cfg["reference"]["step"], taus[-1] / 10),
                                cfg["reference"]["blowup"])
        e_del = [analysis.linf_error(tr, delayed) for tr, _ in results]
        e_lim = [analysis.linf_error(tr, limit) for tr, _ in results]
        write_csv(out / "errors.csv", ["tau", "linf_error", "linf_error_limit"], zip(taus, e_del, e_lim))
        rep = analysis.rate_fit(list(zip(taus, e_del)), margins)
        rep.extras = {"h": h, "reference": "rk4-delayed", "limit_errors": e_lim,
                      "plateau_ratio": e_lim[-1] / e_lim[0]}
        write_json(out / "rate.json", rep.to_dict())
        print(f"slope vs delayed {rep.slope:.4f}, limit plateau ratio {e_lim[-1] / e_lim[0]:.4f}")
    write_json(out / "meta.json", _meta(cfg, "convergence"))
    return EXIT_OK


def cmd_compare(cfg, out: Path, jobs: int = 1) -> int:
    try:
        model, eta0, eta_star, f, traj = _solve(cfg)
    except SchemeAborted as exc:
        print(f"error: collision at (k, l) = {exc.index}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    p = traj.params
    comp = cfg["compare"]["component"]
    comp = model.dim - 1 if comp is None else comp
    if not 0 <= comp < model.dim:
        raise config.ConfigError("compare.component", f"must lie in 0..{model.dim - 1}")
    rs = cfg["reference"]
    limit = solve_limit_rk4(model, eta0, eta_star, f, p.T, min(rs["step"], p.tau / 10), rs["blowup"])
    delayed = solve_time_delayed(model, eta0, eta_star, p.h, p.T, _delayed_substep(cfg, p.h), f, rs["blowup"])
    t = np.linspace(0.0, p.T, cfg["compare"]["grid_points"])
    cols = [
        t,
        eval_piecewise_affine(traj, t)[:, comp],
        eval_piecewise_constant(traj, t)[:, comp],
        delayed(t)[:, comp],
        limit(t)[:, comp],
    ]
    write_csv(out / "compare.csv", ["t", "scheme_affine", "scheme_constant", "delayed", "limit"], zip(*cols))
    write_json(out / "meta.json", _meta(cfg, "compare", {"component": comp}))
    print(f"final: scheme {cols[1][-1]:.6f}, delayed {cols[3][-1]:.6f}, limit {cols[4][-1]:.6f}")
    return EXIT_OK


def cmd_selfcheck(cfg, out: Path, jobs: int = 1) -> int:
    from .selfcheck import run_checks

    seed = cfg["seed"] if cfg else 0
    rows = run_checks(seed)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_SELFCHECK


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "compare": cmd_compare, "selfcheck": cmd_selfcheck}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="minmove", description="Two-scale minimizing-movements experiments.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON file or preset name (" + ", ".join(config.preset_names()) + ")")
    ap.add_argument("--out", default="minmove-out", help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    args = ap.parse_args(argv)
    if args.jobs < 1:
        ap.error("--jobs must be >= 1")
    try:
        if args.config is None:
            if args.command != "selfcheck":
                ap.error("--config is required")
            cfg = None
        else:
            cfg = config.load_config(args.config)
        out = Path(args.out)
        if args.command != "selfcheck":
            out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        code = COMMANDS[args.command](cfg, out, args.jobs)
        print(f"[{args.command}] {time.perf_counter() - t0:.2f}s", file=sys.stderr)
        return code
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
