"""Command-line front end: ``asep-kpz <subcommand> [flags]``.

Exit status is 0 on success, 2 on invalid parameters and 1 on runtime
failure (including a comparison or verification that misses its
tolerance). JSON goes to ``--out`` or stdout; ``--format csv`` switches the
sampling commands to per-sample rows.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import __version__, continuum, convergence, dynamics, mpa, oracle, walks
from .observables import Estimate, weighted_mean, weighted_variance
from .params import ParameterError, from_densities, from_rates, read_config, weak_asymmetry
from .report import Report, write_csv
from .rng import RandomStream, map_chunks

log = logging.getLogger("asepkpz")

RATE_KEYS = ("alpha", "beta", "gamma", "delta")
MODEL_KEYS = ("q", "ell", "rho_a", "rho_b", *RATE_KEYS, "epsilon", "L", "u", "v")
CONFLICT_TOL = 1e-12
WALK_CHUNK = 8192


class UsageError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _model_flags(p, scaling=False):
    p.add_argument("--config", help="key=value parameter file; flags override it")
    p.add_argument("--ell", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--rho-a", dest="rho_a", type=float)
    p.add_argument("--rho-b", dest="rho_b", type=float)
    for k in RATE_KEYS:
        p.add_argument(f"--{k}", type=float)
    if scaling:
        _scaling_flags(p)


def _scaling_flags(p, with_eps=True):
    if with_eps:
        p.add_argument("--epsilon", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--u", type=float)
    p.add_argument("--v", type=float)


def _io_flags(p, formats=("json",)):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--timing", action="store_true", help="record runtime_seconds in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asep-kpz", description="Open ASEP and KPZ stationary measures")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dynamics", help="Gillespie simulation snapshots")
    _model_flags(p)
    p.add_argument("--burn-in", type=float, help="burn-in time (default 10 ell)")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--thin", type=float, help="time between snapshots (default ell)")
    _io_flags(p, ("json", "csv"))

    p = sub.add_parser("mpa", help="exact matrix-product quantities")
    _model_flags(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--n-max", type=int)
    g.add_argument("--auto-truncate", action="store_true", help="adaptive cutoff (the default)")
    p.add_argument("--rel-tol", type=float, default=1e-12)
    p.add_argument("--profile", action="store_true")
    p.add_argument("--verify", action="store_true")
    _io_flags(p)

    p = sub.add_parser("oracle", help="compare against the master-equation solution")
    _model_flags(p)
    p.add_argument("--compare", choices=("mpa", "walks", "dynamics"), required=True)
    p.add_argument("--n-max", type=int)
    p.add_argument("--tol", type=float, help="pass threshold (default 1e-10, or 4 sqrt(2^ell/samples))")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--burn-in", type=float)
    p.add_argument("--thin", type=float)
    _io_flags(p)

    p = sub.add_parser("walks", help="exact samples of the weighted walks")
    _model_flags(p, scaling=True)
    p.add_argument("--n-max", type=int)
    p.add_argument("--rel-tol", type=float, default=1e-12)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--grid", type=int, default=16, help="grid intervals on [0, L] in scaling mode")
    _io_flags(p, ("csv", "json"))

    p = sub.add_parser("kpz-sample", help="weighted continuum path ensemble")
    p.add_argument("--config")
    _scaling_flags(p, with_eps=False)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--mode", choices=("X", "H", "U"), default="H")
    p.add_argument("--points", help="comma-separated report points (default 0,L/4,L/2,3L/4,L)")
    _io_flags(p, ("json", "csv"))

    p = sub.add_parser("converge", help="discrete-to-continuum table")
    p.add_argument("--config")
    _scaling_flags(p, with_eps=False)
    p.add_argument("--epsilons", default="0.4,0.2,0.1")
    p.add_argument("--observables", default=",".join(convergence.DEFAULT_OBSERVABLES))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--rel-tol", type=float, default=1e-12)
    _io_flags(p, ("json", "csv"))

    p = sub.add_parser("verify", help="check the algebra of the representations")
    _model_flags(p)
    p.add_argument("--n-max", type=int, default=64)
    p.add_argument("--n-terms", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-12)
    _io_flags(p)
    return parser


# --- parameter resolution ---------------------------------------------------

def _values(args) -> dict:
    vals = read_config(args.config) if getattr(args, "config", None) else {}
    for k in MODEL_KEYS:
        val = getattr(args, k, None)
        if val is not None:
            vals[k] = val
    return vals


def _need(vals, *keys):
    missing = [k for k in keys if vals.get(k) is None]
    if missing:
        raise ParameterError("missing parameter(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _model(vals, need_ell=True):
    """ModelParams from densities, rates or the weak-asymmetry scaling."""
    if vals.get("epsilon") is not None:
        clash = [k for k in ("q", "rho_a", "rho_b", *RATE_KEYS) if vals.get(k) is not None]
        if clash:
            raise ParameterError(f"--epsilon fixes the model; drop {', '.join(clash)}")
        _need(vals, "L", "u", "v")
        sp, params = weak_asymmetry(vals["epsilon"], vals["L"], vals["u"], vals["v"])
        if vals.get("ell") is not None and vals["ell"] != sp.ell:
            raise ParameterError(f"--ell {vals['ell']} conflicts with round(4L/eps^2) = {sp.ell}")
        return params, sp
    _need(vals, "q")
    ell = vals.get("ell")
    if need_ell:
        _need(vals, "ell")
    ell = 1 if ell is None else int(ell)
    has_rho = [vals.get(k) is not None for k in ("rho_a", "rho_b")]
    rates = {k: vals[k] for k in RATE_KEYS if vals.get(k) is not None}
    if all(has_rho):
        params = from_densities(vals["rho_a"], vals["rho_b"], vals["q"], ell)
        for k, val in rates.items():
            if abs(getattr(params, k) - val) > CONFLICT_TOL:
                raise ParameterError(
                    f"--{k} {val} conflicts with the densities (which imply {getattr(params, k)!r})")
        return params, None
    if any(has_rho):
        raise ParameterError("give both --rho-a and --rho-b")
    if len(rates) == 4:
        return from_rates(rates["alpha"], rates["beta"], rates["gamma"], rates["delta"], vals["q"], ell), None
    raise ParameterError("need --rho-a/--rho-b, all four rates, or --epsilon --L --u --v")


def _uvl(vals):
    _need(vals, "u", "v")
    return float(vals["u"]), float(vals["v"]), float(vals.get("L") or 1.0)


def _float_list(text, name):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ParameterError(f"bad --{name} list {text!r}") from None


def _positive(name, val):
    if val is None or val < 1:
        raise ParameterError(f"--{name} must be a positive integer")


# --- subcommands ------------------------------------------------------------

def _cmd_dynamics(args, rep):
    params, _ = _model(_values(args))
    rep.params["model"] = params.as_dict()
    _positive("samples", args.samples)
    ell = params.ell
    burn = 10.0 * ell if args.burn_in is None else args.burn_in
    thin = float(ell) if args.thin is None else args.thin
    run = dynamics.run_stationary_dynamics(params, burn, args.samples, thin, RandomStream(args.seed))
    rep.params.update(burn_in=burn, thin=thin, samples=args.samples)
    if args.format == "csv":
        rows = ((k, t, n, "".join(map(str, tau))) for k, (t, n, tau) in
                enumerate(zip(run.snapshot_times, run.snapshot_N, run.snapshot_tau)))
        return write_csv(rows, ["snapshot", "t", "N", "tau"])
    taus = run.snapshot_tau.astype(float)
    for i in range(ell):
        rep.add(weighted_mean(taus[:, i], name=f"density_{i + 1}"))
    rep.add(weighted_mean(taus.sum(axis=1), name="particles"))
    t_end = float(run.final.t)
    rep.results.update(events=run.events, left_net=run.left_net, right_net=run.right_net, t_end=t_end,
                       right_current=run.right_net / t_end if t_end > 0 else None)
    return None


def _mpa_cutoff(params, n_max, rel_tol):
    if n_max is not None:
        return int(n_max)
    return mpa.adapt_truncation(params, params.ell, rel_tol)


def _cmd_mpa(args, rep):
    params, _ = _model(_values(args))
    rep.params["model"] = params.as_dict()
    params.require_mpa()
    n_max = _mpa_cutoff(params, args.n_max, args.rel_tol)
    rep_mpa = mpa._build_any(params, n_max)
    ell = params.ell
    log_z = mpa.log_normalization(rep_mpa, ell)
    cur = mpa.current(rep_mpa, ell)
    rep.params.update(n_max=n_max, rel_tol=args.rel_tol if args.n_max is None else None)
    rep.add(Estimate("current", cur, 0.0, None))
    rep.results.update(Z=float(np.exp(log_z)) if log_z < 700 else None, log_Z=log_z, current=cur)
    if args.profile:
        prof = mpa.density_profile(rep_mpa, ell)
        rep.results["profile"] = prof
        for i, rho in enumerate(prof):
            rep.add(Estimate(f"density_{i + 1}", float(rho), 0.0, None))
    if args.verify:
        rep.diagnostics["residuals"] = mpa.verify_algebra(rep_mpa, params).as_dict()
    return None


def _cmd_oracle(args, rep):
    params, _ = _model(_values(args))
    rep.params["model"] = params.as_dict()
    ell = params.ell
    exact = oracle.oracle_distribution(params)
    if args.compare in ("mpa", "walks"):
        tol = 1e-10 if args.tol is None else args.tol
        if args.compare == "mpa":
            n_max = _mpa_cutoff(params, args.n_max, 1e-14)
            other = mpa.all_probabilities(mpa._build_any(params, n_max), ell)
        else:
            n_max = oracle.MAX_WALK_NMAX if args.n_max is None else args.n_max
            other = oracle.enumerate_walk_measure(params, n_max).tau_marginal
        diff = float(np.max(np.abs(exact - other)))
        rep.params.update(n_max=n_max)
        rep.results.update(max_abs_diff=diff, tolerance=tol, passed=diff < tol)
    else:
        _positive("samples", args.samples)
        burn = 10.0 * ell if args.burn_in is None else args.burn_in
        thin = float(ell) if args.thin is None else args.thin
        run = dynamics.run_stationary_dynamics(params, burn, args.samples, thin, RandomStream(args.seed))
        emp = dynamics.empirical_distribution(run.snapshot_tau)
        tv = 0.5 * float(np.abs(emp - exact).sum())
        tol = 4.0 * np.sqrt(2.0**ell / args.samples) if args.tol is None else args.tol
        rep.params.update(samples=args.samples, burn_in=burn, thin=thin)
        rep.results.update(tv_distance=tv, tolerance=float(tol), passed=tv < tol, events=run.events)
    rep.results["oracle_distribution"] = exact
    return 0 if rep.results["passed"] else 1


def _cmd_walks(args, rep):
    vals = _values(args)
    params, sp = _model(vals)
    rep.params["model"] = params.as_dict()
    _positive("samples", args.samples)
    n_max = args.n_max if args.n_max is not None else mpa.adapt_truncation(params, params.ell, args.rel_tol)
    tab = walks.build_partition_table(params, n_max)
    stream = RandomStream(args.seed)
    rep.params.update(n_max=n_max, samples=args.samples)
    if sp is not None:
        rep.params["scaling"] = sp.as_dict()
        _positive("grid", args.grid)
        grid = np.linspace(0.0, sp.L, args.grid + 1)
        eps, L = sp.epsilon, sp.L

        def work(g, size):
            n, m = walks.sample_joint_batch(tab, g, size)
            return walks.rescale_batch(n, m, eps, L, grid)

        parts = map_chunks(work, stream, args.samples, WALK_CHUNK)
        U, V, H = (np.concatenate([p[k] for p in parts]) for k in range(3))
        if args.format == "csv":
            rows = ((s, grid[j], U[s, j], V[s, j], H[s, j])
                    for s in range(args.samples) for j in range(len(grid)))
            return write_csv(rows, ["sample", "x", "U_eps", "V_eps", "H_eps"])
        for name, arr in (("U", U), ("V", V), ("H", H)):
            for j, x in enumerate(grid):
                rep.add(weighted_mean(arr[:, j], name=f"mean:{name}@{x:g}"))
                rep.add(weighted_variance(arr[:, j], name=f"var:{name}@{x:g}"))
        return None

    parts = map_chunks(lambda g, size: walks.sample_joint_batch(tab, g, size), stream, args.samples, WALK_CHUNK)
    n = np.concatenate([p[0] for p in parts])
    m = np.concatenate([p[1] for p in parts])
    tau = (np.diff(n, axis=1) + np.diff(m, axis=1) + 1) // 2
    if args.format == "csv":
        rows = ((s, i, n[s, i], m[s, i], tau[s, i - 1] if i else "")
                for s in range(args.samples) for i in range(n.shape[1]))
        return write_csv(rows, ["sample", "i", "n", "m", "tau"])
    for i in range(tau.shape[1]):
        rep.add(weighted_mean(tau[:, i], name=f"density_{i + 1}"))
    for i in range(n.shape[1]):
        rep.add(weighted_mean(n[:, i], name=f"mean:n_{i}"))
    return None


def _cmd_kpz(args, rep):
    u, v, L = _uvl(_values(args))
    _positive("samples", args.samples)
    _positive("grid", args.grid)
    sampler = {"X": continuum.sample_X_ensemble, "H": continuum.sample_H_ensemble,
               "U": continuum.sample_U_ensemble}[args.mode]
    M = args.grid
    if args.format == "csv":
        ens = sampler(u, v, L, M, args.samples, RandomStream(args.seed))
        vals, grid, lw = ens.values, ens.grid, ens.log_weights
        rows = ((s, grid[j], vals[s, j], lw[s]) for s in range(ens.count) for j in range(len(grid)))
        return write_csv(rows, ["sample", "x", args.mode, "log_weight"])
    pts = _float_list(args.points, "points") if args.points else [0.0, L / 4, L / 2, 3 * L / 4, L]
    pts = sorted({round(x / (L / M)) * (L / M) for x in pts})
    ens = sampler(u, v, L, M, args.samples, RandomStream(args.seed), keep=pts)
    rep.params.update(u=u, v=v, L=L, grid=M, samples=args.samples, mode=args.mode)
    for x in ens.grid:
        col = ens.column(args.mode, x)
        rep.add(weighted_mean(col, ens.log_weights, name=f"mean:{args.mode}@{x:g}"))
        rep.add(weighted_variance(col, ens.log_weights, name=f"var:{args.mode}@{x:g}"))
    rep.diagnostics["ess"] = ens.ess
    rep.diagnostics["ess_warning"] = ens.ess_warning
    return None


def _cmd_converge(args, rep):
    u, v, L = _uvl(_values(args))
    _positive("samples", args.samples)
    eps = _float_list(args.epsilons, "epsilons")
    obs = [o.strip() for o in args.observables.split(",") if o.strip()]
    table = convergence.convergence_study(u, v, L, eps, obs, N=args.samples, M=args.grid,
                                          rng=RandomStream(args.seed), rel_tol=args.rel_tol)
    rows = table.rows()
    if args.format == "csv":
        keys = ["observable", "kind", "epsilon", "estimate", "stderr", "n_effective"]
        return write_csv(([r[k] for k in keys] for r in rows), keys)
    rep.params.update(u=u, v=v, L=L, epsilons=eps, samples=args.samples, grid=args.grid,
                      observables=obs, rel_tol=args.rel_tol)
    for r in rows:
        tag = f"eps={r['epsilon']:g}" if r["kind"] == "discrete" else r["kind"]
        rep.add(Estimate(f"{r['observable']}|{tag}", r["estimate"], r["stderr"], r["n_effective"]))
    rep.diagnostics["ess"] = table.diagnostics["continuum"]["ess"]
    rep.diagnostics["levels"] = table.diagnostics
    rep.results["z_scores"] = {s.name: table.z_score(s.name) for s in table.observables}
    return None


def _cmd_verify(args, rep):
    params, _ = _model(_values(args), need_ell=False)
    checks = {}
    if params.liggett:
        checks["liggett"] = mpa.verify_algebra(mpa.build_representation(params, args.n_max), params)
    d, e = mpa.defining_parameters(params)
    checks["general"] = mpa.verify_algebra(mpa.build_general_representation(params, d, e, args.n_max), params)
    checks["recursions_defining"] = mpa.verify_appendix_recursions(params.q, d, e, args.n_terms, params)
    da, ea = mpa.alternative_parameters(params)
    checks["recursions_alternative"] = mpa.verify_appendix_recursions(params.q, da, ea, args.n_terms)
    worst = max(c.max for c in checks.values())
    rep.params.update(model=params.as_dict(), n_max=args.n_max, n_terms=args.n_terms)
    rep.diagnostics["residuals"] = {k: c.as_dict() for k, c in checks.items()}
    rep.results.update(max_residual=worst, tolerance=args.tol, passed=worst < args.tol)
    return 0 if worst < args.tol else 1


COMMANDS = {
    "dynamics": _cmd_dynamics,
    "mpa": _cmd_mpa,
    "oracle": _cmd_oracle,
    "walks": _cmd_walks,
    "kpz-sample": _cmd_kpz,
    "converge": _cmd_converge,
    "verify": _cmd_verify,
}


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _echo(args):
    skip = {"out", "timing", "format", "seed", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"asep-kpz: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    rep = Report(command=args.command, params=_echo(args), seed=args.seed)
    start = time.perf_counter()
    try:
        status = COMMANDS[args.command](args, rep)
    except ParameterError as exc:
        print(f"asep-kpz: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"asep-kpz: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if isinstance(status, str):
        _emit(status, args.out)
        return 0
    if args.timing:
        rep.diagnostics["runtime_seconds"] = time.perf_counter() - start
    _emit(rep.to_json(), args.out)
    return int(status or 0)


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
