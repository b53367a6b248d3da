"""Command line entry point: ``pspinamp <subcommand>``.

Exit codes: 0 success, 2 invalid configuration, 3 numeric failure or a
failed check, 4 refused for resource limits.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

from .config import ENV_THREADS, ConfigError, example_config, load_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_RESOURCE = 4

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage
        self.cause = exc


def _cap_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get(ENV_THREADS)
        n = int(env) if env else None
    if n is not None:
        if n < 1:
            raise ConfigError("thread cap must be >= 1")
        for var in _THREAD_VARS:
            os.environ[var] = str(n)


def _parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=float))
    else:
        print(text)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=float) + "\n")


def _outdir(cfg) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_gamma_csv(path: Path, gamma, cfg_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        fh.write("t,gamma\n")
        for t, g in zip(gamma.knots[:-1], gamma.values):
            fh.write(f"{float(t)!r},{float(g)!r}\n")


def read_gamma_csv(path):
    """Read a ``t,gamma`` file written by ``solve-gamma``."""
    import numpy as np

    from .parisi import GammaPath

    ts, gs = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("t,"):
                continue
            t, g = line.split(",")
            ts.append(float(t))
            gs.append(float(g))
    return GammaPath(np.append(ts, 1.0), np.array(gs))


def _solve_gamma(cfg):
    from .variational import VariationalOptions, minimize_parisi, spherical_gamma

    m = cfg.mixture_obj()
    if cfg.mode == "spherical":
        sg = spherical_gamma(m, cfg.n_knots, cfg.eps_t)
        return sg.gamma, dict(mode="spherical", value=sg.value, truncated=sg.truncated, converged=True), True
    opts = VariationalOptions(eps_t=cfg.eps_t, tol=cfg.tol, max_iter=cfg.max_iter, gradient=cfg.gradient,
                              n_paths=cfg.n_paths, seed=cfg.seed_sde)
    rep = minimize_parisi(m, cfg.n_knots, opts)
    d = rep.to_dict()
    d["mode"] = "ising"
    d["iterations"] = rep.iterations
    return rep.gamma_star, d, rep.converged


def cmd_solve_gamma(args, cfg) -> int:
    h = cfg.content_hash()
    if args.dry_run:
        _emit(args, dict(plan=["solve-gamma"], config=cfg.to_dict(), config_hash=h),
              f"would minimize P over {cfg.n_knots} knots for {cfg.mode} mixture {cfg.mixture}")
        return EXIT_OK
    gamma, report, converged = _solve_gamma(cfg)
    out = _outdir(cfg)
    report.update(config={k: v for k, v in cfg.to_dict().items() if k != "output_dir"}, config_hash=h)
    _write_gamma_csv(out / "gamma.csv", gamma, h)
    _dump_json(out / "report.json", report)
    _emit(args, report, f"P(gamma*) = {report['value']:.6f}  converged={converged}  -> {out}")
    return EXIT_OK if converged else EXIT_NUMERIC


def _plan(cfg) -> dict:
    from .hamiltonian import disorder_bytes

    m = cfg.mixture_obj()
    steps = int(math.floor(cfg.resolved_t_star / cfg.delta + 1e-9))
    return dict(
        stages=["gamma", "pde", "calibrate", "disorder", "iamp", "round", "report"],
        n=cfg.n, mode=cfg.mode, iterations=steps,
        disorder_bytes=disorder_bytes(cfg.n, m), byte_budget=cfg.byte_budget,
        se_bytes=8 * cfg.n_se_samples * (steps + 1) * 6,
    )


def run_pipeline(cfg, out: Path | None = None) -> dict:
    """Full pipeline; returns the report dict. Stage failures raise ``StageError``."""
    from .dynamics import ParisiDrive, SphericalDrive
    from .hamiltonian import BudgetError, disorder_bytes, sample_disorder
    from .iamp import IampConfig, calibrate, norm_law_deviation, run_iamp
    from .parisi import PdeGrid, solve_parisi
    from .rounding import round_pipeline
    from .variational import parisi_functional

    m = cfg.mixture_obj()
    h = cfg.content_hash()
    need = disorder_bytes(cfg.n, m)
    if need > cfg.byte_budget:
        raise BudgetError(f"disorder needs {need} bytes, budget is {cfg.byte_budget}")
    profile = {}
    # the output location is not an input, so bundles at different paths stay identical
    echo = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    report = dict(config=echo, config_hash=h)

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except (BudgetError, ConfigError):
            raise
        except Exception as exc:  # noqa: BLE001 - reported with the stage name
            if out is not None:
                report["failed_stage"] = name
                _dump_json(out / "report.json", report)
            raise StageError(name, exc) from exc
        finally:
            profile[name] = time.perf_counter() - t0

    icfg = IampConfig(delta=cfg.delta, t_star=cfg.resolved_t_star, n_se_samples=cfg.n_se_samples,
                      seed=cfg.seed_se, sensitivity=cfg.sensitivity)
    if cfg.mode == "ising":
        if cfg.gamma_file:
            gamma = stage("gamma", lambda: read_gamma_csv(cfg.gamma_file))
            greport = dict(source=cfg.gamma_file)
        else:
            gamma, greport, _ = stage("gamma", lambda: _solve_gamma(cfg))
        x_max = cfg.x_max
        grid = PdeGrid.default(m, icfg.times, cfg.n_x) if x_max is None else PdeGrid(x_max, cfg.n_x, tuple(icfg.times))
        sol = stage("pde", lambda: solve_parisi(m, gamma, grid))
        drive = ParisiDrive(sol)
        report["parisi_value"] = parisi_functional(m, gamma, sol=sol)
        report["gamma"] = dict(knots=gamma.knots.tolist(), values=gamma.values.tolist(),
                               **{k: v for k, v in greport.items() if k not in ("iterations", "stationarity_profile")})
        if out is not None:
            _write_gamma_csv(out / "gamma.csv", gamma, h)
    else:
        from .variational import spherical_gamma

        sg = spherical_gamma(m, cfg.n_knots, cfg.eps_t)
        drive = SphericalDrive(m)
        report["spherical_value"] = sg.value
        report["gamma"] = dict(knots=sg.gamma.knots.tolist(), values=sg.gamma.values.tolist(),
                               truncated=sg.truncated)
        if out is not None:
            _write_gamma_csv(out / "gamma.csv", sg.gamma, h)
    cal = stage("calibrate", lambda: calibrate(m, drive, icfg))
    d = stage("disorder", lambda: sample_disorder(cfg.n, m, cfg.seed_disorder, cfg.byte_budget))
    run = stage("iamp", lambda: run_iamp(d, drive, cal))
    rep = stage("round", lambda: round_pipeline(d, run, cfg.mode))
    dev = norm_law_deviation(run)
    report.update(
        calibration=dict(sigma=cal.sigma.tolist(), increment_vars=cal.increment_vars.tolist(),
                         onsager=cal.onsager.tolist()),
        iamp=dict(final_energy=float(run.energy[-1]), se_pred_energy=float(cal.pred_energy[-1]),
                  continuum_energy=float(cal.continuum_energy[-1]), max_norm_deviation=float(dev.max()),
                  iterations=int(len(run.energy) - 1)),
        rounding=rep.to_dict(),
        final_energy=float(rep.energies["H_sigma"]),
    )
    if out is not None:
        run.write_jsonl(out / "iterations.jsonl", extra=dict(config_hash=h))
        _dump_json(out / "rounding.json", dict(rep.to_dict(), config_hash=h))
        _dump_json(out / "report.json", report)
        # timings differ between runs, so they live outside the hashed bundle
        _dump_json(out / "profile.json", profile)
    report["profile"] = profile
    return report


def cmd_run(args, cfg) -> int:
    if args.dry_run:
        plan = _plan(cfg)
        payload = dict(plan=plan, config=cfg.to_dict(), config_hash=cfg.content_hash())
        text = "\n".join(f"{k}: {v}" for k, v in plan.items())
        _emit(args, payload, "dry run, nothing sampled\n" + text)
        return EXIT_RESOURCE if plan["disorder_bytes"] > cfg.byte_budget else EXIT_OK
    from .hamiltonian import BudgetError, disorder_bytes

    need = disorder_bytes(cfg.n, cfg.mixture_obj())
    if need > cfg.byte_budget:
        raise BudgetError(f"disorder needs {need} bytes, budget is {cfg.byte_budget}")
    out = _outdir(cfg)
    report = run_pipeline(cfg, out)
    _emit(args, report, f"H(sigma)/N = {report['final_energy']:.6f}  (AMP iterate {report['iamp']['final_energy']:.6f},"
          f" max norm deviation {report['iamp']['max_norm_deviation']:.4f})  -> {out}")
    return EXIT_OK


def cmd_se_check(args, cfg) -> int:
    from .dynamics import ParisiDrive, SphericalDrive
    from .hamiltonian import sample_disorder
    from .iamp import IampConfig, calibrate, norm_law_deviation, run_iamp, se_check
    from .parisi import PdeGrid, solve_parisi

    m = cfg.mixture_obj()
    icfg = IampConfig(delta=cfg.delta, t_star=cfg.resolved_t_star, n_se_samples=cfg.n_se_samples,
                      seed=cfg.seed_se, sensitivity=cfg.sensitivity)
    if cfg.mode == "ising":
        gamma = read_gamma_csv(cfg.gamma_file) if cfg.gamma_file else _solve_gamma(cfg)[0]
        drive = ParisiDrive(solve_parisi(m, gamma, PdeGrid.default(m, icfg.times, cfg.n_x)))
    else:
        drive = SphericalDrive(m)
    cal = calibrate(m, drive, icfg)
    d = sample_disorder(cfg.n, m, cfg.seed_disorder, cfg.byte_budget)
    run = run_iamp(d, drive, cal)
    results = se_check(run, cal)
    dev = float(norm_law_deviation(run).max())
    worst = max(abs(r.z_score) for r in results)
    ok = dev <= args.norm_tol and worst <= args.z_max
    payload = dict(norm_law_max_deviation=dev, ok=ok, config_hash=cfg.content_hash(),
                   checks=[dict(name=r.name, empirical=r.empirical, predicted=r.predicted, z=r.z_score)
                           for r in results])
    lines = [f"{r.name:14s} emp={r.empirical:10.5f} se={r.predicted:10.5f} z={r.z_score:7.2f}" for r in results]
    lines.append(f"norm law max deviation {dev:.4f} (tol {args.norm_tol}) -> {'PASS' if ok else 'FAIL'}")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if ok else EXIT_NUMERIC


def pde_checks(mixture, n_x: int = 2001) -> list[tuple[str, float, float]]:
    """(name, measured error, tolerance) for the closed-form and invariant checks."""
    import numpy as np

    from .parisi import GammaPath, PdeGrid, closed_form_gamma_zero, solve_parisi

    out = []
    grid = PdeGrid.default(mixture, (0.0, 0.5), n_x)
    sol = solve_parisi(mixture, GammaPath.constant(0.0), grid)
    exact = math.sqrt(2 * mixture.xi_prime(1.0) / math.pi)
    out.append(("phi(0,0) gamma=0", abs(sol.value_at_origin() - exact), 1e-3))
    k = sol.slice_index(0.5)
    ref = closed_form_gamma_zero(mixture, 0.5, sol.x)
    out.append(("slice t=0.5 gamma=0", float(np.max(np.abs(sol.phi[k] - ref))), 1e-3))
    g = GammaPath(np.linspace(0, 1, 6), np.array([0.3, 0.8, 1.5, 2.5, 4.0]))
    sol = solve_parisi(mixture, g, PdeGrid.default(mixture, (0.0,), n_x))
    x = sol.x
    out.append(("|phi_x| <= 1", float(max(np.max(np.abs(sol.phi_x)) - 1.0, 0.0)), 1e-12))
    out.append(("phi_xx >= 0", float(max(-np.min(sol.phi_xx), 0.0)), 1e-12))
    out.append(("phi >= |x|", float(max(np.max(np.abs(x) - sol.phi), 0.0)), 1e-9))
    out.append(("phi even", float(np.max(np.abs(sol.phi - sol.phi[:, ::-1]))), 1e-12))
    out.append(("phi_x nondecreasing", float(max(-np.min(np.diff(sol.phi_x, axis=1)), 0.0)), 1e-12))
    return out


def cmd_pde_check(args, cfg) -> int:
    checks = pde_checks(cfg.mixture_obj(), cfg.n_x)
    ok = all(err <= tol for _, err, tol in checks)
    payload = dict(ok=ok, checks=[dict(name=n, error=e, tol=t, ok=e <= t) for n, e, t in checks])
    text = "\n".join(f"{n:24s} err={e:.3e} tol={t:.0e} {'PASS' if e <= t else 'FAIL'}" for n, e, t in checks)
    _emit(args, payload, text)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_oracle(args, cfg) -> int:
    from .hamiltonian import sample_disorder
    from .oracle import MAX_BRUTE_N, brute_force_opt

    n = args.n if args.n is not None else cfg.n
    if n > MAX_BRUTE_N:
        print(f"brute force refused: n={n} exceeds {MAX_BRUTE_N}", file=sys.stderr)
        return EXIT_RESOURCE
    m = cfg.mixture_obj()
    seed = args.seed if args.seed is not None else cfg.seed_disorder
    d = sample_disorder(n, m, seed, cfg.byte_budget)
    res = brute_force_opt(d, histogram=args.histogram is not None)
    if args.histogram is not None:
        import numpy as np

        np.savetxt(args.histogram, res.histogram, header=f"H/N by configuration code; config_hash={cfg.content_hash()}")
    payload = dict(n=n, seed=seed, opt_value=res.opt_value, argmax=res.argmax.values.tolist())
    _emit(args, payload, f"OPT_N = {res.opt_value:.6f} at n={n}, seed={seed}")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    from . import _kernels
    from .bench import format_rows, run_benchmark

    rows = run_benchmark(repeat=args.repeat, quick=args.quick)
    _emit(args, dict(active_backend=_kernels.BACKEND, rows=rows),
          f"active backend: {_kernels.BACKEND}\n" + format_rows(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pspinamp", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None, help=f"cap BLAS/OpenMP threads (env {ENV_THREADS})")
    p.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        # global flags are also accepted after the subcommand
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        sp.add_argument("-c", "--config", help="INI configuration file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config entry")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
        return sp

    common(sub.add_parser("solve-gamma", help="minimize the Parisi functional, write gamma.csv and report.json"))
    common(sub.add_parser("run", help="full pipeline: gamma, calibration, message passing, rounding"))
    sp = common(sub.add_parser("se-check", help="compare AMP iterates with state evolution"))
    sp.add_argument("--norm-tol", type=float, default=0.05)
    sp.add_argument("--z-max", type=float, default=4.0)
    common(sub.add_parser("pde-check", help="closed-form and invariant checks of the PDE solver"))
    sp = common(sub.add_parser("oracle", help="exact optimum by exhaustive enumeration (n <= 22)"))
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--histogram", default=None, help="write H/N of every configuration to this file")
    sp = common(sub.add_parser("bench", help="time compiled kernels against the numpy fallback"))
    sp.add_argument("--repeat", type=int, default=3)
    sp.add_argument("--quick", action="store_true")
    sub.add_parser("example-config", help="print a commented configuration file")
    return p


COMMANDS = {
    "solve-gamma": cmd_solve_gamma,
    "run": cmd_run,
    "se-check": cmd_se_check,
    "pde-check": cmd_pde_check,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "example-config":
        print(example_config(), end="")
        return EXIT_OK
    try:
        _cap_threads(args.threads)
        cfg = load_config(args.config, _parse_overrides(args.set))
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.dry_run and args.command not in ("run", "solve-gamma"):
        _emit(args, dict(config=cfg.to_dict(), config_hash=cfg.content_hash()), "configuration valid")
        return EXIT_OK

    from .hamiltonian import BudgetError
    from .oracle import TooLargeError

    try:
        return COMMANDS[args.command](args, cfg)
    except (BudgetError, TooLargeError, MemoryError) as exc:
        print(f"resource refusal: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        if isinstance(exc.cause, (MemoryError,)):
            return EXIT_RESOURCE
        return EXIT_NUMERIC
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
