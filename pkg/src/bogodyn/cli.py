"""Command-line entry point: ``bogodyn <subcommand> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks, fock, hartree, nbody, pair, spectral
from .config import SweepConfig, load_config
from .errors import BogodynError, ConfigError
from .report import emit_report
from .sweep import run_cell, run_sweep

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2
log = logging.getLogger("bogodyn")


def _setting_for(cfg: SweepConfig, args):
    N = args.N if args.N is not None else cfg["sweep"]["N"][0]
    beta = args.beta if args.beta is not None else cfg["sweep"]["beta"][0]
    if N < 2:
        raise ConfigError(f"--N must be >= 2, got {N}")
    if not 0 <= beta < 0.5:
        raise ConfigError(f"--beta must lie in [0, 1/2), got {beta}")
    return cfg.comparison(N, beta)


def _setup_dynamics(s: nbody.ComparisonSettings):
    basis = spectral.build_mode_basis(s.d, s.L, s.kmax)
    prof = spectral.make_profile(s.profile, **s.profile_params)
    w_hat = spectral.scaled_potential_fourier(prof, s.beta, s.N, basis)
    u0 = nbody.make_condensate(basis, s.condensate, s.condensate_epsilon)
    t_end = max(max(s.times), s.hartree_dt)
    ht = hartree.evolve_hartree(u0, w_hat, t_end, dt=s.hartree_dt, scheme=s.hartree_scheme)
    return basis, w_hat, ht


def cmd_hartree(cfg, args) -> int:
    s = _setting_for(cfg, args)
    _, w_hat, ht = _setup_dynamics(s)
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"{cfg['output']['prefix']}_hartree"
    ht.to_csv(stem.with_suffix(".csv"))
    ht.save(stem.with_suffix(".npz"))
    drift = float(np.max(np.abs(np.linalg.norm(ht.u, axis=1) - 1)))
    e = [hartree.hartree_energy(u, w_hat) for u in ht.u]
    print(f"hartree: {len(ht)} steps to t={ht.t_final:g}, norm drift {drift:.2e}, "
          f"energy drift {abs(e[-1] - e[0]) / abs(e[0]):.2e} -> {stem}.csv")
    return EXIT_OK


def cmd_bogoliubov(cfg, args) -> int:
    s = _setting_for(cfg, args)
    basis, w_hat, ht = _setup_dynamics(s)
    kt = pair.KernelTrajectory(ht, w_hat)
    fb = fock.FockBasis(basis.n_modes, s.nmax)
    phi0 = nbody.initial_excitation_state(s.initial, kt.kernels(0.0), fb, s.initial_shift)
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    t_end = max(s.times)
    stem = out / f"{cfg['output']['prefix']}_{args.backend}"
    if args.backend == "pair":
        pt = pair.evolve_pair(fock.extract_one_body(phi0), kt, t_end, dt=s.hartree_dt)
        pt.to_csv(stem.with_suffix(".csv"), basis)
        pt.save(stem.with_suffix(".npz"))
        worst = max(pt.state(i).purity_residual() for i in range(len(pt)))
        print(f"bogoliubov[pair]: {len(pt)} samples, final tr gamma "
              f"{pt.state(len(pt) - 1).particle_number():.6g}, max purity residual {worst:.2e}")
        return EXIT_OK
    step = round(s.fock_dt, 12)
    samples = np.round(np.arange(0, t_end + 0.5 * step, step * max(1, round(0.05 / step))), 12)
    samples = sorted(set(samples.tolist()) | set(s.times))
    ft = fock.evolve_fock(phi0, kt, t_end, dt=s.fock_dt, sample_times=samples,
                          leak_budget=s.leak_budget)
    T1 = fock.dGamma(np.diag(1 + basis.kinetic), fb)
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "trace_gamma", "kinetic", "norm", "top_shell_weight"])
        for t, v in zip(ft.times, ft.vectors):
            p = fock.extract_one_body(v)
            w.writerow([repr(float(t)), repr(p.particle_number()), repr(float(np.real(v.expect(T1)))),
                        repr(v.norm()), repr(float(v.shell_weights()[-1]))])
    ft.vectors[-1].save(stem.with_suffix(".npz"))
    flag = " (UNDER-TRUNCATED)" if ft.flagged else ""
    print(f"bogoliubov[fock]: {len(ft.times)} samples, max top-shell weight "
          f"{ft.leak.max():.2e}{flag}, norm drift {ft.norm_drift:.2e}")
    return EXIT_PARTIAL if ft.flagged else EXIT_OK


def _report_exit(records) -> int:
    ok = sum(1 for r in records if r.status in ("ok", "under-truncated"))
    bad = [r for r in records if r.status not in ("ok",)]
    if ok == 0:
        return EXIT_FAIL
    return EXIT_PARTIAL if bad else EXIT_OK


def cmd_nbody_compare(cfg, args) -> int:
    s = _setting_for(cfg, args)
    records = run_cell(cfg, s.N, s.beta)
    paths = emit_report(records, [], cfg["output"]["dir"], f"{cfg['output']['prefix']}_compare")
    for r in records:
        print(f"t={r.t:g} N={r.N} beta={r.beta:g}: error^2={r.error2:.6e} "
              f"(normalized {r.normalized_error2:.6e}), tr gamma={r.trace_gamma:.4g} [{r.status}]")
    print(f"report -> {paths['csv']}")
    return _report_exit(records)


def cmd_sweep(cfg, args) -> int:
    res = run_sweep(cfg, workers=args.workers)
    paths = emit_report(res.records, res.fits, cfg["output"]["dir"], cfg["output"]["prefix"])
    for f in res.fits:
        print(f"beta={f.beta:g} t={f.t:g}: slope {f.slope:.4f} (reference {f.reference_slope:.4f}, "
              f"gap {f.slope_gap:+.4f}) over N={[n for n, _ in f.points]}")
    print(f"{res.n_ok} ok, {res.n_skipped} skipped, {res.n_failed} failed records -> {paths['csv']}")
    for r in res.records:
        if r.status.startswith(("skipped", "failed")):
            log.warning("N=%s beta=%s t=%s: %s", r.N, r.beta, r.t, r.status)
    if res.n_ok == 0:
        return EXIT_FAIL
    return EXIT_PARTIAL if (res.n_skipped or res.n_failed) else EXIT_OK


def cmd_gse_check(cfg, args) -> int:
    g = cfg["gse"]
    s = checks.gse_trials(cfg.seed, g["draws"], g["max_modes"], g["nmax"])
    err = checks.one_mode_gse_error()
    print(f"gse-check: {len(s.trials)} draws (seed {cfg.seed}), {s.violations} violations "
          f"(truncated Fock: {s.fock_violations}), smallest gap {s.min_gap:.3e}; "
          f"one-mode closed form error {err:.1e}")
    return EXIT_OK if (s.violations == 0 and s.fock_violations == 0 and err <= 1e-10) else EXIT_FAIL


def cmd_selftest(cfg, args) -> int:
    results = checks.run_selftest(cfg.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "hartree": (cmd_hartree, "integrate the condensate equation and export the trajectory"),
    "bogoliubov": (cmd_bogoliubov, "evolve the fluctuation state (pair or Fock backend)"),
    "nbody-compare": (cmd_nbody_compare, "compare one (N, beta) cell against exact N-body dynamics"),
    "sweep": (cmd_sweep, "run the full (N, beta) grid and fit error rates"),
    "gse-check": (cmd_gse_check, "test the quadratic ground-state lower bound on random draws"),
    "selftest": (cmd_selftest, "run the oracle-equivalence checks"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bogodyn", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry, e.g. sweep.N=[4,8]")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp_ = sub.add_parser(name, parents=[common], help=help_)
        if name in ("hartree", "bogoliubov", "nbody-compare"):
            sp_.add_argument("--N", type=int, help="particle number (default: first of sweep.N)")
            sp_.add_argument("--beta", type=float, help="scaling exponent (default: first of sweep.beta)")
        if name == "bogoliubov":
            sp_.add_argument("--backend", choices=("pair", "fock"), default="pair")
        if name == "sweep":
            sp_.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f'output.dir="{args.out}"')
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command][0](cfg, args)
    except (BogodynError, ValueError, OSError) as exc:
        print(f"bogodyn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
