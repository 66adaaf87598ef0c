"""Command-line interface: simulate / fit / diagnose / ppc.

Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure
(sampler or simulation), 4 file I/O failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import io as epio
from . import presets
from .diagnostics import (ChainSet, changepoint_marginals, credible_interval,
                          ess, ess_per_second, gelman_rubin,
                          posterior_predictive)
from .errors import ConfigError, EpicptError
from .mcmc import (PI01_PRIOR_PRESETS, Hyperparams, SamplerConfig, run_chains)
from .simulate import SimConfig, SmoothRate, aggregate_incidence, simulate_sir
from .sir import IncidenceSeries, ObservationGrid, TransmissionRate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

# Every key a config file may contain, with its default. Unknown sections or
# keys are rejected outright rather than silently ignored.
CONFIG_SCHEMA = {
    "model": {
        "s0": 10_000,
        "i0": 10,
        "gamma": 1.0,
        "gamma_mode": "fixed",  # fixed | estimate
    },
    "priors": {
        "a0": 1.0,
        "b0": 1.0,
        "pi01_preset": "jeffreys",  # jeffreys | sparse | very_sparse
        "a01": None,  # explicit values override the preset
        "b01": None,
        "a11": 0.5,
        "b11": 0.5,
        "gamma_shape": 1.0,
        "gamma_rate": 1.0,
    },
    "sampler": {
        "iterations": 50_000,
        "burn_in": None,
        "thin": 1,
        "delta_block_size": 1,
        "delta_proposal": "flip",  # flip | bridge
        "joint_flip_moves": 0,
        "mode": "learn",
        "fixed_delta": None,
        "seed": 0,
        "chains": 1,
    },
    "simulate": {
        "preset": None,  # two_changepoint | smooth_decline
        "s0": 10_000,
        "i0": 10,
        "gamma": 1.0,
        "t_start": 0.0,
        "t_end": 12.0,
        "n_intervals": 12,
        "beta": None,
        "change_points": None,
        "smooth_cut_points": None,
        "smooth_coefficients": None,
        "seed": 0,
    },
    "ppc": {
        "draws": 1000,
        "level": 0.95,
        "seed": 0,
    },
}


def load_config(path: str | None) -> dict:
    """Merge a TOML file over the defaults, rejecting unknown keys."""
    cfg = {sec: dict(keys) for sec, keys in CONFIG_SCHEMA.items()}
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            user = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    for sec, keys in user.items():
        if sec not in cfg:
            raise ConfigError(f"{path}: unknown config section [{sec}]")
        if not isinstance(keys, dict):
            raise ConfigError(f"{path}: top-level key {sec!r} outside a section")
        for key, value in keys.items():
            if key not in cfg[sec]:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{sec}]")
            cfg[sec][key] = value
    return cfg


def build_hyperparams(cfg: dict) -> Hyperparams:
    pri = cfg["priors"]
    preset = pri["pi01_preset"]
    if preset not in PI01_PRIOR_PRESETS:
        raise ConfigError(f"unknown pi01_preset {preset!r}; "
                          f"choose from {sorted(PI01_PRIOR_PRESETS)}")
    a01, b01 = PI01_PRIOR_PRESETS[preset]
    if pri["a01"] is not None:
        a01 = pri["a01"]
    if pri["b01"] is not None:
        b01 = pri["b01"]
    try:
        return Hyperparams(a0=pri["a0"], b0=pri["b0"], a01=a01, b01=b01,
                           a11=pri["a11"], b11=pri["b11"],
                           gamma_shape=pri["gamma_shape"],
                           gamma_rate=pri["gamma_rate"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_sim(cfg: dict, seed_override: int | None):
    sim = cfg["simulate"]
    seed = sim["seed"] if seed_override is None else seed_override
    if sim["preset"] is not None:
        factory = {"two_changepoint": presets.two_changepoint_example,
                   "smooth_decline": presets.smooth_decline_example}.get(sim["preset"])
        if factory is None:
            raise ConfigError(f"unknown simulate preset {sim['preset']!r}")
        return factory(seed)
    grid = ObservationGrid.regular(sim["t_start"], sim["t_end"], sim["n_intervals"])
    window = (grid.t_start, grid.t_end)
    try:
        if sim["smooth_cut_points"] is not None or sim["smooth_coefficients"] is not None:
            rate = SmoothRate(np.asarray(sim["smooth_cut_points"], dtype=float),
                              np.asarray(sim["smooth_coefficients"], dtype=float),
                              window=window)
        elif sim["beta"] is not None:
            rate = TransmissionRate(
                np.asarray(sim["change_points"] or [], dtype=float),
                np.atleast_1d(np.asarray(sim["beta"], dtype=float)),
                window=window)
        else:
            raise ConfigError("simulate needs 'beta' (with optional "
                              "'change_points'), smooth spline keys, or a preset")
        sim_cfg = SimConfig(s0=sim["s0"], i0=sim["i0"], rate=rate,
                            gamma=sim["gamma"], t_end=grid.t_end,
                            t0=grid.t_start, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return sim_cfg, grid


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sim_cfg, grid = _build_sim(cfg, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = simulate_sir(sim_cfg, np.random.default_rng(sim_cfg.seed))
    series = aggregate_incidence(result.trajectory, grid)
    epio.write_incidence_csv(out / "incidence.csv", grid, series, sim_cfg.seed)

    rate = sim_cfg.rate
    if isinstance(rate, SmoothRate):
        truth_rate = {"kind": "smooth",
                      "cut_points": rate.cut_points,
                      "coefficients": rate.coefficients}
    else:
        truth_rate = {"kind": "piecewise",
                      "change_points": rate.change_points,
                      "beta": rate.values}
    epio.write_json(out / "truth.json", {
        "s0": sim_cfg.s0, "i0": sim_cfg.i0, "gamma": sim_cfg.gamma,
        "grid_times": grid.times, "rate": truth_rate,
        "counts": series.counts,
        "n_infections": result.trajectory.n_infections,
        "extinct": result.extinct,
        "extinction_time": result.extinction_time,
    }, sim_cfg.seed)
    print(f"simulated {series.total} infections over {grid.n_intervals} "
          f"intervals (seed={sim_cfg.seed}) -> {out}")
    return EXIT_OK


def _sampler_config(cfg: dict, args) -> tuple[SamplerConfig, int]:
    smp = cfg["sampler"]
    model = cfg["model"]

    def pick(flag, key):
        return smp[key] if flag is None else flag

    fixed_delta = smp["fixed_delta"]
    if getattr(args, "fixed_delta", None) is not None:
        fixed_delta = [int(v) for v in args.fixed_delta.split(",")]
    chains = int(pick(getattr(args, "chains", None), "chains"))
    if chains < 1:
        raise ConfigError("need at least one chain")
    try:
        config = SamplerConfig(
            s0=int(model["s0"]), i0=int(model["i0"]),
            iterations=int(pick(args.iterations, "iterations")),
            burn_in=None if pick(args.burn_in, "burn_in") is None
            else int(pick(args.burn_in, "burn_in")),
            thin=int(pick(args.thin, "thin")),
            delta_block_size=int(smp["delta_block_size"]),
            delta_proposal=smp["delta_proposal"],
            joint_flip_moves=int(smp["joint_flip_moves"]),
            mode=pick(getattr(args, "mode", None), "mode"),
            fixed_delta=None if fixed_delta is None else tuple(fixed_delta),
            gamma_mode=model["gamma_mode"],
            gamma=float(model["gamma"]),
            seed=int(pick(args.seed, "seed")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config, chains


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    grid, data = epio.read_incidence_csv(args.data)
    hyper = build_hyperparams(cfg)
    config, n_chains = _sampler_config(cfg, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    try:
        chains = run_chains(data, grid, hyper, config, n_chains=n_chains)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    epio.write_samples_csv(out / "samples.csv", chains, config.seed)

    cs = ChainSet(tuple(chains))
    beta = cs.pooled("beta_interval")
    intervals = []
    for k in range(beta.shape[1]):
        lo, hi = credible_interval(beta[:, k], args.level)
        intervals.append({"column": f"beta_interval_{k + 1}",
                          "mean": float(beta[:, k].mean()),
                          "lower": lo, "upper": hi})
    marginals = changepoint_marginals(cs)
    summary = {
        "mode": config.mode,
        "iterations": config.iterations,
        "burn_in": config.resolved_burn_in,
        "thin": config.thin,
        "chains": n_chains,
        "level": args.level,
        "grid_times": grid.times,
        "changepoint_marginals": {
            repr(float(t)): float(m)
            for t, m in zip(grid.interior_times, marginals)},
        "beta_intervals": intervals,
        "gamma_mean": float(cs.pooled("gamma").mean()),
        "acceptance": [c.acceptance for c in chains],
        "wall_clock_s": [c.wall_clock_s for c in chains],
    }
    epio.write_json(out / "summary.json", summary, config.seed)
    print(f"fit complete: {n_chains} chain(s) x {config.iterations} iterations "
          f"(seed={config.seed}) -> {out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    chains = []
    for path in args.samples:
        chains.extend(epio.read_samples_csv(path))
    try:
        cs = ChainSet(tuple(chains))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    beta = cs.stacked("beta_interval")  # (m, n, K)
    columns = [f"beta_interval_{k + 1}" for k in range(beta.shape[2])]
    per_column = {}
    for j, name in enumerate(columns):
        pooled = beta[:, :, j].reshape(-1)
        entry = {"ess": float(ess(pooled)), "mean": float(pooled.mean())}
        wall = sum(c.wall_clock_s for c in cs.chains)
        entry["ess_per_second"] = (float(ess_per_second(pooled, wall))
                                   if wall > 0 else None)
        per_column[name] = entry

    payload = {"n_chains": cs.n_chains,
               "n_draws_per_chain": cs.chains[0].n_draws,
               "columns": per_column}
    if cs.n_chains >= 2:
        mpsrf, univ = gelman_rubin(cs)
        payload["mpsrf"] = float(mpsrf)
        payload["psrf"] = {name: float(v) for name, v in zip(columns, univ)}
    else:
        payload["mpsrf"] = None
        payload["note"] = ("potential scale reduction factors require at "
                           "least two chains; run with --chains >= 2")
    epio.write_json(out / "diagnostics.json", payload, cs.chains[0].seed)
    if payload["mpsrf"] is not None:
        print(f"MPSRF = {payload['mpsrf']:.4f} over {cs.n_chains} chains -> {out}")
    else:
        print(f"single chain: PSRF omitted; ESS written -> {out}")
    return EXIT_OK


def cmd_ppc(args) -> int:
    cfg = load_config(args.config)
    grid, data = epio.read_incidence_csv(args.data)
    chains = []
    for path in args.samples:
        chains.extend(epio.read_samples_csv(path))
    try:
        cs = ChainSet(tuple(chains))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if (cs.grid_times.shape != grid.times.shape
            or not np.allclose(cs.grid_times, grid.times)):
        raise ConfigError("samples and data were produced on different grids")

    ppc_cfg = cfg["ppc"]
    seed = ppc_cfg["seed"] if args.seed is None else args.seed
    level = ppc_cfg["level"] if args.level is None else args.level
    draws = ppc_cfg["draws"] if args.draws is None else args.draws
    model = cfg["model"]
    try:
        band = posterior_predictive(cs, grid, int(model["s0"]), int(model["i0"]),
                                    int(draws), np.random.default_rng(int(seed)),
                                    level=float(level))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ppc.csv", "w") as fh:
        fh.write(f"# schema_version={epio.SCHEMA_VERSION}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(f"# level={level}\n")
        fh.write("t_start,t_end,lower,mean,upper,observed\n")
        for k in range(grid.n_intervals):
            fh.write(f"{float(grid.times[k])!r},{float(grid.times[k + 1])!r},"
                     f"{float(band.lower[k])!r},{float(band.mean[k])!r},"
                     f"{float(band.upper[k])!r},{int(data.counts[k])}\n")
    covered = band.coverage(data.counts)
    epio.write_json(out / "ppc.json", {
        "level": level, "draws": int(draws),
        "intervals_covered": covered,
        "n_intervals": grid.n_intervals,
    }, seed)
    print(f"posterior predictive: {covered}/{grid.n_intervals} observed counts "
          f"inside the {level:.0%} band -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epicpt",
        description="Change-point inference for time-varying SIR transmission rates")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate an epidemic and write incidence data")
    sim.add_argument("--config", help="TOML configuration file")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", default=".", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="run the posterior sampler on incidence data")
    fit.add_argument("--data", required=True, help="incidence CSV file")
    fit.add_argument("--config", help="TOML configuration file")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--chains", type=int, default=None)
    fit.add_argument("--mode", choices=["learn", "homogeneous", "fixed"], default=None)
    fit.add_argument("--fixed-delta", default=None,
                     help="comma-separated 0/1 indicators for mode=fixed")
    fit.add_argument("--iterations", type=int, default=None)
    fit.add_argument("--burn-in", type=int, default=None, dest="burn_in")
    fit.add_argument("--thin", type=int, default=None)
    fit.add_argument("--level", type=float, default=0.95,
                     help="credible-interval level for the summary")
    fit.add_argument("--out", default=".", help="output directory")
    fit.set_defaults(func=cmd_fit)

    diag = sub.add_parser("diagnose", help="convergence diagnostics from sample files")
    diag.add_argument("--samples", nargs="+", required=True)
    diag.add_argument("--out", default=".", help="output directory")
    diag.set_defaults(func=cmd_diagnose)

    ppc = sub.add_parser("ppc", help="posterior predictive check against observed data")
    ppc.add_argument("--samples", nargs="+", required=True)
    ppc.add_argument("--data", required=True, help="incidence CSV file")
    ppc.add_argument("--config", help="TOML configuration file")
    ppc.add_argument("--seed", type=int, default=None)
    ppc.add_argument("--level", type=float, default=None)
    ppc.add_argument("--draws", type=int, default=None)
    ppc.add_argument("--out", default=".", help="output directory")
    ppc.set_defaults(func=cmd_ppc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EpicptError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
