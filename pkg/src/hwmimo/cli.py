"""Command-line interface.

Subcommands: scenario-gen, estimate, rates-cf, rates-mc, sweep-n,
asymptotic, scaling-law, circuit, preset.  Every command writes CSV plus a
JSON manifest with the resolved inputs; seeds make all outputs reproducible
(byte-identical at any thread count).  Exit codes: 0 success, 2 unusable
configuration or arguments, 3 violated numerical invariant.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .circuits import (
    AdcSpec,
    LnaSpec,
    LoSpec,
    power_scaling_report,
    profile_from_circuits,
)
from .estimator import build_cache, error_covariance
from .experiments import (
    ConfigError,
    config_from_dict,
    preset,
    run,
    write_rows,
)
from .model import HardwareProfile, LoMode, NoiseFigure, conventional_profile, validate
from .montecarlo import FilterKind, McConfig, empirical_mse, estimate_moments
from .pilots import PlacementKind, dft_book, place, temporal_book
from .rates import (
    NumericalInvariantError,
    ScalingExponents,
    check_scaling_law,
    mrc_moment_coefficients,
    scaled_profile,
    sinr_trajectory,
    sinr_trajectory_from_coefficients,
    ue_rate,
)
from .scenario_gen import (
    CENTER_CELL,
    SHADOW_STD_DB,
    generate,
    load_scenario,
    save_scenario,
)


def _env_default(name: str, cast, fallback):
    raw = os.environ.get(f"HWMIMO_{name}")
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad HWMIMO_{name} environment value {raw!r}") from exc


def _add_common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=_env_default("SEED", int, 0))
    p.add_argument("--out", type=Path, default=_env_default("OUT", Path, Path(".")))
    p.add_argument("--threads", type=int, default=_env_default("THREADS", int, 1))


def _add_scenario_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", type=Path, help="scenario JSON file (from scenario-gen)")
    p.add_argument("--deployment", choices=["colocated", "distributed"], default="distributed")
    p.add_argument("-N", "--n-antennas", type=int, default=128)
    p.add_argument("--snr-db", type=float, default=5.0)
    p.add_argument("-T", "--block-length", type=int, default=500)
    p.add_argument("--drop-index", type=int, default=0)
    p.add_argument("--shadow-std-db", type=float, default=SHADOW_STD_DB)


def _add_hardware(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ideal", action="store_true", help="drift/distortion-free, xi = sigma2")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--kappa2", type=float, default=None)
    p.add_argument("--xi-over-sigma2", type=float, default=None)
    p.add_argument("--adc-bits", type=float, default=None)
    p.add_argument("--lna-nf-db", type=float, default=None)
    p.add_argument("--carrier-hz", type=float, default=None)
    p.add_argument("--symbol-time-s", type=float, default=None)
    p.add_argument("--lo-quality", type=float, default=None)
    p.add_argument("--lo", choices=["clo", "slo"], default="clo")


def _add_pilots(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pilot-book", choices=["temporal", "dft"], default="dft")
    p.add_argument(
        "--pilot-place",
        choices=[k.value for k in PlacementKind],
        default="beginning",
    )
    p.add_argument("-B", "--pilot-length", type=int, default=None)


def _scenario_from(args):
    if args.scenario:
        return load_scenario(args.scenario)
    return generate(
        args.deployment,
        N=args.n_antennas,
        snr_db=args.snr_db,
        T=args.block_length,
        seed=args.seed,
        drop_index=args.drop_index,
        shadow_std_db=args.shadow_std_db,
    )


def _hardware_from(args, sigma2: float) -> HardwareProfile:
    triple = [args.delta, args.kappa2, args.xi_over_sigma2]
    circuit = [args.adc_bits, args.lna_nf_db, args.carrier_hz, args.symbol_time_s, args.lo_quality]
    sources = [args.ideal, any(v is not None for v in triple), any(v is not None for v in circuit)]
    if sum(sources) != 1:
        raise ConfigError(
            "exactly one hardware source is required: --ideal, a (--delta, --kappa2, "
            "--xi-over-sigma2) triple, or a circuit spec"
        )
    lo = LoMode(args.lo)
    if args.ideal:
        hw = conventional_profile(sigma2)
        return HardwareProfile(hw.delta, hw.kappa2, hw.xi, lo)
    if sources[1]:
        if any(v is None for v in triple):
            raise ConfigError("--delta, --kappa2 and --xi-over-sigma2 must be given together")
        return HardwareProfile(
            delta=args.delta, kappa2=args.kappa2, xi=args.xi_over_sigma2 * sigma2, lo_mode=lo
        )
    if any(v is None for v in circuit):
        raise ConfigError(
            "--adc-bits, --lna-nf-db, --carrier-hz, --symbol-time-s and --lo-quality "
            "must be given together"
        )
    return profile_from_circuits(
        AdcSpec(args.adc_bits),
        LnaSpec(F=NoiseFigure.from_db(args.lna_nf_db).F),
        LoSpec(args.carrier_hz, args.symbol_time_s, args.lo_quality),
        sigma2,
        lo_mode=lo,
    )


def _book_from(args, scenario):
    B = args.pilot_length if args.pilot_length is not None else scenario.K
    pl = place(PlacementKind(args.pilot_place), scenario.T, B)
    if args.pilot_book == "temporal":
        return temporal_book(scenario.powers, pl)
    return dft_book(scenario.powers, pl)


def _default_cell(scenario) -> int:
    return CENTER_CELL if scenario.L == 25 else 0


def _write_manifest(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}_manifest.json"
    payload = {"version": __version__, **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


# -- subcommand implementations -------------------------------------------------


def _cmd_scenario_gen(args) -> int:
    scen = _scenario_from(args)
    report = validate(scen)
    if not report.ok:
        raise ConfigError("; ".join(report.violations))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.json"
    save_scenario(
        scen,
        path,
        meta={
            "deployment": args.deployment,
            "seed": args.seed,
            "drop_index": args.drop_index,
            "snr_db": args.snr_db,
            "shadow_std_db": args.shadow_std_db,
        },
    )
    _write_manifest(args.out, args.name, {"command": "scenario-gen", "args": vars(args)})
    print(path)
    return 0


def _cmd_estimate(args) -> int:
    scen = _scenario_from(args)
    hw = _hardware_from(args, scen.sigma2)
    book = _book_from(args, scen)
    j = args.cell if args.cell is not None else _default_cell(scen)
    l = args.source_cell if args.source_cell is not None else j
    cache = build_cache(scen, hw, book)
    ts = np.asarray(book.data_times(), dtype=float)[:: args.t_stride]
    closed = np.array([error_covariance(cache, j, l, args.ue, t)[1] for t in ts])
    mc_mean, _ = empirical_mse(
        cache, j, l, args.ue, ts, McConfig(trials=args.trials, seed=args.seed, threads=args.threads)
    )
    rows = [(int(t), closed[i], mc_mean[i]) for i, t in enumerate(ts)]
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.csv"
    write_rows(path, ("t", "mse_closed_form", "mse_monte_carlo"), rows)
    _write_manifest(args.out, args.name, {"command": "estimate", "args": vars(args)})
    print(path)
    return 0


def _sinr_rows(scen, cache, hw, j, n_value, t_stride):
    rows = []
    for k in range(scen.K):
        rep = ue_rate(cache, j, k, hw.lo_mode)
        traj = sinr_trajectory(cache, j, k, rep.ts[::t_stride], hw.lo_mode)
        for i, t in enumerate(traj.ts):
            rows.append(
                (
                    n_value,
                    k,
                    int(t),
                    traj.sinr[i],
                    rep.rate,
                    traj.signal[i],
                    traj.interference[i],
                    traj.distortion[i],
                    traj.noise[i],
                )
            )
    return rows


_SINR_COLUMNS = ("N", "ue", "t", "sinr", "rate", "signal", "interference", "distortion", "noise")


def _cmd_rates_cf(args) -> int:
    scen = _scenario_from(args)
    hw = _hardware_from(args, scen.sigma2)
    book = _book_from(args, scen)
    j = args.cell if args.cell is not None else _default_cell(scen)
    cache = build_cache(scen, hw, book)
    rows = _sinr_rows(scen, cache, hw, j, scen.N, args.t_stride)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.csv"
    write_rows(path, _SINR_COLUMNS, rows)
    _write_manifest(args.out, args.name, {"command": "rates-cf", "args": vars(args)})
    print(path)
    return 0


def _cmd_sweep_n(args) -> int:
    scen = _scenario_from(args)
    hw = _hardware_from(args, scen.sigma2)
    book = _book_from(args, scen)
    j = args.cell if args.cell is not None else _default_cell(scen)
    cache = build_cache(scen, hw, book)
    ts = np.asarray(book.data_times(), dtype=float)[:: args.t_stride]
    rows = []
    for k in range(scen.K):
        co = mrc_moment_coefficients(cache, j, k, ts)
        full = mrc_moment_coefficients(
            cache, j, k, np.asarray(book.data_times(), dtype=float)
        ) if args.t_stride > 1 else co
        for n in args.n_grid:
            if n % scen.subarrays:
                raise ConfigError(f"N={n} not a multiple of the subarray count {scen.subarrays}")
            mult = n // scen.subarrays
            traj = sinr_trajectory_from_coefficients(co, scen, hw, mult, hw.lo_mode)
            rate_traj = sinr_trajectory_from_coefficients(full, scen, hw, mult, hw.lo_mode)
            rate = float(np.log2(1.0 + rate_traj.sinr).sum() / scen.T)
            for i, t in enumerate(ts):
                rows.append(
                    (n, k, int(t), traj.sinr[i], rate, traj.signal[i],
                     traj.interference[i], traj.distortion[i], traj.noise[i])
                )
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.csv"
    write_rows(path, _SINR_COLUMNS, rows)
    _write_manifest(args.out, args.name, {"command": "sweep-n", "args": vars(args)})
    print(path)
    return 0


def _cmd_rates_mc(args) -> int:
    scen = _scenario_from(args)
    hw = _hardware_from(args, scen.sigma2)
    book = _book_from(args, scen)
    j = args.cell if args.cell is not None else _default_cell(scen)
    cache = build_cache(scen, hw, book)
    mc = McConfig(
        trials=args.trials,
        seed=args.seed,
        filter_kind=FilterKind(args.filter),
        threads=args.threads,
    )
    ts = np.asarray(book.data_times(), dtype=float)[:: args.t_stride]
    ues = range(scen.K) if args.ue is None else [args.ue]
    rows = []
    for k in ues:
        sinr_vals = []
        per_t = []
        for t in ts:
            m = estimate_moments(scen, hw, book, mc.filter_kind, j, k, t, mc, cache=cache)
            p = scen.powers
            signal = p[j, k] * abs(m.first) ** 2
            inter = float(np.sum(p * m.second))
            noise = hw.xi * m.norm2
            den = inter - signal + m.distortion + noise
            sinr = signal / den if den > 0 else math.inf
            sinr_vals.append(sinr)
            per_t.append((k, int(t), m, sinr))
        share = len(book.data_times()) / scen.T
        rate = float(np.mean([math.log2(1 + s) for s in sinr_vals]) * share)
        for k_, t_, m, sinr in per_t:
            rows.append(
                (
                    k_, t_, m.norm2, m.norm2_se, m.first.real, m.first.imag, m.first_se,
                    float(np.sum(scen.powers * m.second)), float(np.sum(m.second_se)),
                    m.distortion, m.distortion_se, hw.xi * m.norm2, sinr, rate,
                )
            )
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.csv"
    write_rows(
        path,
        (
            "ue", "t", "norm2", "norm2_se", "first_re", "first_im", "first_se",
            "interference", "interference_se", "distortion", "distortion_se",
            "noise", "sinr", "rate",
        ),
        rows,
    )
    _write_manifest(args.out, args.name, {"command": "rates-mc", "args": vars(args)})
    print(path)
    return 0


def _cmd_asymptotic(args) -> int:
    scen = _scenario_from(args)
    if scen.reduced_dim != scen.subarrays:
        raise ConfigError("asymptotic analysis needs subarray-factorized covariances")
    hw = _hardware_from(args, scen.sigma2)
    book = _book_from(args, scen)
    j = args.cell if args.cell is not None else _default_cell(scen)
    cache = build_cache(scen, hw, book)
    ts = np.asarray(book.data_times(), dtype=float)[:: args.t_stride]
    p = scen.powers
    rows = []
    for k in range(scen.K):
        co = mrc_moment_coefficients(cache, j, k, ts)
        sig = p[j, k] * co.c_norm**2
        inter = np.einsum("lk,tlk->t", p, co.quad(hw.lo_mode))
        den = inter - sig
        with np.errstate(divide="ignore"):
            vals = np.where(den > 1e-12 * np.maximum(inter, 1e-300), sig / np.maximum(den, 1e-300), math.inf)
        rate = float(np.log2(1.0 + vals).mean() * (scen.T - book.B) / scen.T)
        for i, t in enumerate(ts):
            rows.append(("inf", k, int(t), vals[i], rate, sig[i], inter[i], 0.0, 0.0))
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.csv"
    write_rows(path, _SINR_COLUMNS, rows)
    _write_manifest(args.out, args.name, {"command": "asymptotic", "args": vars(args)})
    print(path)
    return 0


def _cmd_scaling_law(args) -> int:
    exp = ScalingExponents(args.z1, args.z2, args.z3, delta_0=args.delta0)
    lo = LoMode(args.lo)
    tau = place(PlacementKind(args.pilot_place), args.block_length,
                args.pilot_length or 8).tau
    worst_t = max(
        (t for t in range(1, args.block_length + 1) if t not in set(tau)),
        key=lambda t: min(abs(t - x) for x in tau),
    )
    rep = check_scaling_law(exp, lo, t=worst_t, tau=tau)
    print(f"satisfied={rep.satisfied} margin={rep.margin:.6g} lhs={rep.lhs:.6g}")
    payload = {
        "command": "scaling-law",
        "args": vars(args),
        "satisfied": rep.satisfied,
        "margin": rep.margin,
        "lhs": rep.lhs,
        "worst_t": worst_t,
    }
    rows = []
    if args.n_grid:
        scen = _scenario_from(args)
        book = _book_from(args, scen)
        j = args.cell if args.cell is not None else _default_cell(scen)
        base = HardwareProfile(
            delta=args.delta0, kappa2=args.kappa20, xi=args.xi0 * scen.sigma2, lo_mode=lo
        )
        for n in args.n_grid:
            hw_n = scaled_profile(base, n, exp, sigma2=scen.sigma2)
            cache = build_cache(scen, hw_n, book)
            rows.extend(_sinr_rows(scen, cache, hw_n, j, n, args.t_stride))
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / f"{args.name}.csv"
        write_rows(path, _SINR_COLUMNS, rows)
        print(path)
    _write_manifest(args.out, args.name, payload)
    return 0


def _cmd_circuit(args) -> int:
    hw = profile_from_circuits(
        AdcSpec(args.adc_bits),
        LnaSpec(F=NoiseFigure.from_db(args.lna_nf_db).F),
        LoSpec(args.carrier_hz, args.symbol_time_s, args.lo_quality),
        sigma2=1.0,
        lo_mode=LoMode(args.lo),
    )
    print(f"delta={hw.delta:.6g} kappa2={hw.kappa2:.6g} xi_over_sigma2={hw.xi:.6g}")
    rows = [("delta", hw.delta), ("kappa2", hw.kappa2), ("xi_over_sigma2", hw.xi)]
    args.out.mkdir(parents=True, exist_ok=True)
    write_rows(args.out / f"{args.name}_triple.csv", ("parameter", "value"), rows)
    table = power_scaling_report(args.n_grid, args.z1, args.z2, args.z3)
    cols = tuple(table[0].keys())
    write_rows(args.out / f"{args.name}_power.csv", cols, [tuple(r[c] for c in cols) for r in table])
    _write_manifest(args.out, args.name, {"command": "circuit", "args": vars(args)})
    print(args.out / f"{args.name}_power.csv")
    return 0


def _cmd_preset(args) -> int:
    if args.which in {"fig7", "fig8", "fig9", "fig10"}:
        cfg = preset(args.which)
    else:
        path = Path(args.which)
        if not path.exists():
            raise ConfigError(f"unknown preset or missing config file: {args.which}")
        try:
            data = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparseable config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        cfg = config_from_dict(data)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides["threads"] = args.threads
    overrides["out"] = str(args.out)
    if args.drops is not None:
        overrides["scenario"] = dataclasses.replace(cfg.scenario, drops=args.drops)
    cfg = dataclasses.replace(cfg, **overrides)
    exp = cfg.experiment
    if args.n_grid:
        exp = dataclasses.replace(exp, n_grid=tuple(args.n_grid))
    if args.t_grid:
        exp = dataclasses.replace(exp, t_grid=tuple(args.t_grid))
    if args.trials is not None:
        exp = dataclasses.replace(exp, trials=args.trials)
    cfg = dataclasses.replace(cfg, experiment=exp)
    result = run(cfg)
    print(result.csv_path)
    return 0


# -- parser ----------------------------------------------------------------------


def _int_list(text: str) -> list:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hwmimo",
        description="Hardware-impaired massive MIMO uplink simulator",
    )
    parser.add_argument("--version", action="version", version=f"hwmimo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario-gen", help="generate and save a network scenario")
    _add_common(p)
    _add_scenario_source(p)
    p.add_argument("--name", default="scenario")
    p.set_defaults(fn=_cmd_scenario_gen)

    p = sub.add_parser("estimate", help="channel-estimation MSE, closed form vs Monte Carlo")
    _add_common(p)
    _add_scenario_source(p)
    _add_hardware(p)
    _add_pilots(p)
    p.add_argument("--cell", type=int, default=None)
    p.add_argument("--source-cell", type=int, default=None)
    p.add_argument("--ue", type=int, default=0)
    p.add_argument("--trials", type=int, default=20_000)
    p.add_argument("--t-stride", type=int, default=1)
    p.add_argument("--name", default="estimate")
    p.set_defaults(fn=_cmd_estimate)

    p = sub.add_parser("rates-cf", help="closed-form SINR and rates (MRC)")
    _add_common(p)
    _add_scenario_source(p)
    _add_hardware(p)
    _add_pilots(p)
    p.add_argument("--cell", type=int, default=None)
    p.add_argument("--t-stride", type=int, default=1)
    p.add_argument("--name", default="rates_cf")
    p.set_defaults(fn=_cmd_rates_cf)

    p = sub.add_parser("sweep-n", help="closed-form rates over an antenna-count grid")
    _add_common(p)
    _add_scenario_source(p)
    _add_hardware(p)
    _add_pilots(p)
    p.add_argument("--cell", type=int, default=None)
    p.add_argument("--n-grid", type=_int_list, required=True)
    p.add_argument("--t-stride", type=int, default=16)
    p.add_argument("--name", default="sweep_n")
    p.set_defaults(fn=_cmd_sweep_n)

    p = sub.add_parser("rates-mc", help="simulated SINR expectations and rates")
    _add_common(p)
    _add_scenario_source(p)
    _add_hardware(p)
    _add_pilots(p)
    p.add_argument("--cell", type=int, default=None)
    p.add_argument("--ue", type=int, default=None, help="default: all UEs of the cell")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--filter", choices=["mrc", "mmse"], default="mrc")
    p.add_argument("--t-stride", type=int, default=16)
    p.add_argument("--name", default="rates_mc")
    p.set_defaults(fn=_cmd_rates_mc)

    p = sub.add_parser("asymptotic", help="large-array SINR limits")
    _add_common(p)
    _add_scenario_source(p)
    _add_hardware(p)
    _add_pilots(p)
    p.add_argument("--cell", type=int, default=None)
    p.add_argument("--t-stride", type=int, default=16)
    p.add_argument("--name", default="asymptotic")
    p.set_defaults(fn=_cmd_asymptotic)

    p = sub.add_parser("scaling-law", help="check hardware scaling exponents")
    _add_common(p)
    _add_scenario_source(p)
    _add_pilots(p)
    p.add_argument("--z1", type=float, required=True)
    p.add_argument("--z2", type=float, required=True)
    p.add_argument("--z3", type=float, required=True)
    p.add_argument("--delta0", type=float, default=7e-5)
    p.add_argument("--kappa20", type=float, default=0.05**2)
    p.add_argument("--xi0", type=float, default=3.0, help="baseline xi in units of sigma2")
    p.add_argument("--lo", choices=["clo", "slo"], default="slo")
    p.add_argument("--cell", type=int, default=None)
    p.add_argument("--n-grid", type=_int_list, default=None)
    p.add_argument("--t-stride", type=int, default=64)
    p.add_argument("--name", default="scaling_law")
    p.set_defaults(fn=_cmd_scaling_law)

    p = sub.add_parser("circuit", help="impairment triple and power tables from circuit specs")
    _add_common(p)
    p.add_argument("--adc-bits", type=float, default=6.0)
    p.add_argument("--lna-nf-db", type=float, default=2.0)
    p.add_argument("--carrier-hz", type=float, default=2e9)
    p.add_argument("--symbol-time-s", type=float, default=1e-7)
    p.add_argument("--lo-quality", type=float, default=1e-17)
    p.add_argument("--lo", choices=["clo", "slo"], default="slo")
    p.add_argument("--z1", type=float, default=0.5)
    p.add_argument("--z2", type=float, default=0.5)
    p.add_argument("--z3", type=float, default=1.0)
    p.add_argument("--n-grid", type=_int_list, default=[2**e for e in range(0, 13, 2)])
    p.add_argument("--name", default="circuit")
    p.set_defaults(fn=_cmd_circuit)

    p = sub.add_parser("preset", help="run a built-in experiment (fig7..fig10) or a YAML config")
    _add_common(p, seed=False)
    p.add_argument("which", help="fig7 | fig8 | fig9 | fig10 | path to YAML run config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--drops", type=int, default=None)
    p.add_argument("--n-grid", type=_int_list, default=None)
    p.add_argument("--t-grid", type=_int_list, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(fn=_cmd_preset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalInvariantError as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
