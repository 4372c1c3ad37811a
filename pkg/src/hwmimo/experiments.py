"""Experiment orchestration behind the CLI: run configurations, the four
built-in presets, deterministic fan-out over drops, and CSV/manifest output.

A run produces one long-format CSV (columns: experiment, N, T, drop, ue,
metric, value, stderr) plus a JSON manifest holding the fully resolved
configuration; re-running the manifest's config with the same seed gives a
byte-identical CSV at any thread count.
"""

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import build_cache
from .model import HardwareProfile, LoMode, Scenario, conventional_profile
from .montecarlo import FilterKind, McConfig, mc_rate
from .pilots import PilotBook, PlacementKind, dft_book, place, temporal_book
from .rates import (
    ScalingExponents,
    mrc_moment_coefficients,
    scaled_profile,
    sinr_trajectory_from_coefficients,
)
from .scenario_gen import (
    CENTER_CELL,
    SHADOW_STD_DB,
    build_layout,
    drop_users,
    link_gains,
    load_scenario,
    make_scenario,
    power_control,
)


class ConfigError(ValueError):
    """Unusable run configuration (maps to CLI exit code 2)."""


RESULT_COLUMNS = ("experiment", "N", "T", "drop", "ue", "metric", "value", "stderr")

# reference impairment triple derived from the 6-bit-ADC / 2-dB-LNA /
# free-running-LO circuit example
REFERENCE_KAPPA = 0.0156
REFERENCE_XI_OVER_SIGMA2 = 1.58
REFERENCE_DELTA = 1.58e-4


@dataclass(frozen=True)
class HardwareVariant:
    """One named hardware configuration of a run; ``lo`` is irrelevant for
    the ideal variant (drift-free branches coincide)."""

    label: str
    ideal: bool = False
    delta: float = 0.0
    kappa2: float = 0.0
    xi_over_sigma2: float = 1.0
    lo: LoMode = LoMode.CLO
    exponents: tuple | None = None  # (z1, z2, z3) scaling of the triple with N

    def profile(self, sigma2: float, N: int | None = None) -> HardwareProfile:
        if self.ideal:
            return conventional_profile(sigma2)
        hw = HardwareProfile(
            delta=self.delta, kappa2=self.kappa2, xi=self.xi_over_sigma2 * sigma2, lo_mode=self.lo
        )
        if self.exponents is None or N is None:
            return hw
        z1, z2, z3 = self.exponents
        return scaled_profile(hw, N, ScalingExponents(z1, z2, z3), sigma2=sigma2)


@dataclass(frozen=True)
class ScenarioSpec:
    """Where scenarios come from: a saved file or the layout generator."""

    file: str | None = None
    deployments: tuple = ("distributed",)
    n_antennas: int = 128
    snr_db: float = 5.0
    T: int = 500
    drops: int = 1
    shadow_std_db: float = SHADOW_STD_DB
    sigma2: float = 1.0


@dataclass(frozen=True)
class PilotSpec:
    books: tuple = ("dft",)
    placements: tuple = ("beginning",)
    length: int | None = None  # default: K


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "sweep-n"  # sweep-n | asymptotics | scaling | sweep-t | rates-mc
    n_grid: tuple = ()
    t_grid: tuple = ()
    trials: int = 10_000
    filter_kind: FilterKind = FilterKind.MRC
    include_asymptote: bool = False


@dataclass(frozen=True)
class RunConfig:
    name: str
    seed: int
    scenario: ScenarioSpec
    hardware: tuple
    pilots: PilotSpec
    experiment: ExperimentSpec
    threads: int = 1
    out: str = "."


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate_config(cfg: RunConfig) -> None:
    _require(bool(cfg.hardware), "at least one hardware variant is required")
    labels = [h.label for h in cfg.hardware]
    _require(len(set(labels)) == len(labels), "hardware variant labels must be unique")
    _require(cfg.experiment.kind in {"sweep-n", "asymptotics", "scaling", "sweep-t", "rates-mc"},
             f"unknown experiment kind {cfg.experiment.kind!r}")
    if cfg.experiment.kind in {"sweep-n", "asymptotics", "scaling"}:
        _require(bool(cfg.experiment.n_grid), "n_grid must be non-empty")
        _require(list(cfg.experiment.n_grid) == sorted(set(cfg.experiment.n_grid)),
                 "n_grid must be sorted and duplicate-free")
    if cfg.experiment.kind == "sweep-t":
        _require(bool(cfg.experiment.t_grid), "t_grid must be non-empty")
        _require(list(cfg.experiment.t_grid) == sorted(set(cfg.experiment.t_grid)),
                 "t_grid must be sorted and duplicate-free")
    for b in cfg.pilots.books:
        _require(b in {"temporal", "dft"}, f"unknown pilot book {b!r}")
    for p in cfg.pilots.placements:
        _require(p in {k.value for k in PlacementKind}, f"unknown placement {p!r}")
    for d in cfg.scenario.deployments:
        _require(d in {"colocated", "distributed"}, f"unknown deployment {d!r}")
    _require(cfg.scenario.drops >= 1, "drops must be >= 1")
    _require(cfg.threads >= 1, "threads must be >= 1")


# -- presets -------------------------------------------------------------------


def preset(name: str) -> RunConfig:
    """Built-in experiment configurations at desk scale.

    fig7: deployment and oscillator comparison, rate vs N at the reference
    impairment triple.  fig8: asymptotic behavior on the distributed layout
    with both pilot books, evaluated up to N = 10^6 plus the exact limits.
    fig9: hardware scaling laws (baselines kappa0 = 0.05, xi0 = 3 sigma^2,
    delta0 = 7e-5, 15 dB SNR) for exponent sets on and off the admissible
    region.  fig10: rate vs coherence-block length for pilots at the
    beginning vs the middle of the block.
    """
    ref = dict(
        delta=REFERENCE_DELTA,
        kappa2=REFERENCE_KAPPA**2,
        xi_over_sigma2=REFERENCE_XI_OVER_SIGMA2,
    )
    if name == "fig7":
        return RunConfig(
            name="fig7",
            seed=1,
            scenario=ScenarioSpec(deployments=("colocated", "distributed"),
                                  n_antennas=512, snr_db=5.0, T=500, drops=100),
            hardware=(
                HardwareVariant("ideal", ideal=True),
                HardwareVariant("impaired-clo", lo=LoMode.CLO, **ref),
                HardwareVariant("impaired-slo", lo=LoMode.SLO, **ref),
            ),
            pilots=PilotSpec(books=("dft",), placements=("beginning",), length=8),
            experiment=ExperimentSpec(kind="sweep-n", n_grid=(16, 32, 64, 128, 256, 400, 512)),
        )
    if name == "fig8":
        return RunConfig(
            name="fig8",
            seed=2,
            scenario=ScenarioSpec(deployments=("distributed",),
                                  n_antennas=2**20, snr_db=5.0, T=500, drops=50),
            hardware=(
                HardwareVariant("ideal", ideal=True),
                HardwareVariant("impaired-clo", lo=LoMode.CLO, **ref),
                HardwareVariant("impaired-slo", lo=LoMode.SLO, **ref),
            ),
            pilots=PilotSpec(books=("dft", "temporal"), placements=("beginning",), length=8),
            experiment=ExperimentSpec(
                kind="asymptotics",
                n_grid=tuple(4**e for e in range(2, 10)) + (10**6,),
                include_asymptote=True,
            ),
        )
    if name == "fig9":
        base = dict(delta=7e-5, kappa2=0.05**2, xi_over_sigma2=3.0)
        return RunConfig(
            name="fig9",
            seed=3,
            scenario=ScenarioSpec(deployments=("distributed",),
                                  n_antennas=2**20, snr_db=15.0, T=500, drops=10),
            hardware=(
                HardwareVariant("ideal", ideal=True),
                HardwareVariant("fixed-clo", lo=LoMode.CLO, **base),
                HardwareVariant("fixed-slo", lo=LoMode.SLO, **base),
                HardwareVariant("law-clo", lo=LoMode.CLO, exponents=(0.5, 0.5, 0.0), **base),
                HardwareVariant("law-slo", lo=LoMode.SLO, exponents=(0.45, 0.45, 1.0), **base),
                HardwareVariant("violating-clo", lo=LoMode.CLO, exponents=(1.0, 1.0, 0.0), **base),
                HardwareVariant("violating-slo", lo=LoMode.SLO, exponents=(0.6, 0.0, 0.0), **base),
            ),
            pilots=PilotSpec(books=("dft",), placements=("beginning",), length=8),
            experiment=ExperimentSpec(kind="scaling", n_grid=tuple(4**e for e in range(2, 11))),
        )
    if name == "fig10":
        return RunConfig(
            name="fig10",
            seed=4,
            scenario=ScenarioSpec(deployments=("distributed",),
                                  n_antennas=240, snr_db=5.0, T=2000, drops=10),
            hardware=(
                HardwareVariant("ideal", ideal=True),
                HardwareVariant("impaired-clo", lo=LoMode.CLO, **ref),
                HardwareVariant("impaired-slo", lo=LoMode.SLO, **ref),
            ),
            pilots=PilotSpec(books=("dft",), placements=("beginning", "middle"), length=8),
            experiment=ExperimentSpec(
                kind="sweep-t",
                t_grid=(50, 100, 150, 200, 300, 400, 500, 750, 1000, 1250, 1500, 1750, 2000),
            ),
        )
    raise ConfigError(f"unknown preset {name!r}; expected fig7, fig8, fig9 or fig10")


# -- scenario and pilot material ------------------------------------------------


def _book_for(scenario: Scenario, kind: str, placement: str, length: int | None) -> PilotBook:
    B = length if length is not None else scenario.K
    pl = place(PlacementKind(placement), scenario.T, B)
    if kind == "temporal":
        return temporal_book(scenario.powers, pl)
    return dft_book(scenario.powers, pl)


def _drop_scenario(cfg: RunConfig, deployment: str, drop_index: int) -> Scenario:
    spec = cfg.scenario
    if spec.file:
        return load_scenario(spec.file)
    layout = build_layout(deployment, spec.n_antennas)
    drop = drop_users(layout, cfg.seed, drop_index)
    gains = link_gains(layout, drop, cfg.seed, drop_index, spec.shadow_std_db)
    rho = 10.0 ** (spec.snr_db / 10.0) * spec.sigma2
    return make_scenario(layout, gains, power_control(gains, rho), spec.T, spec.sigma2)


def _rates_all_ues(
    scenario: Scenario,
    hw: HardwareProfile,
    book: PilotBook,
    cell: int,
    los,
    mults,
) -> dict:
    """Closed-form per-UE rates for each multiplicity and requested
    oscillator topology, sharing one coefficient pass per UE (the tensors
    carry both branches); drift-free profiles collapse to a single channel
    use.  Returns {lo: (len(mults), K) array}."""
    los = list(los)
    cache = build_cache(scenario, hw, book)
    ts = np.asarray(book.data_times(), dtype=float)
    if ts.size == 0:
        return {lo: np.zeros((len(mults), scenario.K)) for lo in los}
    eval_ts = ts[:1] if hw.delta == 0.0 else ts
    out = {lo: np.empty((len(mults), scenario.K)) for lo in los}
    for k in range(scenario.K):
        co = mrc_moment_coefficients(cache, cell, k, eval_ts)
        for lo in los:
            for i, mult in enumerate(mults):
                traj = sinr_trajectory_from_coefficients(co, scenario, hw, int(mult), lo)
                s = np.full(ts.size, traj.sinr[0]) if hw.delta == 0.0 else traj.sinr
                out[lo][i, k] = float(np.log2(1.0 + s).sum() / scenario.T)
    return out


def _variant_groups(hardware) -> list:
    """Group hardware variants that share the impairment triple (and its
    growth exponents) so they also share moment coefficients."""
    groups: dict = {}
    for hv in hardware:
        key = (hv.ideal, hv.delta, hv.kappa2, hv.xi_over_sigma2, hv.exponents)
        groups.setdefault(key, []).append(hv)
    return list(groups.values())


def _asymptotic_rates(scenario, hw, book, cell: int, los) -> dict:
    """Per-UE rates built from the large-array SINR limits, per topology."""
    los = list(los)
    cache = build_cache(scenario, hw, book)
    ts = np.asarray(book.data_times(), dtype=float)
    eval_ts = ts[:1] if hw.delta == 0.0 else ts
    p = scenario.powers
    out = {lo: np.empty(scenario.K) for lo in los}
    for k in range(scenario.K):
        co = mrc_moment_coefficients(cache, cell, k, eval_ts)
        sig = p[cell, k] * co.c_norm**2
        for lo in los:
            inter = np.einsum("lk,tlk->t", p, co.quad(lo))
            den = inter - sig
            with np.errstate(divide="ignore"):
                s = np.where(
                    den > 1e-12 * np.maximum(inter, 1e-300), sig / np.maximum(den, 1e-300), np.inf
                )
            s_full = np.full(ts.size, s[0]) if hw.delta == 0.0 else s
            out[lo][k] = float(np.log2(1.0 + s_full).sum() / scenario.T)
    return out


# -- experiment kinds -----------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return format(x, ".12g")
    return str(x)


def _job_sweep_n(cfg: RunConfig, deployment: str, drop: int) -> list:
    scen = _drop_scenario(cfg, deployment, drop)
    cell = CENTER_CELL if scen.L == 25 else 0
    mults = [n // scen.subarrays for n in cfg.experiment.n_grid]
    for n in cfg.experiment.n_grid:
        if n % scen.subarrays or n < scen.subarrays:
            raise ConfigError(f"N={n} is not a multiple of the subarray count {scen.subarrays}")
    rows = []
    for book_kind in cfg.pilots.books:
        for placement in cfg.pilots.placements:
            book = _book_for(scen, book_kind, placement, cfg.pilots.length)
            per_variant = {}
            for variants in _variant_groups(cfg.hardware):
                hw = variants[0].profile(scen.sigma2)
                rates = _rates_all_ues(scen, hw, book, cell, {hv.lo for hv in variants}, mults)
                for hv in variants:
                    per_variant[hv.label] = rates[hv.lo]
            for hv in cfg.hardware:
                label = f"{cfg.name}:{deployment}:{hv.label}:{book_kind}:{placement}"
                for i, n in enumerate(cfg.experiment.n_grid):
                    for k in range(scen.K):
                        rows.append((label, n, scen.T, drop, k, "rate", per_variant[hv.label][i, k], ""))
    return rows


def _job_asymptotics(cfg: RunConfig, deployment: str, drop: int) -> list:
    rows = _job_sweep_n(cfg, deployment, drop)
    if not cfg.experiment.include_asymptote:
        return rows
    scen = _drop_scenario(cfg, deployment, drop)
    cell = CENTER_CELL if scen.L == 25 else 0
    for book_kind in cfg.pilots.books:
        for placement in cfg.pilots.placements:
            book = _book_for(scen, book_kind, placement, cfg.pilots.length)
            per_variant = {}
            for variants in _variant_groups(cfg.hardware):
                hw = variants[0].profile(scen.sigma2)
                vals = _asymptotic_rates(scen, hw, book, cell, {hv.lo for hv in variants})
                for hv in variants:
                    per_variant[hv.label] = vals[hv.lo]
            for hv in cfg.hardware:
                label = f"{cfg.name}:{deployment}:{hv.label}:{book_kind}:{placement}"
                for k in range(scen.K):
                    rows.append((label, 0, scen.T, drop, k, "rate_asymptotic", per_variant[hv.label][k], ""))
    return rows


def _job_scaling(cfg: RunConfig, deployment: str, drop: int) -> list:
    scen = _drop_scenario(cfg, deployment, drop)
    cell = CENTER_CELL if scen.L == 25 else 0
    rows = []
    for book_kind in cfg.pilots.books:
        for placement in cfg.pilots.placements:
            book = _book_for(scen, book_kind, placement, cfg.pilots.length)
            per_variant = {hv.label: {} for hv in cfg.hardware}
            for variants in _variant_groups(cfg.hardware):
                for n in cfg.experiment.n_grid:
                    hw = variants[0].profile(scen.sigma2, N=n)  # triple grows with N
                    rates = _rates_all_ues(
                        scen, hw, book, cell, {hv.lo for hv in variants}, [n // scen.subarrays]
                    )
                    for hv in variants:
                        per_variant[hv.label][n] = rates[hv.lo]
            for hv in cfg.hardware:
                label = f"{cfg.name}:{deployment}:{hv.label}:{book_kind}:{placement}"
                for n in cfg.experiment.n_grid:
                    for k in range(scen.K):
                        rows.append((label, n, scen.T, drop, k, "rate", per_variant[hv.label][n][0, k], ""))
    return rows


def _job_sweep_t(cfg: RunConfig, deployment: str, drop: int) -> list:
    base = _drop_scenario(cfg, deployment, drop)
    cell = CENTER_CELL if base.L == 25 else 0
    rows = []
    for T in cfg.experiment.t_grid:
        scen = dataclasses.replace(base, T=int(T))
        for book_kind in cfg.pilots.books:
            for placement in cfg.pilots.placements:
                book = _book_for(scen, book_kind, placement, cfg.pilots.length)
                per_variant = {}
                for variants in _variant_groups(cfg.hardware):
                    hw = variants[0].profile(scen.sigma2)
                    rates = _rates_all_ues(
                        scen, hw, book, cell, {hv.lo for hv in variants}, [scen.multiplicity]
                    )
                    for hv in variants:
                        per_variant[hv.label] = rates[hv.lo]
                for hv in cfg.hardware:
                    label = f"{cfg.name}:{deployment}:{hv.label}:{book_kind}:{placement}"
                    for k in range(scen.K):
                        rows.append((label, scen.N, T, drop, k, "rate", per_variant[hv.label][0, k], ""))
    return rows


def _job_rates_mc(cfg: RunConfig, deployment: str, drop: int) -> list:
    scen = _drop_scenario(cfg, deployment, drop)
    cell = CENTER_CELL if scen.L == 25 else 0
    rows = []
    for book_kind in cfg.pilots.books:
        for placement in cfg.pilots.placements:
            book = _book_for(scen, book_kind, placement, cfg.pilots.length)
            for hv in cfg.hardware:
                hw = hv.profile(scen.sigma2)
                label = f"{cfg.name}:{deployment}:{hv.label}:{book_kind}:{placement}"
                for k in range(scen.K):
                    rep = mc_rate(
                        scen, hw, book, cfg.experiment.filter_kind,
                        McConfig(trials=cfg.experiment.trials, seed=cfg.seed + drop),
                        cell, k,
                    )
                    rows.append((label, scen.N, scen.T, drop, k, "rate_mc", rep.rate, ""))
    return rows


_JOBS = {
    "sweep-n": _job_sweep_n,
    "asymptotics": _job_asymptotics,
    "scaling": _job_scaling,
    "sweep-t": _job_sweep_t,
    "rates-mc": _job_rates_mc,
}


def _mark_t_maxima(rows) -> list:
    """Summary rows marking the preferable block length per curve: the T
    whose drop-and-UE-averaged rate is largest."""
    acc: dict = {}
    for (label, n, T, _drop, _ue, metric, value, _se) in rows:
        if metric != "rate":
            continue
        acc.setdefault((label, n), {}).setdefault(T, []).append(value)
    marks = []
    for (label, n), per_t in acc.items():
        curve = {T: float(np.mean(v)) for T, v in per_t.items()}
        best = max(sorted(curve), key=lambda T: curve[T])
        marks.append((label, n, best, -1, -1, "rate_max_at_T", curve[best], ""))
    return marks


@dataclass(frozen=True, eq=False)
class RunResult:
    csv_path: Path
    manifest_path: Path
    rows: list


def run(cfg: RunConfig) -> RunResult:
    """Execute a run configuration: fan out independent (deployment, drop)
    jobs, assemble rows in deterministic order and write CSV + manifest."""
    validate_config(cfg)
    job = _JOBS[cfg.experiment.kind]
    tasks = [(dep, drop) for dep in cfg.scenario.deployments for drop in range(cfg.scenario.drops)]

    def work(args):
        dep, drop = args
        return job(cfg, dep, drop)

    if cfg.threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            chunks = list(pool.map(work, tasks))
    else:
        chunks = [work(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    if cfg.experiment.kind == "sweep-t":
        rows.extend(_mark_t_maxima(rows))

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{cfg.name}.csv"
    write_rows(csv_path, RESULT_COLUMNS, rows)
    manifest_path = out_dir / f"{cfg.name}_manifest.json"
    manifest = {
        "name": cfg.name,
        "seed": cfg.seed,
        "version": __version__,
        "config": config_to_dict(cfg),
        "outputs": [csv_path.name],
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(csv_path=csv_path, manifest_path=manifest_path, rows=rows)


def write_rows(path: Path, columns, rows) -> None:
    """Plain deterministic CSV: '.' decimals, no locale, 'inf' for infinities."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for hv in d["hardware"]:
        hv["lo"] = str(hv["lo"].value if isinstance(hv["lo"], LoMode) else hv["lo"])
    d["experiment"]["filter_kind"] = str(
        d["experiment"]["filter_kind"].value
        if isinstance(d["experiment"]["filter_kind"], FilterKind)
        else d["experiment"]["filter_kind"]
    )
    return d


def config_from_dict(data: dict) -> RunConfig:
    """Inverse of :func:`config_to_dict`, with light schema checking."""
    try:
        scen = data.get("scenario", {})
        hw = data.get("hardware", [])
        pil = data.get("pilots", {})
        expd = data.get("experiment", {})
        variants = tuple(
            HardwareVariant(
                label=h["label"],
                ideal=bool(h.get("ideal", False)),
                delta=float(h.get("delta", 0.0)),
                kappa2=float(h.get("kappa2", 0.0)),
                xi_over_sigma2=float(h.get("xi_over_sigma2", 1.0)),
                lo=LoMode(h.get("lo", "clo")),
                exponents=tuple(h["exponents"]) if h.get("exponents") else None,
            )
            for h in hw
        )
        cfg = RunConfig(
            name=str(data.get("name", "run")),
            seed=int(data.get("seed", 0)),
            threads=int(data.get("threads", 1)),
            out=str(data.get("out", ".")),
            scenario=ScenarioSpec(
                file=scen.get("file"),
                deployments=tuple(scen.get("deployments", ("distributed",))),
                n_antennas=int(scen.get("n_antennas", 128)),
                snr_db=float(scen.get("snr_db", 5.0)),
                T=int(scen.get("T", 500)),
                drops=int(scen.get("drops", 1)),
                shadow_std_db=float(scen.get("shadow_std_db", SHADOW_STD_DB)),
                sigma2=float(scen.get("sigma2", 1.0)),
            ),
            hardware=variants,
            pilots=PilotSpec(
                books=tuple(pil.get("books", ("dft",))),
                placements=tuple(pil.get("placements", ("beginning",))),
                length=pil.get("length"),
            ),
            experiment=ExperimentSpec(
                kind=str(expd.get("kind", "sweep-n")),
                n_grid=tuple(int(n) for n in expd.get("n_grid", ())),
                t_grid=tuple(int(t) for t in expd.get("t_grid", ())),
                trials=int(expd.get("trials", 10_000)),
                filter_kind=FilterKind(expd.get("filter_kind", "mrc")),
                include_asymptote=bool(expd.get("include_asymptote", False)),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad run configuration: {exc}") from exc
    validate_config(cfg)
    return cfg
