"""Monte Carlo experiments: specs, scheme dispatch, CSV persistence, gain maps."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import ANALOG_DESIGNERS, SchemeId, analog_baseline, conventional_ps, optimal_digital
from .beamformer import DelayNetwork, HybridBeamformer
from .channel import build_channel, sample_scenario
from .config import Architecture, ConfigurationError, SystemConfig
from .fda import FDAParams, SolverReport, solve_fda_full, solve_fda_sub
from .hts import (
    chain_config,
    design_chains,
    digital_stage,
    hts_solve,
    pnf_design,
    robust_analog_design,
)
from .metrics import PowerModel, energy_efficiency, normalized_array_gain

SWEEP_VARIABLES = ("tx_power", "n_ttd", "t_max", "bandwidth", "none")
CSV_FIELDS = (
    "scheme", "seed", "sweep_variable", "sweep_value", "spectral_efficiency",
    "energy_efficiency", "iterations", "wall_time_s", "converged",
)


def trial_seed(master_seed: int, trial: int) -> int:
    """Stable 64-bit seed for one trial; independent of how many trials run."""
    digest = hashlib.blake2b(f"{int(master_seed)}:{int(trial)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class ExperimentSpec:
    base: SystemConfig = field(default_factory=SystemConfig)
    schemes: list = field(default_factory=lambda: [SchemeId.FDA_FULL])
    sweep_variable: str = "none"
    sweep_values: list = field(default_factory=lambda: [None])
    n_trials: int = 1
    master_seed: int = 0
    output: str | None = None
    fda: FDAParams = field(default_factory=FDAParams)
    power_model: PowerModel = field(default_factory=PowerModel)

    def __post_init__(self):
        self.schemes = [SchemeId(s) for s in self.schemes]
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigurationError(f"unknown sweep variable {self.sweep_variable!r}")
        if self.sweep_variable == "none":
            self.sweep_values = [None]
        elif not self.sweep_values:
            raise ConfigurationError("sweep needs at least one value")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be at least 1")
        for v in self.sweep_values:
            self.config_for(v)  # raises on invalid values

    def config_for(self, value) -> SystemConfig:
        var = self.sweep_variable
        if var == "none":
            return self.base
        if var == "n_ttd":
            return self.base.replace(n_ttd=int(value))
        if var == "bandwidth":
            # keep P_t / sigma^2 fixed: both scale with B
            scale = float(value) / self.base.bandwidth
            return self.base.replace(bandwidth=float(value), tx_power=self.base.tx_power * scale)
        return self.base.replace(**{var: float(value)})

    def to_dict(self) -> dict:
        return {
            "config": self.base.to_dict(),
            "schemes": [s.value for s in self.schemes],
            "sweep": {"variable": self.sweep_variable, "values": list(self.sweep_values)},
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "output": self.output,
            "fda": asdict(self.fda),
            "power_model": asdict(self.power_model),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {"config", "schemes", "sweep", "n_trials", "master_seed", "output", "fda", "power_model"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment fields: {sorted(unknown)}")
        sweep = d.get("sweep", {}) or {}
        kw = dict(
            base=SystemConfig.from_dict(d.get("config", {})),
            sweep_variable=sweep.get("variable", "none"),
            sweep_values=sweep.get("values", [None]),
            n_trials=int(d.get("n_trials", 1)),
            master_seed=int(d.get("master_seed", 0)),
            output=d.get("output"),
            fda=FDAParams(**d.get("fda", {})),
            power_model=PowerModel(**d.get("power_model", {})),
        )
        if "schemes" in d:
            kw["schemes"] = d["schemes"]
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class ResultRecord:
    scheme: str
    seed: int
    sweep_variable: str
    sweep_value: float | None
    spectral_efficiency: float
    energy_efficiency: float
    iterations: int
    wall_time_s: float
    converged: bool

    def same_result(self, other: "ResultRecord") -> bool:
        """Equality ignoring wall-clock time (NaN compares equal to NaN)."""
        a, b = asdict(self), asdict(other)
        a.pop("wall_time_s"), b.pop("wall_time_s")
        for k in a:
            x, y = a[k], b[k]
            if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                continue
            if x != y:
                return False
        return True


# -- scheme dispatch ------------------------------------------------------------------


def _with_arch(cfg: SystemConfig, arch: Architecture) -> SystemConfig:
    if cfg.architecture is arch:
        return cfg
    return cfg.replace(architecture=arch, antenna_spacing=cfg.antenna_spacing, t_max=cfg.t_max)


def pnf_init(ch, scn, cfg) -> HybridBeamformer:
    return hts_solve(ch, scn, cfg, "PNF").beamformer


def cf_init(ch, scn, cfg) -> HybridBeamformer:
    ps, _ = design_chains(scn, cfg, ANALOG_DESIGNERS[SchemeId.CF])
    delays = DelayNetwork.zeros(cfg.n_rf, cfg.n_ttd)
    dig, _ = digital_stage(ch, ps, delays, cfg)
    return HybridBeamformer(ps, delays, dig)


def run_scheme(scheme, ch, scn, cfg: SystemConfig, fda: FDAParams | None = None) -> SolverReport:
    """Run one scheme on one channel realization."""
    scheme = SchemeId(scheme)
    fda = fda or FDAParams()
    if scheme is SchemeId.OPTIMAL_DIGITAL:
        return optimal_digital(ch, cfg)[1]
    if scheme is SchemeId.FDA_FULL:
        c = _with_arch(cfg, Architecture.FULLY_CONNECTED)
        return solve_fda_full(ch, c, pnf_init(ch, scn, c), fda)
    if scheme is SchemeId.FDA_SUB:
        c = _with_arch(cfg, Architecture.SUB_CONNECTED)
        return solve_fda_sub(ch, c, pnf_init(ch, scn, c), fda)
    if scheme is SchemeId.CONVENTIONAL_PS:
        return conventional_ps(ch, cfg, cf_init(ch, scn, cfg), fda)
    if scheme is SchemeId.HTS_PNF:
        return hts_solve(ch, scn, cfg, "PNF")
    if scheme is SchemeId.HTS_ROBUST:
        return hts_solve(ch, scn, cfg, "Robust")
    return analog_baseline(scheme, ch, scn, cfg)


def scheme_config(scheme, cfg: SystemConfig) -> SystemConfig:
    """Configuration a scheme actually runs with (used for power accounting)."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.FDA_FULL:
        return _with_arch(cfg, Architecture.FULLY_CONNECTED)
    if scheme is SchemeId.FDA_SUB:
        return _with_arch(cfg, Architecture.SUB_CONNECTED)
    return cfg


def _run_task(args):
    spec_dict, sweep_index, trial = args
    spec = ExperimentSpec.from_dict(spec_dict)
    value = spec.sweep_values[sweep_index]
    cfg = spec.config_for(value)
    seed = trial_seed(spec.master_seed, trial)
    records = []
    try:
        scn = sample_scenario(seed, cfg)
        ch = build_channel(scn, cfg)
    except Exception:
        scn = ch = None
    for scheme in spec.schemes:
        t0 = time.perf_counter()
        try:
            if ch is None:
                raise RuntimeError("scenario construction failed")
            rep = run_scheme(scheme, ch, scn, cfg, spec.fda)
            se = float(rep.spectral_efficiency)
            ee = float(energy_efficiency(se, scheme_config(scheme, cfg), spec.power_model, scheme))
            it, ok = int(rep.iterations), bool(rep.converged)
        except Exception:
            se, ee, it, ok = float("nan"), float("nan"), 0, False
        records.append(
            ResultRecord(scheme.value, seed, spec.sweep_variable, None if value is None else float(value),
                         se, ee, it, time.perf_counter() - t0, ok)
        )
    return records


def _sort_key(rec: ResultRecord):
    return (rec.scheme, -math.inf if rec.sweep_value is None else rec.sweep_value, rec.seed)


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> list[ResultRecord]:
    """Every (sweep value, trial, scheme) combination; records sorted deterministically."""
    d = spec.to_dict()
    tasks = [(d, i, t) for i in range(len(spec.sweep_values)) for t in range(spec.n_trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    return sorted((r for c in chunks for r in c), key=_sort_key)


# -- CSV ------------------------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records, include_timing: bool = True) -> str:
    fields = [f for f in CSV_FIELDS if include_timing or f != "wall_time_s"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in records:
        w.writerow([_fmt(getattr(r, f)) for f in fields])
    return buf.getvalue()


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv(records))


def parse_records(text: str) -> list[ResultRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            ResultRecord(
                scheme=row["scheme"],
                seed=int(row["seed"]),
                sweep_variable=row["sweep_variable"],
                sweep_value=None if row["sweep_value"] == "" else float(row["sweep_value"]),
                spectral_efficiency=float(row["spectral_efficiency"]),
                energy_efficiency=float(row["energy_efficiency"]),
                iterations=int(row["iterations"]),
                wall_time_s=float(row.get("wall_time_s") or "nan"),
                converged=row["converged"] == "true",
            )
        )
    return out


def read_records(path) -> list[ResultRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh.read())


def summarize(records) -> dict:
    """Mean spectral/energy efficiency per (scheme, sweep value), ignoring failed runs."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.scheme, r.sweep_value), []).append(r)
    out = {}
    for key, rs in groups.items():
        se = np.array([r.spectral_efficiency for r in rs])
        ee = np.array([r.energy_efficiency for r in rs])
        out[key] = {"se": float(np.nanmean(se)), "ee": float(np.nanmean(ee)), "n": len(rs)}
    return out


# -- gain maps ---------------------------------------------------------------------------------

GAIN_MAP_DESIGNS = ("PNF", "Robust", "CF", "MCM", "MCCM", "FarFieldDPP", "NearFieldPDF")


def chain_design(name: str, theta: float, r: float, cfg: SystemConfig):
    """Single-chain analog design by name."""
    c = chain_config(cfg)
    if name == "PNF":
        return pnf_design(theta, r, c)
    if name == "Robust":
        return robust_analog_design(theta, r, c)
    if name in GAIN_MAP_DESIGNS:
        return ANALOG_DESIGNERS[SchemeId(name)](theta, r, c, 0)
    raise ValueError(f"unknown design {name!r}; choose from {GAIN_MAP_DESIGNS}")


def gain_map(name: str, theta: float, r: float, cfg: SystemConfig, n_points: int = 101):
    """Rows ``(f, theta, r, gain)`` of the normalized gain over ``[f_1, f_M]``."""
    c = chain_config(cfg)
    des = chain_design(name, theta, r, cfg)
    freqs = c.freqs
    grid = np.linspace(freqs[0], freqs[-1], n_points) if n_points > 1 else np.array([c.center_freq])
    v = des.weights(grid)
    return [(float(f), float(theta), float(r), normalized_array_gain(f, theta, r, v[i], c)) for i, f in enumerate(grid)]


def write_gain_map(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f", "theta", "r", "gain"])
        for row in rows:
            w.writerow([repr(x) for x in row])
