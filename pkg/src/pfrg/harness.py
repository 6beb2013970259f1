"""Scenario files, experiment orchestration and result emission.

A scenario is one INI file::

    [scenario]
    name = fig3-left-lm
    algorithm = pf-rg-lm
    n_slots = 2000000
    seed = 0

    [steps]
    a = 5e-4
    b = 5e-6

    [channel]
    model = fading
    distances_m = 100, 200
    tx_power_mw = 100

    [ues]
    theta_min_mbps = 0, 60

Optional sections: ``[region]`` (boundary sweep), ``[ode]``, ``[oracle]`` and
``[checks]`` (extra pass bands such as ``theta_0 = 13, 20``).  Finite-state
channels use ``model = finite-state`` with ``states_mbps = 400 100 | 300 200``
and either ``probabilities`` (i.i.d.) or ``transition`` rows separated by ``|``.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from pfrg.channel import FadingChannelModel, MarkovChannelModel, RadioConfig, dbm_from_mw
from pfrg.ode import MeanField, OdeTrajectory, integrate_coupled
from pfrg.oracle import InfeasibleError, PrimalDualSolution, solve_finite_state, solve_region
from pfrg.region import RegionBoundaryEstimate, default_weight_sweep, estimate_average_region
from pfrg.scheduler import ALGORITHMS, RunRecord, SchedulerConfig, run

OUT_DIR_ENV = "PFRG_OUT_DIR"

# agreement tolerances used by the per-experiment flags
GUARANTEE_TOL_MBPS = 3.0
ORACLE_TOL_MBPS = 3.0
ODE_THETA_TOL_MBPS = 1.0
ODE_NU_TOL = 5e-4
FAR_FROM_OPTIMUM_MBPS = 5.0


class ScenarioError(ValueError):
    """Bad scenario file; names the offending field and line when known."""


@dataclass(frozen=True)
class ChannelSpec:
    model: str = "fading"
    distances_m: tuple = ()
    radio: RadioConfig = RadioConfig()
    states_mbps: tuple = ()
    probabilities: tuple | None = None
    transition: tuple | None = None

    @property
    def n_ues(self) -> int:
        return len(self.distances_m) if self.model == "fading" else len(self.states_mbps[0])

    def build(self):
        if self.model == "fading":
            return FadingChannelModel(self.radio, self.distances_m)
        if self.transition is not None:
            return MarkovChannelModel(self.states_mbps, self.transition)
        return MarkovChannelModel.iid(self.states_mbps, self.probabilities)

    def to_dict(self) -> dict:
        if self.model == "fading":
            return {"model": self.model, "distances_m": list(self.distances_m), **dataclasses.asdict(self.radio)}
        out = {"model": self.model, "states_mbps": [list(s) for s in self.states_mbps]}
        if self.transition is not None:
            out["transition"] = [list(r) for r in self.transition]
        else:
            out["probabilities"] = list(self.probabilities)
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    algorithm: str
    channel: ChannelSpec
    theta_min_mbps: tuple
    step_a: float
    step_b: float | None = None
    nu_max: float = 1.0
    tau_max: float = 1e6
    tail_fraction: float = 0.2
    n_slots: int = 10**6
    seed: int = 0
    decimate: int | None = None
    violation_tol_mbps: float = 1.0
    region_weights: int | None = None
    region_slots: int = 200_000
    ode_dt_fast: float = 0.01
    ode_dt_slow: float = 1e-4
    ode_t_end: float = 1.0
    ode_tol_rest: float = 0.01
    mc_samples: int = 50_000
    checks: dict = field(default_factory=dict)
    out_dir: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(f"[scenario] algorithm: expected one of {ALGORITHMS}, got {self.algorithm!r}")
        if len(self.theta_min_mbps) != self.channel.n_ues:
            raise ScenarioError(f"[ues] theta_min_mbps: expected {self.channel.n_ues} values, "
                                f"got {len(self.theta_min_mbps)}")
        if self.algorithm == "pf-rg-lm":
            if self.step_b is None:
                raise ScenarioError("[steps] b: required for pf-rg-lm")
            if self.step_b > self.step_a:
                raise ScenarioError(f"[steps] b: must not exceed a ({self.step_b} > {self.step_a})")
            if self.step_b > self.step_a / 10:
                warnings.warn(f"{self.name}: b = {self.step_b} is not much smaller than a = {self.step_a}",
                              stacklevel=3)

    @property
    def scheduler_config(self) -> SchedulerConfig:
        return SchedulerConfig(self.algorithm, self.step_a, self.step_b, self.nu_max, self.tau_max,
                               self.tail_fraction, self.decimate, self.violation_tol_mbps)

    def with_overrides(self, **kw) -> "Scenario":
        kw = {k: v for k, v in kw.items() if v is not None}
        fading = kw.pop("fading", None)
        sc = dataclasses.replace(self, **kw)
        if fading is not None and sc.channel.model == "fading":
            sc = dataclasses.replace(sc, channel=dataclasses.replace(
                sc.channel, radio=dataclasses.replace(sc.channel.radio, fading=fading)))
        return sc

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "channel"}
        d["theta_min_mbps"] = list(self.theta_min_mbps)
        d["channel"] = self.channel.to_dict()
        d["checks"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.checks.items()}
        return d


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SCHEMA = {
    "scenario": {"name": str, "algorithm": str, "n_slots": int, "seed": int, "decimate": int,
                 "tail_fraction": float, "violation_tol_mbps": float, "out_dir": str},
    "steps": {"a": float, "b": float, "nu_max": float, "tau_max": float},
    "channel": {"model": str, "distances_m": "floats", "tx_power_mw": float, "tx_power_dbm": float,
                "bandwidth_hz": float, "noise_floor_dbm": float, "attenuation_at_1m_db": float,
                "pathloss_exponent": float, "slot_duration_s": float, "fading_truncation_db": float,
                "fading": str, "states_mbps": "rows", "probabilities": "floats", "transition": "rows"},
    "ues": {"theta_min_mbps": "floats"},
    "region": {"weights": int, "slots": int},
    "ode": {"dt_fast": float, "dt_slow": float, "t_end": float, "tol_rest": float, "mc_samples": int},
    "oracle": {"mc_samples": int},
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` in ``section`` (of the section header when ``key`` is None)."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def _convert(kind, raw):
    if kind == "floats":
        return tuple(float(v) for v in re.split(r"[,\s]+", raw.strip()) if v)
    if kind == "rows":
        return tuple(tuple(float(v) for v in re.split(r"[,\s]+", row.strip()) if v) for row in raw.split("|"))
    if kind is int:
        return int(float(raw)) if re.fullmatch(r"[0-9.]+e[0-9]+", raw.strip(), re.I) else int(raw)
    return kind(raw.strip())


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: parse error: {exc}") from exc

    vals: dict = {}
    for sec in cp.sections():
        if sec not in _SCHEMA and sec != "checks":
            raise ScenarioError(f"{source}:{_line_of(text, sec) or '?'}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            where = f"{source}:{_line_of(text, sec, key) or '?'}: [{sec}] {key}"
            if sec == "checks":
                try:
                    vals[("checks", key)] = _convert("floats", raw)
                except ValueError:
                    raise ScenarioError(f"{where}: expected numbers, got {raw!r}") from None
                continue
            kind = _SCHEMA[sec].get(key)
            if kind is None:
                raise ScenarioError(f"{where}: unknown field")
            try:
                vals[(sec, key)] = _convert(kind, raw)
            except ValueError:
                raise ScenarioError(f"{where}: cannot parse {raw!r}") from None

    def get(sec, key, default=None, required=False):
        if (sec, key) in vals:
            return vals[(sec, key)]
        if required:
            raise ScenarioError(f"{source}: [{sec}] {key}: required field missing")
        return default

    model = get("channel", "model", "fading")
    try:
        if model == "fading":
            if ("channel", "tx_power_mw") in vals and ("channel", "tx_power_dbm") in vals:
                raise ScenarioError(f"{source}: [channel] give tx_power_mw or tx_power_dbm, not both")
            radio_kw = {k: vals[("channel", k)] for k in
                        ("bandwidth_hz", "noise_floor_dbm", "attenuation_at_1m_db", "pathloss_exponent",
                         "slot_duration_s", "fading_truncation_db", "fading", "tx_power_dbm")
                        if ("channel", k) in vals}
            if ("channel", "tx_power_mw") in vals:
                radio_kw["tx_power_dbm"] = dbm_from_mw(vals[("channel", "tx_power_mw")])
            radio = RadioConfig(**radio_kw)
            dist = get("channel", "distances_m", required=True)
            if any(d <= 0 for d in dist):
                raise ScenarioError(f"{source}: [channel] distances_m: must be positive")
            channel = ChannelSpec("fading", dist, radio)
        elif model == "finite-state":
            states = get("channel", "states_mbps", required=True)
            trans = get("channel", "transition")
            probs = get("channel", "probabilities")
            if (trans is None) == (probs is None):
                raise ScenarioError(f"{source}: [channel] give exactly one of probabilities or transition")
            channel = ChannelSpec("finite-state", states_mbps=states, probabilities=probs, transition=trans)
            channel.build()  # validates the kernel
        else:
            raise ScenarioError(f"{source}: [channel] model: expected 'fading' or 'finite-state', got {model!r}")
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{source}: [channel] {exc}") from exc

    thmin = get("ues", "theta_min_mbps", required=True)
    if any(t < 0 for t in thmin):
        raise ScenarioError(f"{source}: [ues] theta_min_mbps: guarantees must be nonnegative")
    checks = {k: v for (s, k), v in vals.items() if s == "checks"}
    ode_mc = get("ode", "mc_samples")
    orc_mc = get("oracle", "mc_samples")
    if ode_mc is not None and orc_mc is not None and ode_mc != orc_mc:
        raise ScenarioError(f"{source}: [ode] mc_samples and [oracle] mc_samples must match")
    algorithm = get("scenario", "algorithm", required=True)
    kw = dict(
        name=get("scenario", "name", Path(source).stem), algorithm=algorithm, channel=channel,
        theta_min_mbps=thmin, step_a=get("steps", "a", required=True), step_b=get("steps", "b"),
        nu_max=get("steps", "nu_max", 1.0), tau_max=get("steps", "tau_max", 1e6),
        tail_fraction=get("scenario", "tail_fraction", 0.2), n_slots=get("scenario", "n_slots", 10**6),
        seed=get("scenario", "seed", 0), decimate=get("scenario", "decimate"),
        violation_tol_mbps=get("scenario", "violation_tol_mbps", 1.0),
        region_weights=get("region", "weights"), region_slots=get("region", "slots", 200_000),
        ode_dt_fast=get("ode", "dt_fast", 0.01), ode_dt_slow=get("ode", "dt_slow", 1e-4),
        ode_t_end=get("ode", "t_end", 1.0), ode_tol_rest=get("ode", "tol_rest", 0.01),
        mc_samples=ode_mc or orc_mc or 50_000, checks=checks, out_dir=get("scenario", "out_dir"),
    )
    try:
        sc = Scenario(**kw)
        sc.scheduler_config  # noqa: B018 - run the scheduler's own validation
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return parse_scenario(path.read_text(), str(path))


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("pfrg.presets").iterdir() if p.name.endswith(".ini"))


def load_preset(name: str) -> Scenario:
    res = resources.files("pfrg.presets") / f"{name}.ini"
    if not res.is_file():
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_scenario(res.read_text(), f"preset:{name}")


def resolve(config: str) -> Scenario:
    """A scenario from a file path or a preset name."""
    if Path(config).is_file():
        return load_scenario(config)
    if config in preset_names():
        return load_preset(config)
    raise FileNotFoundError(f"{config!r} is neither a scenario file nor a preset")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    scenario: Scenario
    run: RunRecord | None = None
    oracle: PrimalDualSolution | None = None
    oracle_error: str | None = None
    ode: OdeTrajectory | None = None
    boundary: RegionBoundaryEstimate | None = None
    flags: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def summary(self) -> dict:
        out = {"scenario": self.scenario.to_dict(), "flags": self.flags, "passed": self.passed}
        if self.run is not None:
            out["run"] = self.run.summary()
        if self.oracle is not None:
            out["oracle"] = self.oracle.to_dict()
        if self.oracle_error:
            out["oracle_error"] = self.oracle_error
        if self.ode is not None:
            out["ode_rest"] = {"theta": self.ode.theta_final.tolist(), "nu": self.ode.nu_final.tolist(),
                               "converged": self.ode.converged, "t_final": float(self.ode.times[-1])}
        return out


def output_dir(scenario: Scenario | None = None, override=None) -> Path:
    d = override or (scenario.out_dir if scenario else None) or os.environ.get(OUT_DIR_ENV) or "results"
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def mean_field(scenario: Scenario, model=None) -> MeanField:
    model = scenario.channel.build() if model is None else model
    return MeanField(model, scenario.theta_min_mbps, mc_samples=scenario.mc_samples, seed=scenario.seed,
                     nu_max=scenario.nu_max)


def solve_oracle(scenario: Scenario, field_: MeanField | None = None) -> PrimalDualSolution:
    if scenario.channel.model == "finite-state":
        model = scenario.channel.build()
        return solve_finite_state(model.states, model.stationary, scenario.theta_min_mbps)
    field_ = mean_field(scenario) if field_ is None else field_
    return solve_region(field_.region, scenario.theta_min_mbps)


def sweep_region(scenario: Scenario, model=None) -> RegionBoundaryEstimate:
    model = scenario.channel.build() if model is None else model
    W = default_weight_sweep(model.n_ues, scenario.region_weights, seed=scenario.seed)
    return estimate_average_region(model, W, n_slots=scenario.region_slots, seed=scenario.seed)


def solve_ode(scenario: Scenario, field_: MeanField | None = None) -> OdeTrajectory:
    field_ = mean_field(scenario) if field_ is None else field_
    M = field_.n_ues
    return integrate_coupled(np.zeros(M), np.zeros(M), field_, dt_fast=scenario.ode_dt_fast,
                             dt_slow=scenario.ode_dt_slow, t_end=scenario.ode_t_end, tol_rest=scenario.ode_tol_rest)


def _flags(sc: Scenario, res: ExperimentResult) -> dict:
    flags = {}
    thmin = np.asarray(sc.theta_min_mbps)
    if res.run is not None:
        th = res.run.tail_mean_theta
        guaranteed = thmin > 0
        if guaranteed.any():
            flags["guarantees_met"] = bool(np.all(th[guaranteed] >= thmin[guaranteed] - GUARANTEE_TOL_MBPS))
        if res.oracle is not None and sc.algorithm != "pf-rg-tc":
            target = res.oracle.theta_star
            flags["oracle_agreement"] = bool(np.max(np.abs(th - target)) <= ORACLE_TOL_MBPS)
    if res.oracle_error:
        flags["oracle_feasible"] = False
    if res.ode is not None and res.oracle is not None:
        flags["ode_oracle_theta"] = bool(np.max(np.abs(res.ode.theta_final - res.oracle.theta_star))
                                         < ODE_THETA_TOL_MBPS)
        flags["ode_oracle_nu"] = bool(np.max(np.abs(res.ode.nu_final - res.oracle.nu_star)) < ODE_NU_TOL)
    for key, band in sc.checks.items():
        m = re.fullmatch(r"(theta|bias)_(\d+)", key)
        if not m or res.run is None:
            raise ScenarioError(f"[checks] {key}: expected theta_<i> or bias_<i>")
        series = res.run.tail_mean_theta if m.group(1) == "theta" else res.run.tail_mean_bias
        v = series[int(m.group(2))]
        lo, hi = (band[0], band[0]) if len(band) == 1 else band[:2]
        if m.group(1) == "bias" and lo == hi == 0.0:
            flags[f"check_{key}"] = bool(np.all(res.run.bias[:, int(m.group(2))] == 0.0)
                                         and res.run.final_bias[int(m.group(2))] == 0.0)
        else:
            flags[f"check_{key}"] = bool(lo <= v <= hi)
    return flags


def run_experiment(scenario: Scenario, out_dir=None, region: bool = True, oracle: bool = True,
                   ode: bool = True, write: bool = True) -> ExperimentResult:
    """Scheduler run, region sweep, oracle solve and coupled-ODE limit on one channel model."""
    sc = scenario
    model = sc.channel.build()
    res = ExperimentResult(sc)
    try:
        res.run = run(sc.algorithm, model, sc.theta_min_mbps, sc.scheduler_config, n_slots=sc.n_slots, seed=sc.seed)
        field_ = mean_field(sc, model) if (oracle or ode) else None
        if region:
            res.boundary = sweep_region(sc, model)
        if oracle:
            try:
                res.oracle = solve_oracle(sc, field_)
            except InfeasibleError as exc:
                res.oracle_error = str(exc)
        if ode and res.oracle_error is None:
            res.ode = solve_ode(sc, field_)
    except Exception as exc:
        raise type(exc)(f"scenario {sc.name}: {exc}") from exc
    res.flags = _flags(sc, res)
    if write:
        d = output_dir(sc, out_dir)
        res.run.to_csv(d / f"{sc.name}_timeseries.csv")
        res.files.append(d / f"{sc.name}_timeseries.csv")
        if res.boundary is not None:
            res.boundary.to_csv(d / f"{sc.name}_boundary.csv")
            res.files.append(d / f"{sc.name}_boundary.csv")
        if res.ode is not None:
            res.ode.to_csv(d / f"{sc.name}_ode.csv")
            res.files.append(d / f"{sc.name}_ode.csv")
        with open(d / f"{sc.name}_summary.json", "w") as fh:
            json.dump(res.summary(), fh, indent=2, sort_keys=True)
        res.files.append(d / f"{sc.name}_summary.json")
    return res


def compare_algorithms(scenarios, oracle_solution: PrimalDualSolution | None = None) -> list[dict]:
    """Tail statistics per algorithm on a shared channel and guarantee vector.

    Returns one row per scenario with tail-mean throughput, tail-mean bias, bias
    standard deviation and the largest deviation from the oracle optimum.
    """
    scenarios = list(scenarios)
    if not scenarios:
        return []
    ref = scenarios[0]
    for sc in scenarios[1:]:
        if sc.channel != ref.channel:
            raise ValueError(f"{sc.name}: channel differs from {ref.name}")
        if tuple(sc.theta_min_mbps) != tuple(ref.theta_min_mbps):
            raise ValueError(f"{sc.name}: guarantees differ from {ref.name}")
    if oracle_solution is None:
        try:
            oracle_solution = solve_oracle(ref)
        except InfeasibleError:
            oracle_solution = None
    model = ref.channel.build()
    rows = []
    for sc in scenarios:
        rec = run(sc.algorithm, model, sc.theta_min_mbps, sc.scheduler_config, n_slots=sc.n_slots, seed=sc.seed)
        dev = None if oracle_solution is None else float(np.max(np.abs(rec.tail_mean_theta
                                                                        - oracle_solution.theta_star)))
        rows.append({
            "name": sc.name, "algorithm": sc.algorithm, "step_a": sc.step_a, "step_b": sc.step_b,
            "tail_mean_theta": rec.tail_mean_theta.tolist(), "tail_mean_bias": rec.tail_mean_bias.tolist(),
            "tail_std_bias": rec.tail_std_bias.tolist(), "oracle_deviation_mbps": dev,
            "far_from_optimum": None if dev is None else dev > FAR_FROM_OPTIMUM_MBPS,
        })
    return rows


def format_table(rows) -> str:
    head = f"{'name':<22}{'algorithm':<11}{'tail theta (Mbps)':<26}{'tail bias':<24}{'bias std':<24}{'dev':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        th = " ".join(f"{v:7.2f}" for v in r["tail_mean_theta"])
        bi = " ".join(f"{v:.4g}" for v in r["tail_mean_bias"])
        sd = " ".join(f"{v:.4g}" for v in r["tail_std_bias"])
        dev = "" if r["oracle_deviation_mbps"] is None else f"{r['oracle_deviation_mbps']:.2f}"
        lines.append(f"{r['name']:<22}{r['algorithm']:<11}{th:<26}{bi:<24}{sd:<24}{dev:>7}")
    return "\n".join(lines)
