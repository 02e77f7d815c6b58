"""Paired-branch stimulation experiments, memory sweeps and strategy comparison.

Every seed simulates two branches from the same noise and disturbance
streams: the plant left alone and the plant under the configured strategy.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .fos_core import (FosModel, DEFAULT_DT, SimulationTrace, draw_noise, ictal_model,
                       simulate_fos)
from .io import (ConfigError, DataError, ensure_dir, ingest_eeg_csv, write_overlay_svg, write_trace_csv)
from .qp_mpc import MpcConfig, run_closed_loop
from .strategies import (BurstDisturbanceConfig, LineLengthDetector, OpenLoopConfig,
                         calibrate_threshold, generate_bursts, interictal_model,
                         open_loop_signal, run_event_triggered)
from .sysid import DegenerateDataError, identify, normalize

STRATEGIES = ("none", "open_loop", "event_triggered", "mpc")
MODEL_SOURCES = ("builtin_paper", "identified", "explicit")


@dataclass(frozen=True)
class DetectorSettings:
    window_steps: int = 40
    threshold: Optional[float] = None
    threshold_factor: float = 2.0
    refractory_steps: int = 240
    amplitude_gain: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "builtin_paper"
    model_file: Optional[str] = None
    model_normalize: bool = True
    model_A: Optional[list] = None
    model_alpha: Optional[list] = None
    model_sigma_w2: Optional[float] = None
    B: Optional[list] = None
    strategy: str = "none"
    duration_s: float = 10.0
    dt: float = DEFAULT_DT
    seeds: tuple = (0,)
    eval_start_s: float = 4.0
    mpc: MpcConfig = field(default_factory=MpcConfig)
    mpc_start_s: float = 0.0
    open_loop: OpenLoopConfig = field(default_factory=OpenLoopConfig)
    bursts_enabled: bool = True
    bursts: BurstDisturbanceConfig = field(default_factory=BurstDisturbanceConfig)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    out_dir: Optional[str] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.duration_s > 0:
            raise ConfigError(f"duration_s must be positive, got {self.duration_s}")
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed is required")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.model not in MODEL_SOURCES:
            raise ConfigError(f"model must be one of {MODEL_SOURCES}, got {self.model!r}")

    @property
    def T(self) -> int:
        return int(round(self.duration_s / self.dt))

    @property
    def eval_start(self) -> int:
        return int(round(self.eval_start_s / self.dt))


# config key -> (section, field, converter)
_KEYS = {
    "model": (None, "model", str),
    "model.file": (None, "model_file", str),
    "model.normalize": (None, "model_normalize", bool),
    "model.A": (None, "model_A", list),
    "model.alpha": (None, "model_alpha", list),
    "model.sigma_w2": (None, "model_sigma_w2", float),
    "model.B": (None, "B", list),
    "strategy": (None, "strategy", str),
    "duration_s": (None, "duration_s", float),
    "dt": (None, "dt", float),
    "seeds": (None, "seeds", None),
    "eval_start_s": (None, "eval_start_s", float),
    "out": (None, "out_dir", str),
    "mpc.p": ("mpc", "p", int),
    "mpc.P": ("mpc", "P", int),
    "mpc.M": ("mpc", "M", int),
    "mpc.q": ("mpc", "q_weight", float),
    "mpc.r": ("mpc", "r_weight", float),
    "mpc.c": ("mpc", "c", list),
    "mpc.u_min": ("mpc", "u_min", float),
    "mpc.u_max": ("mpc", "u_max", float),
    "mpc.tol": ("mpc", "tol", float),
    "mpc.max_iter": ("mpc", "max_iter", int),
    "mpc.start_s": (None, "mpc_start_s", float),
    "open_loop.waveform": ("open_loop", "waveform", str),
    "open_loop.amplitude": ("open_loop", "amplitude", float),
    "open_loop.frequency_hz": ("open_loop", "frequency_hz", float),
    "open_loop.phase": ("open_loop", "phase", float),
    "open_loop.on_s": ("open_loop", "on_duration_s", float),
    "open_loop.off_s": ("open_loop", "off_duration_s", float),
    "open_loop.start_s": ("open_loop", "start_time_s", float),
    "bursts.enabled": (None, "bursts_enabled", bool),
    "bursts.amplitudes": ("bursts", "amplitudes", tuple),
    "bursts.mean_interarrivals_s": ("bursts", "mean_interarrivals_s", tuple),
    "bursts.duration_s": ("bursts", "burst_duration_s", float),
    "bursts.timing": ("bursts", "timing", str),
    "detector.window_steps": ("detector", "window_steps", int),
    "detector.threshold": ("detector", "threshold", float),
    "detector.threshold_factor": ("detector", "threshold_factor", float),
    "detector.refractory_steps": ("detector", "refractory_steps", int),
    "detector.amplitude_gain": ("detector", "amplitude_gain", float),
}


def parse_seeds(value) -> tuple:
    """Seeds from an int, a list, or a string such as ``"0,3,10-19"``."""
    if isinstance(value, int):
        return (value,)
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    out = []
    for part in str(value).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else part[1:].split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError(f"no seeds in {value!r}")
    return tuple(out)


def config_from_dict(d: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = ExperimentConfig() if base is None else base
    top, sections = {}, {"mpc": {}, "open_loop": {}, "bursts": {}, "detector": {}}
    for key, value in d.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, name, conv = _KEYS[key]
        try:
            if key == "seeds":
                value = parse_seeds(value)
            elif conv is bool and isinstance(value, str):
                value = value.lower() in ("1", "true", "yes", "on")
            elif conv is tuple:
                value = tuple(value)
            elif conv is not None and value is not None:
                value = conv(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({e})") from None
        (sections[section] if section else top)[name] = value
    try:
        cfg = replace(
            base,
            mpc=replace(base.mpc, **sections["mpc"]),
            open_loop=replace(base.open_loop, **sections["open_loop"]),
            bursts=replace(base.bursts, **sections["bursts"]),
            detector=replace(base.detector, **sections["detector"]),
            **top,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return cfg


def build_model(cfg: ExperimentConfig) -> FosModel:
    if cfg.model == "builtin_paper":
        return ictal_model()
    if cfg.model == "explicit":
        if cfg.model_A is None or cfg.model_alpha is None:
            raise ConfigError("explicit model needs model.A and model.alpha")
        try:
            return FosModel(np.array(cfg.model_A, dtype=float), np.array(cfg.model_alpha, dtype=float),
                            0.0 if cfg.model_sigma_w2 is None else cfg.model_sigma_w2)
        except ValueError as e:
            raise ConfigError(f"invalid explicit model: {e}") from None
    if cfg.model_file is None:
        raise ConfigError("identified model needs model.file")
    data = ingest_eeg_csv(cfg.model_file)
    if cfg.model_normalize:
        data, _ = normalize(data)
    try:
        model = identify(data).model
    except DegenerateDataError as e:
        raise DataError(f"{cfg.model_file}: {e}") from None
    if cfg.model_sigma_w2 is not None:
        model = FosModel(model.A, model.alpha, cfg.model_sigma_w2)
    return model


def input_matrix(cfg: ExperimentConfig, n: int) -> np.ndarray:
    if cfg.B is None:
        return np.ones((n, 1))
    B = np.asarray(cfg.B, dtype=float)
    B = B.reshape(n, -1) if B.size % n == 0 else B
    if B.shape[0] != n:
        raise ConfigError(f"model.B must have {n} rows, got shape {B.shape}")
    return B


@dataclass
class RunMetrics:
    seed: int
    energy_uncontrolled: float
    energy_controlled: float
    energy_ratio: float
    input_energy: float
    trigger_count: int
    max_abs_input: float
    solver_warnings: int = 0


def energy(states: np.ndarray, start: int = 0) -> float:
    """Mean squared amplitude over channels and steps from ``start`` on."""
    seg = np.asarray(states)[start:]
    return float(np.mean(seg ** 2)) if seg.size else 0.0


def _ratio(controlled: float, uncontrolled: float) -> float:
    if uncontrolled > 0:
        return controlled / uncontrolled
    return 1.0 if controlled == 0 else float("inf")


def compute_metrics(seed: int, unc: SimulationTrace, con: SimulationTrace, start: int) -> RunMetrics:
    eu, ec = energy(unc.states, start), energy(con.states, start)
    return RunMetrics(
        seed=seed,
        energy_uncontrolled=eu,
        energy_controlled=ec,
        energy_ratio=_ratio(ec, eu),
        input_energy=energy(con.inputs, start),
        trigger_count=sum(1 for _, lab in con.events if lab == "trigger"),
        max_abs_input=float(np.abs(con.inputs).max(initial=0.0)),
        solver_warnings=sum(1 for _, lab in con.events if lab == "solver_not_converged"),
    )


def run_seed(cfg: ExperimentConfig, seed: int, model: FosModel, threshold: Optional[float] = None):
    """Both branches of one seed; returns ``(metrics, uncontrolled, controlled)``."""
    T, n, dt = cfg.T, model.n, cfg.dt
    B = input_matrix(cfg, n)
    noise = draw_noise(model.sigma_w2, T, n, seed)
    if cfg.bursts_enabled:
        d, burst_events = generate_bursts(replace(cfg.bursts, seed=seed, dt=dt), T, n)
    else:
        d, burst_events = np.zeros((T, n)), []
    unc = simulate_fos(model, B, None, d, T, noise=noise, dt=dt)
    unc.events = list(burst_events)

    s = cfg.strategy
    if s == "none":
        con = simulate_fos(model, B, None, d, T, noise=noise, dt=dt)
    elif s == "open_loop":
        u = open_loop_signal(cfg.open_loop, T, dt)
        con = simulate_fos(model, B, np.repeat(u[:, None], B.shape[1], axis=1), d, T,
                           noise=noise, dt=dt)
        start = int(round(cfg.open_loop.start_time_s / dt))
        if start < T:
            con.events.append((start, "stim_start"))
    elif s == "event_triggered":
        det = cfg.detector
        detector = LineLengthDetector(det.window_steps, threshold, det.refractory_steps)
        con = run_event_triggered(model, detector, cfg.open_loop, d, T, B=B, noise=noise,
                                  amplitude_gain=det.amplitude_gain, dt=dt)
    else:
        con = run_closed_loop(model, cfg.mpc, B, d, T, noise=noise,
                              start_step=int(round(cfg.mpc_start_s / dt)), dt=dt)
    con.events = sorted(list(burst_events) + con.events, key=lambda e: e[0])
    return compute_metrics(seed, unc, con, cfg.eval_start), unc, con


def detector_threshold(cfg: ExperimentConfig) -> Optional[float]:
    if cfg.strategy != "event_triggered":
        return None
    det = cfg.detector
    if det.threshold is not None:
        return det.threshold
    return calibrate_threshold(interictal_model(), det.window_steps, T=cfg.T,
                               factor=det.threshold_factor)


def _write_seed(out_dir: str, tag: str, m: RunMetrics, unc, con) -> None:
    base = os.path.join(out_dir, f"{tag}seed{m.seed}")
    write_trace_csv(base + "_uncontrolled.csv", unc)
    write_trace_csv(base + "_controlled.csv", con)
    with open(base + "_metrics.json", "w") as f:
        json.dump(asdict(m), f, indent=2, sort_keys=True)
        f.write("\n")
    write_overlay_svg(base + ".svg", unc.time, unc.states, con.states, con.inputs,
                      title=f"seed {m.seed}")


def _seed_job(args):
    cfg, seed, model, threshold, out_dir, tag = args
    m, unc, con = run_seed(cfg, seed, model, threshold)
    if out_dir is not None:
        _write_seed(out_dir, tag, m, unc, con)
    return m


def aggregate(metrics: Sequence[RunMetrics]) -> dict:
    r = np.array([m.energy_ratio for m in metrics])
    return {
        "n_seeds": len(metrics),
        "median_energy_ratio": float(np.median(r)),
        "mean_energy_ratio": float(np.mean(r)),
        "max_abs_input": float(max(m.max_abs_input for m in metrics)),
        "total_triggers": int(sum(m.trigger_count for m in metrics)),
        "solver_warnings": int(sum(m.solver_warnings for m in metrics)),
    }


def write_metrics_csv(path, metrics: Sequence[RunMetrics]) -> None:
    names = list(asdict(metrics[0]).keys())
    with open(path, "w") as f:
        f.write(",".join(names) + "\n")
        for m in metrics:
            row = asdict(m)
            f.write(",".join(str(row[k]) if isinstance(row[k], int) else f"{row[k]:.12g}"
                             for k in names) + "\n")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list
    summary: dict


def run_experiment(cfg: ExperimentConfig, model: Optional[FosModel] = None, jobs: int = 1,
                   tag: str = "") -> ExperimentResult:
    """Run every seed, writing traces, per-seed metrics and plots when
    ``cfg.out_dir`` is set."""
    model = build_model(cfg) if model is None else model
    threshold = detector_threshold(cfg)
    out_dir = ensure_dir(cfg.out_dir) if cfg.out_dir else None
    args = [(cfg, s, model, threshold, out_dir, tag) for s in cfg.seeds]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            metrics = list(ex.map(_seed_job, args))
    else:
        metrics = [_seed_job(a) for a in args]
    summary = aggregate(metrics)
    if threshold is not None:
        summary["detector_threshold"] = threshold
    if out_dir is not None:
        write_metrics_csv(os.path.join(out_dir, f"{tag}metrics.csv"), metrics)
        with open(os.path.join(out_dir, f"{tag}summary.json"), "w") as f:
            json.dump({"strategy": cfg.strategy, **summary}, f, indent=2, sort_keys=True)
            f.write("\n")
    return ExperimentResult(cfg, metrics, summary)


def sweep_memory(cfg: ExperimentConfig, p_values: Sequence[int], jobs: int = 1,
                 model: Optional[FosModel] = None) -> list:
    """Closed-loop runs for each memory length ``p`` on the same seeds.

    Returns rows ``{"p", "median_energy_ratio", "mean_energy_ratio", "wall_time"}``.
    Writes ``sweep.csv`` (deterministic columns only) and ``sweep_timing.json``.
    """
    model = build_model(cfg) if model is None else model
    rows = []
    for p in p_values:
        run_cfg = replace(cfg, strategy="mpc", mpc=replace(cfg.mpc, p=int(p)), out_dir=None)
        t0 = time.perf_counter()
        res = run_experiment(run_cfg, model=model, jobs=jobs)
        rows.append({"p": int(p), "median_energy_ratio": res.summary["median_energy_ratio"],
                     "mean_energy_ratio": res.summary["mean_energy_ratio"],
                     "solver_warnings": res.summary["solver_warnings"],
                     "wall_time": time.perf_counter() - t0})
    if cfg.out_dir:
        out = ensure_dir(cfg.out_dir)
        with open(os.path.join(out, "sweep.csv"), "w") as f:
            f.write("p,median_energy_ratio,mean_energy_ratio\n")
            for r in rows:
                f.write(f"{r['p']},{r['median_energy_ratio']:.12g},{r['mean_energy_ratio']:.12g}\n")
        with open(os.path.join(out, "sweep_timing.json"), "w") as f:
            json.dump({str(r["p"]): r["wall_time"] for r in rows}, f, indent=2)
            f.write("\n")
    return rows


def compare(cfg: ExperimentConfig, strategies: Sequence[str] = ("open_loop", "event_triggered", "mpc"),
            jobs: int = 1, model: Optional[FosModel] = None) -> dict:
    """Run several strategies on the same seeds; returns ``{strategy: ExperimentResult}``."""
    model = build_model(cfg) if model is None else model
    results = {}
    for s in strategies:
        run_cfg = replace(cfg, strategy=s)
        results[s] = run_experiment(run_cfg, model=model, jobs=jobs, tag=f"{s}_")
    if cfg.out_dir:
        with open(os.path.join(cfg.out_dir, "compare.csv"), "w") as f:
            f.write("strategy,median_energy_ratio,mean_energy_ratio,max_abs_input,total_triggers\n")
            for s, r in results.items():
                sm = r.summary
                f.write(f"{s},{sm['median_energy_ratio']:.12g},{sm['mean_energy_ratio']:.12g},"
                        f"{sm['max_abs_input']:.12g},{sm['total_triggers']}\n")
    return results


PRESETS = {
    "simulate": {"strategy": "none"},
    "experiment1": {"strategy": "open_loop"},
    "experiment2": {"strategy": "event_triggered"},
    "experiment3": {"strategy": "mpc"},
}
