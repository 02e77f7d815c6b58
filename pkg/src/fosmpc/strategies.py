"""Disturbance bursts, open-loop stimulation and line-length triggering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fos_core import FosModel, FosPlant, SimulationTrace, draw_noise, DEFAULT_DT, ICTAL_SIGMA_W2

__all__ = [
    "BurstDisturbanceConfig",
    "OpenLoopConfig",
    "LineLengthDetector",
    "ricker_pulse",
    "burst_arrivals",
    "generate_bursts",
    "open_loop_input",
    "open_loop_signal",
    "line_length",
    "calibrate_threshold",
    "run_event_triggered",
    "interictal_model",
]


@dataclass(frozen=True)
class BurstDisturbanceConfig:
    """Two classes of wavelet bursts arriving as independent Poisson processes.

    ``timing`` selects how ``mean_interarrivals_s`` is read: ``"mean_interarrival"``
    (seconds between arrivals) or ``"rate"`` (arrivals per second).
    """

    amplitudes: tuple = (0.25, 1.0)
    mean_interarrivals_s: tuple = (0.2, 1.0)
    burst_duration_s: float = 0.125
    dt: float = DEFAULT_DT
    seed: int = 0
    timing: str = "mean_interarrival"

    def __post_init__(self):
        if len(self.amplitudes) != len(self.mean_interarrivals_s):
            raise ValueError("amplitudes and mean_interarrivals_s must have equal length")
        if self.burst_duration_s <= 0 or self.dt <= 0:
            raise ValueError("burst_duration_s and dt must be positive")
        if any(m <= 0 for m in self.mean_interarrivals_s):
            raise ValueError("mean_interarrivals_s entries must be positive")
        if self.timing not in ("mean_interarrival", "rate"):
            raise ValueError(f"unknown timing {self.timing!r}")

    @property
    def burst_steps(self) -> int:
        return max(1, int(round(self.burst_duration_s / self.dt)))


@dataclass(frozen=True)
class OpenLoopConfig:
    waveform: str = "sinusoid"
    amplitude: float = 0.5
    frequency_hz: float = 16.0
    phase: float = 0.0
    on_duration_s: float = 1.0
    off_duration_s: float = 0.5
    start_time_s: float = 4.0

    def __post_init__(self):
        if self.waveform not in ("sinusoid", "biphasic_rect"):
            raise ValueError(f"unknown waveform {self.waveform!r}")
        if self.on_duration_s <= 0 or self.off_duration_s <= 0:
            raise ValueError("on/off durations must be positive")
        if self.start_time_s < 0:
            raise ValueError("start_time_s must be >= 0")


@dataclass(frozen=True)
class LineLengthDetector:
    window_steps: int = 40
    threshold: float = 1.0
    refractory_steps: int = 240

    def __post_init__(self):
        if self.window_steps < 2:
            raise ValueError("window_steps must be >= 2")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.refractory_steps < 0:
            raise ValueError("refractory_steps must be >= 0")


def ricker_pulse(n_steps: int) -> np.ndarray:
    """Mexican-hat pulse of ``n_steps`` samples, peak 1 at the centre."""
    t = np.arange(n_steps) - (n_steps - 1) / 2.0
    a = n_steps / 8.0
    r = (t / a) ** 2
    pulse = (1.0 - r) * np.exp(-r / 2.0)
    return pulse / np.abs(pulse).max()


def burst_arrivals(cfg: BurstDisturbanceConfig, T: int) -> list:
    """Arrival steps per burst class, before disjointness pruning."""
    rng = np.random.default_rng([cfg.seed, 0xB0057])
    horizon = T * cfg.dt
    out = []
    for m in cfg.mean_interarrivals_s:
        mean = 1.0 / m if cfg.timing == "rate" else m
        steps = []
        t = 0.0
        if np.isfinite(mean):
            while True:
                t += rng.exponential(mean)
                if t >= horizon:
                    break
                steps.append(int(t / cfg.dt))
        out.append(steps)
    return out


def generate_bursts(cfg: BurstDisturbanceConfig, T: int, n: int = 4):
    """Disturbance array ``(T, n)`` and ``(step, label)`` events of kept bursts.

    Arrivals that land while another burst is active are dropped, so at most
    one burst is active at any step.
    """
    arrivals = burst_arrivals(cfg, T)
    merged = sorted((s, c) for c, steps in enumerate(arrivals) for s in steps)
    L = cfg.burst_steps
    pulse = ricker_pulse(L)
    d = np.zeros(T)
    events = []
    busy_until = -1
    for step, c in merged:
        if step < busy_until:
            continue
        end = min(T, step + L)
        d[step:end] = cfg.amplitudes[c] * pulse[:end - step]
        busy_until = step + L
        events.append((step, f"burst_{cfg.amplitudes[c]:g}"))
    return np.repeat(d[:, None], n, axis=1), events


def _waveform(cfg: OpenLoopConfig, t: float, amplitude: float) -> float:
    if cfg.waveform == "sinusoid":
        return amplitude * np.sin(2.0 * np.pi * cfg.frequency_hz * t + cfg.phase)
    frac = (cfg.frequency_hz * t + cfg.phase / (2.0 * np.pi)) % 1.0
    return amplitude if frac < 0.5 else -amplitude


def _cycle_value(cfg: OpenLoopConfig, offset: int, dt: float, amplitude: float) -> float:
    on = int(round(cfg.on_duration_s / dt))
    cycle = on + int(round(cfg.off_duration_s / dt))
    i = offset % cycle
    return _waveform(cfg, i * dt, amplitude) if i < on else 0.0


def open_loop_input(cfg: OpenLoopConfig, step: int, dt: float = DEFAULT_DT) -> float:
    """Scalar stimulus at ``step``.

    Start, on and off durations are rounded to whole steps so the on/off
    pattern repeats exactly.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    start = int(round(cfg.start_time_s / dt))
    if step < start:
        return 0.0
    return _cycle_value(cfg, step - start, dt, cfg.amplitude)


def open_loop_signal(cfg: OpenLoopConfig, T: int, dt: float = DEFAULT_DT) -> np.ndarray:
    return np.array([open_loop_input(cfg, k, dt) for k in range(T)])


def line_length(window) -> float:
    """Sum of absolute first differences, averaged over channels."""
    w = np.asarray(window, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] < 2:
        raise ValueError(f"line length needs at least 2 samples, got {w.shape[0]}")
    return float(np.abs(np.diff(w, axis=0)).sum(axis=0).mean())


def _sliding_line_length(states: np.ndarray, window_steps: int) -> np.ndarray:
    inc = np.abs(np.diff(states, axis=0)).mean(axis=1)
    c = np.concatenate([[0.0], np.cumsum(inc)])
    return c[window_steps - 1:] - c[:len(c) - window_steps + 1]


def interictal_model() -> FosModel:
    """Stable stand-in for the inter-ictal regime: ictal coupling shifted by -0.1 I."""
    from .fos_core import ICTAL_A, ICTAL_ALPHA
    return FosModel(ICTAL_A - 0.1 * np.eye(4), ICTAL_ALPHA, ICTAL_SIGMA_W2)


def calibrate_threshold(model: Optional[FosModel] = None, window_steps: int = 40,
                        T: int = 1600, seed: int = 12345, factor: float = 2.0) -> float:
    """``factor`` times the median sliding line length of an unforced run."""
    from .fos_core import simulate_fos
    model = interictal_model() if model is None else model
    tr = simulate_fos(model, np.zeros((model.n, 1)), T=T, seed=seed)
    return factor * float(np.median(_sliding_line_length(tr.states, window_steps)))


def run_event_triggered(model: FosModel, detector: LineLengthDetector, ol_cfg: OpenLoopConfig,
                        disturbance: Optional[np.ndarray] = None, T: int = 1600, seed: int = 0,
                        B=None, noise: Optional[np.ndarray] = None, amplitude_gain: float = 2.0,
                        dt: float = DEFAULT_DT) -> SimulationTrace:
    """Open-loop stimulation cycles launched by line-length threshold crossings.

    Each step the detector scores the trailing window of the controlled
    trajectory. A crossing starts one on/off cycle of ``ol_cfg`` scaled by
    ``amplitude_gain`` unless a cycle is still running or the refractory
    period since the last trigger has not elapsed.
    """
    n = model.n
    B = np.ones((n, 1)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    if disturbance is None:
        disturbance = np.zeros((T, n))
    disturbance = np.asarray(disturbance, dtype=float)
    if disturbance.shape != (T, n):
        raise ValueError(f"disturbance must have shape {(T, n)}, got {disturbance.shape}")
    if noise is None:
        noise = draw_noise(model.sigma_w2, T, n, seed)
    plant = FosPlant(model, B, capacity=T)
    on = int(round(ol_cfg.on_duration_s / dt))
    cycle = on + int(round(ol_cfg.off_duration_s / dt))
    amp = amplitude_gain * ol_cfg.amplitude
    W = detector.window_steps

    states = np.zeros((T, n))
    inputs = np.zeros((T, B.shape[1]))
    events = []
    states[0] = plant.state
    last_trigger = None
    for k in range(T):
        active = last_trigger is not None and k - last_trigger < cycle
        if k >= W - 1 and not active:
            ready = last_trigger is None or k - last_trigger >= detector.refractory_steps
            if ready and line_length(states[k - W + 1:k + 1]) > detector.threshold:
                last_trigger = k
                events.append((k, "trigger"))
        if last_trigger is not None and k - last_trigger < cycle:
            inputs[k] = _cycle_value(ol_cfg, k - last_trigger, dt, amp)
        if k + 1 < T:
            states[k + 1] = plant.step(inputs[k], disturbance[k], noise[k])
    return SimulationTrace(dt, states, inputs, disturbance.copy(), events)
