"""Discrete-time linear fractional-order systems.

A model ``Delta^alpha x[k+1] = A x[k] + w[k]`` is expanded with
Grunwald-Letnikov weights into an autoregression over the whole state
history, which can be truncated to a finite MVAR(p) model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "FosModel",
    "GlCoefficients",
    "MvarModel",
    "SimulationTrace",
    "FosPlant",
    "gl_coefficients",
    "fos_to_mvar",
    "lag_weights",
    "draw_noise",
    "simulate_fos",
    "simulate_mvar",
    "ICTAL_A",
    "ICTAL_ALPHA",
    "ICTAL_SIGMA_W2",
    "DEFAULT_DT",
    "ictal_model",
]

# Parameters identified from ictal EEG (4 channels, 160 Hz).
ICTAL_A = np.array(
    [
        [0.0402, 0.0604, -0.0040, -0.0450],
        [0.0340, -0.0571, 0.0742, 0.0701],
        [-0.0119, -0.0032, -0.0105, 0.0078],
        [-0.0335, 0.0165, -0.0009, 0.0453],
    ]
)
ICTAL_ALPHA = np.array([0.6606, 0.7973, 1.0670, 0.6977])
ICTAL_SIGMA_W2 = 0.2
DEFAULT_DT = 1.0 / 160.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FosModel:
    """Linear FOS ``Delta^alpha x[k+1] = A x[k] + w[k]`` with ``w ~ N(0, sigma_w2 I)``."""

    A: np.ndarray
    alpha: np.ndarray
    sigma_w2: float = 0.0

    def __post_init__(self):
        A = _readonly(np.atleast_2d(self.A))
        alpha = _readonly(np.atleast_1d(self.alpha).ravel())
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if alpha.shape[0] != A.shape[0]:
            raise ValueError(
                f"alpha has {alpha.shape[0]} entries but A is {A.shape[0]}x{A.shape[0]}"
            )
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0) or np.any(alpha > 2):
            raise ValueError(f"alpha entries must lie in (0, 2], got {alpha}")
        if not np.isfinite(self.sigma_w2) or self.sigma_w2 < 0:
            raise ValueError(f"sigma_w2 must be >= 0, got {self.sigma_w2}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma_w2", float(self.sigma_w2))

    @property
    def n(self) -> int:
        return self.A.shape[0]


def ictal_model() -> FosModel:
    return FosModel(ICTAL_A, ICTAL_ALPHA, ICTAL_SIGMA_W2)


@dataclass(frozen=True)
class GlCoefficients:
    """``psi[i, j]`` is the Grunwald-Letnikov weight of channel ``i`` at lag ``j``."""

    psi: np.ndarray
    max_lag: int


def gl_coefficients(alpha, max_lag: int) -> GlCoefficients:
    """Grunwald-Letnikov weights ``psi(alpha, j) = (-1)^j binom(alpha, j)``.

    Uses the recursion ``psi(j) = psi(j-1) (j - 1 - alpha) / j``, which stays
    finite for long lag tables where factorials would overflow.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float)).ravel()
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
        raise ValueError(f"alpha entries must be finite and positive, got {alpha}")
    if max_lag < 0:
        raise ValueError(f"max_lag must be >= 0, got {max_lag}")
    psi = np.empty((alpha.size, max_lag + 1))
    psi[:, 0] = 1.0
    for j in range(1, max_lag + 1):
        psi[:, j] = psi[:, j - 1] * (j - 1 - alpha) / j
    return GlCoefficients(_readonly(psi), int(max_lag))


def lag_weights(alpha, n_lags: int) -> np.ndarray:
    """Diagonal of the MVAR lag matrices excluding ``A``.

    Row ``j`` holds ``-psi(alpha, j + 1)``; row 0 is therefore ``alpha``.
    """
    psi = gl_coefficients(alpha, n_lags).psi
    return -psi[:, 1:].T.copy()


@dataclass(frozen=True)
class MvarModel:
    """``x[k+1] = sum_j A_j x[k-j] + w[k]`` with ``lag_matrices[j] = A_j``."""

    lag_matrices: np.ndarray
    sigma_w2: float = 0.0

    def __post_init__(self):
        L = _readonly(np.asarray(self.lag_matrices, dtype=float))
        if L.ndim != 3 or L.shape[1] != L.shape[2] or L.shape[0] < 1:
            raise ValueError(f"lag_matrices must have shape (p, n, n), got {L.shape}")
        object.__setattr__(self, "lag_matrices", L)

    @property
    def p(self) -> int:
        return self.lag_matrices.shape[0]

    @property
    def n(self) -> int:
        return self.lag_matrices.shape[1]


def fos_to_mvar(model: FosModel, p: int) -> MvarModel:
    """Truncate the FOS history expansion to ``p`` lags."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    w = lag_weights(model.alpha, p)
    lags = np.zeros((p, model.n, model.n))
    for j in range(p):
        lags[j] = np.diag(w[j])
    lags[0] += model.A
    return MvarModel(lags, model.sigma_w2)


@dataclass
class SimulationTrace:
    """States, inputs and disturbances of one run, one row per time step."""

    dt: float
    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    events: list = field(default_factory=list)

    def __post_init__(self):
        T = self.states.shape[0]
        if self.inputs.shape[0] != T or self.disturbances.shape[0] != T:
            raise ValueError(
                "states, inputs and disturbances must share the leading dimension; got "
                f"{self.states.shape}, {self.inputs.shape}, {self.disturbances.shape}"
            )

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.T) * self.dt


def draw_noise(sigma_w2: float, T: int, n: int, seed: int) -> np.ndarray:
    """Process noise ``w[0..T-1]``; a pure function of ``seed``."""
    rng = np.random.default_rng(seed)
    return np.sqrt(sigma_w2) * rng.standard_normal((T, n))


class FosPlant:
    """Step-by-step FOS plant owning its state history.

    ``memory_cap=None`` keeps the full history (exact GL expansion); an integer
    cap uses lags ``0..cap-1`` only. States before the initial one are zero.
    """

    def __init__(self, model: FosModel, B, memory_cap: Optional[int] = None, x0=None,
                 capacity: int = 1024):
        if memory_cap is not None and memory_cap < 1:
            raise ValueError(f"memory_cap must be >= 1, got {memory_cap}")
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[0] != model.n:
            raise ValueError(f"B has {B.shape[0]} rows, model has n={model.n}")
        self.model = model
        self.B = B
        self.memory_cap = memory_cap
        self._A0 = model.A + np.diag(model.alpha)
        n_w = capacity if memory_cap is None else memory_cap
        self._w = lag_weights(model.alpha, max(n_w, 1))
        self._hist = np.zeros((max(capacity, 1), model.n))
        self._k = 0
        self._hist[0] = 0.0 if x0 is None else np.asarray(x0, dtype=float)

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def k(self) -> int:
        return self._k

    @property
    def state(self) -> np.ndarray:
        return self._hist[self._k].copy()

    def history(self, length: int) -> np.ndarray:
        """Most recent ``length`` states, newest first, zero-padded."""
        out = np.zeros((length, self.model.n))
        m = min(length, self._k + 1)
        out[:m] = self._hist[self._k::-1][:m]
        return out

    def _grow(self):
        self._hist = np.concatenate([self._hist, np.zeros_like(self._hist)])
        if self.memory_cap is None:
            self._w = lag_weights(self.model.alpha, self._hist.shape[0])

    def step(self, u, d, w) -> np.ndarray:
        k = self._k
        if k + 1 >= self._hist.shape[0]:
            self._grow()
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.n_u,):
            raise ValueError(f"input must have shape ({self.n_u},), got {u.shape}")
        x_next = self._A0 @ self._hist[k] + self.B @ u + d + w
        n_lags = k if self.memory_cap is None else min(k, self.memory_cap - 1)
        if n_lags > 0:
            past = self._hist[k - 1::-1][:n_lags] if k - 1 >= 0 else None
            x_next += np.einsum("jn,jn->n", self._w[1:n_lags + 1], past)
        self._k = k + 1
        self._hist[k + 1] = x_next
        return x_next


def _as_input_fn(input_fn, n_u: int) -> Callable[[int], np.ndarray]:
    if input_fn is None:
        zero = np.zeros(n_u)
        return lambda k: zero
    if callable(input_fn):
        return input_fn
    U = np.asarray(input_fn, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    return lambda k: U[k]


def simulate_fos(
    model: FosModel,
    B,
    input_fn=None,
    disturbance: Optional[np.ndarray] = None,
    T: int = 1600,
    seed: int = 0,
    memory_cap: Optional[int] = None,
    x0=None,
    noise: Optional[np.ndarray] = None,
    dt: float = DEFAULT_DT,
) -> SimulationTrace:
    """Simulate ``Delta^alpha x[k+1] = A x[k] + B u[k] + w[k] + d[k]``.

    ``input_fn`` is a callable ``step -> input`` or a ``(T, n_u)`` array.
    ``noise`` overrides the seeded draw, which lets paired runs share a stream.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    plant = FosPlant(model, B, memory_cap=memory_cap, x0=x0, capacity=T)
    n, n_u = model.n, plant.n_u
    if disturbance is None:
        disturbance = np.zeros((T, n))
    disturbance = np.asarray(disturbance, dtype=float)
    if disturbance.shape != (T, n):
        raise ValueError(f"disturbance must have shape {(T, n)}, got {disturbance.shape}")
    if noise is None:
        noise = draw_noise(model.sigma_w2, T, n, seed)
    elif noise.shape != (T, n):
        raise ValueError(f"noise must have shape {(T, n)}, got {noise.shape}")
    get_u = _as_input_fn(input_fn, n_u)

    states = np.zeros((T, n))
    inputs = np.zeros((T, n_u))
    states[0] = plant.state
    for k in range(T):
        u = np.atleast_1d(np.asarray(get_u(k), dtype=float))
        if u.shape != (n_u,):
            raise ValueError(f"input at step {k} has shape {u.shape}, expected ({n_u},)")
        inputs[k] = u
        if k + 1 < T:
            states[k + 1] = plant.step(u, disturbance[k], noise[k])
    return SimulationTrace(dt, states, inputs, disturbance.copy())


def simulate_mvar(mvar: MvarModel, B, inputs: np.ndarray, x_hist: Sequence = (),
                  noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Direct MVAR recursion; returns states ``x[1..T]`` for ``T = len(inputs)``.

    ``x_hist`` lists the current and past states newest first; missing entries are zero.
    """
    p, n = mvar.p, mvar.n
    B = np.atleast_2d(np.asarray(B, dtype=float))
    inputs = np.asarray(inputs, dtype=float).reshape(len(inputs), -1)
    T = inputs.shape[0]
    buf = np.zeros((p + T, n))
    init = np.asarray(x_hist, dtype=float).reshape(-1, n) if len(x_hist) else np.zeros((0, n))
    m = min(p, init.shape[0])
    # buf is oldest-first; buf[p-1] is the current state
    buf[p - m:p] = init[:m][::-1]
    for k in range(T):
        t = p - 1 + k
        x = B @ inputs[k]
        for j in range(p):
            x = x + mvar.lag_matrices[j] @ buf[t - j]
        if noise is not None:
            x = x + noise[k]
        buf[t + 1] = x
    return buf[p:]
