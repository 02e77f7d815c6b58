"""Receding-horizon control of FOS plants through box-constrained QPs.

Noise enters the predictions additively with zero mean, so the expected
quadratic cost differs from the noise-free one by an input-independent
constant and the QP is built from the noise-free predictions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fos_core import (FosModel, FosPlant, MvarModel, SimulationTrace, draw_noise,
                       fos_to_mvar, DEFAULT_DT)
from .lti_augment import (AugmentedLti, PredictionMatrices, augment, augmented_state,
                          prediction_matrices)

__all__ = [
    "ConvergenceWarning",
    "MpcConfig",
    "QpProblem",
    "RiccatiSolution",
    "MpcController",
    "build_qp",
    "solve_box_qp",
    "qp_objective",
    "riccati_lqr",
    "mpc_step",
    "run_closed_loop",
]


class ConvergenceWarning(UserWarning):
    """The QP solver stopped at ``max_iter``; the best feasible iterate was returned."""


@dataclass(frozen=True)
class MpcConfig:
    p: int = 4
    P: int = 32
    M: int = 8
    q_weight: float = 10.0
    r_weight: float = 1.0
    c: Optional[np.ndarray] = None
    u_min: float | np.ndarray = -1.0
    u_max: float | np.ndarray = 1.0
    tol: float = 1e-8
    max_iter: int = 2000

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 1 <= self.M <= self.P:
            raise ValueError(f"need 1 <= M <= P, got M={self.M}, P={self.P}")
        if self.q_weight < 0 or self.r_weight < 0:
            raise ValueError("q_weight and r_weight must be nonnegative")
        if np.any(np.asarray(self.u_min) > np.asarray(self.u_max)):
            raise ValueError(f"u_min must not exceed u_max ({self.u_min} > {self.u_max})")


@dataclass(frozen=True)
class QpProblem:
    """minimize ``0.5 U'HU + g'U`` subject to ``lower <= U <= upper``."""

    H: np.ndarray
    g: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class RiccatiSolution:
    """Finite-horizon gains ``u[k] = gains[k] @ xt[k]`` and cost-to-go matrices."""

    gains: list
    cost_to_go: list = field(repr=False)


def _bounds(cfg: MpcConfig, n_u: int, P: int):
    lo = np.broadcast_to(np.asarray(cfg.u_min, dtype=float), (n_u,))
    hi = np.broadcast_to(np.asarray(cfg.u_max, dtype=float), (n_u,))
    return np.tile(lo, P), np.tile(hi, P)


def _hessian(pred: PredictionMatrices, cfg: MpcConfig) -> np.ndarray:
    G = pred.Gamma
    H = 2.0 * (cfg.q_weight * G.T @ G + cfg.r_weight * np.eye(G.shape[1]))
    return 0.5 * (H + H.T)


def _linear_term(pred: PredictionMatrices, x_aug, cfg: MpcConfig) -> np.ndarray:
    x_aug = np.asarray(x_aug, dtype=float)
    if x_aug.shape != (pred.Phi.shape[1],):
        raise ValueError(f"augmented state must have shape ({pred.Phi.shape[1]},), "
                         f"got {x_aug.shape}")
    g = 2.0 * cfg.q_weight * pred.Gamma.T @ (pred.Phi @ x_aug)
    if cfg.c is not None:
        c = np.asarray(cfg.c, dtype=float)
        c_bar = np.tile(c, pred.P) if c.size == pred.n else c
        if c_bar.shape != (pred.n * pred.P,):
            raise ValueError(f"c must have {pred.n} or {pred.n * pred.P} entries")
        g = g + pred.Gamma.T @ c_bar
    return g


def build_qp(pred: PredictionMatrices, x_aug, cfg: MpcConfig) -> QpProblem:
    """Condensed QP for the horizon-``P`` expected cost with box bounds on inputs.

    ``H = 2 (q G'G + r I)`` and ``g = 2 q G' Phi xt + G' c``.
    """
    lo, hi = _bounds(cfg, pred.n_u, pred.P)
    return QpProblem(_hessian(pred, cfg), _linear_term(pred, x_aug, cfg), lo, hi)


def qp_objective(qp: QpProblem, U) -> float:
    U = np.asarray(U, dtype=float)
    return float(0.5 * U @ qp.H @ U + qp.g @ U)


def _lipschitz(H: np.ndarray, iters: int = 50) -> float:
    v = np.ones(H.shape[0]) / np.sqrt(H.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 1.0
        lam = float(v @ w)
        v = w / nrm
    # power iteration approaches the top eigenvalue from below
    return max(1.05 * lam, 1.05 * nrm, np.finfo(float).tiny)


def _pg_norm(x, grad, lo, hi) -> float:
    return float(np.linalg.norm(x - np.clip(x - grad, lo, hi)))


def _polish(H, g, x, lo, hi):
    """Solve the equality-constrained QP on the free set guessed from ``x``."""
    grad = H @ x + g
    at_lo = (x <= lo) & (grad > 0)
    at_hi = (x >= hi) & (grad < 0)
    free = ~(at_lo | at_hi)
    y = np.where(at_lo, lo, np.where(at_hi, hi, x))
    if free.any():
        fixed = ~free
        rhs = -(g[free] + H[np.ix_(free, fixed)] @ y[fixed])
        try:
            y[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        except np.linalg.LinAlgError:
            return None
    return np.clip(y, lo, hi)


def solve_box_qp(qp: QpProblem, tol: float = 1e-8, max_iter: int = 2000,
                 x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Accelerated projected gradient for a convex box QP.

    Step ``1/L`` with ``L`` from power iteration, gradient-based momentum
    restart, and periodic active-set polishing. Stops when the projected
    gradient norm is at most ``tol``. Every iterate is projected, so the
    result is feasible even when ``max_iter`` is hit (a ``ConvergenceWarning``
    is issued in that case).
    """
    H, g, lo, hi = qp.H, qp.g, qp.lower, qp.upper
    L = _lipschitz(H)
    x = np.clip(np.zeros_like(g) if x0 is None else np.asarray(x0, dtype=float), lo, hi)
    y = x.copy()
    t = 1.0
    best, best_pg = x, _pg_norm(x, H @ x + g, lo, hi)
    if best_pg <= tol:
        return best
    for it in range(1, max_iter + 1):
        x_new = np.clip(y - (H @ y + g) / L, lo, hi)
        if np.dot(y - x_new, x_new - x) > 0:
            t = 1.0
            y = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if it % 10 == 0 or it == max_iter:
            pg = _pg_norm(x, H @ x + g, lo, hi)
            if pg < best_pg:
                best, best_pg = x, pg
            if pg <= tol:
                return x
            z = _polish(H, g, x, lo, hi)
            if z is not None:
                pz = _pg_norm(z, H @ z + g, lo, hi)
                if pz <= tol:
                    return z
                if pz < best_pg:
                    best, best_pg = z, pz
    warnings.warn(
        f"box QP not converged after {max_iter} iterations "
        f"(projected gradient norm {best_pg:.3g} > {tol:.3g})",
        ConvergenceWarning, stacklevel=2)
    return best


def riccati_lqr(aug: AugmentedLti, cfg: MpcConfig, N: int) -> RiccatiSolution:
    """Backward Riccati recursion for the unconstrained horizon-``N`` problem.

    Stage cost ``q |x[k]|^2`` on the channel state for ``k = 1..N`` and
    ``r |u[k]|^2`` for ``k = 0..N-1``; no extra terminal weight.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    S = aug.selector
    Qt = cfg.q_weight * S.T @ S
    R = cfg.r_weight * np.eye(aug.n_u)
    A, B = aug.A_tilde, aug.B_tilde
    P_next = Qt
    gains = [None] * N
    ctg = [None] * (N + 1)
    ctg[N] = P_next
    for k in range(N - 1, -1, -1):
        BtP = B.T @ P_next
        K = -np.linalg.lstsq(R + BtP @ B, BtP @ A, rcond=None)[0]
        gains[k] = K
        P_k = A.T @ P_next @ (A + B @ K)
        P_k = 0.5 * (P_k + P_k.T)
        ctg[k] = P_k
        P_next = Qt + P_k
    return RiccatiSolution(gains, ctg)


class MpcController:
    """Receding-horizon controller built on an MVAR prediction model.

    The Hessian, its Lipschitz bound and the prediction matrices are fixed for
    a time-invariant model and computed once.
    """

    def __init__(self, model: MvarModel, B, cfg: MpcConfig):
        if model.p != cfg.p:
            raise ValueError(f"model has p={model.p} but config has p={cfg.p}")
        self.cfg = cfg
        self.model = model
        self.aug = augment(model, B)
        self.pred = prediction_matrices(self.aug, cfg.P)
        self._H = _hessian(self.pred, cfg)
        self._lo, self._hi = _bounds(cfg, self.aug.n_u, cfg.P)
        self._warm = None
        self.n_warnings = 0

    @property
    def n_u(self) -> int:
        return self.aug.n_u

    def plan(self, history) -> np.ndarray:
        """Full ``(P, n_u)`` plan from the newest-first state history."""
        cfg = self.cfg
        x_aug = augmented_state(history, self.model.n, cfg.p)
        qp = QpProblem(self._H, _linear_term(self.pred, x_aug, cfg), self._lo, self._hi)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            U = solve_box_qp(qp, cfg.tol, cfg.max_iter, x0=self._warm)
        for w in caught:
            self.n_warnings += 1
            warnings.warn(w.message, w.category, stacklevel=2)
        # shift the applied part out for the next warm start
        n_u, M = self.n_u, cfg.M
        self._warm = np.concatenate([U[M * n_u:], np.repeat(U[-n_u:], M)])
        return U.reshape(cfg.P, n_u)

    def step(self, history) -> np.ndarray:
        return self.plan(history)[:self.cfg.M]


def mpc_step(plant_state_history, cfg: MpcConfig, model: MvarModel, B) -> np.ndarray:
    """First ``M`` inputs of the optimal plan, shape ``(M, n_u)``.

    ``plant_state_history`` lists observed states newest first; a history
    shorter than ``p`` is zero-padded.
    """
    hist = np.asarray(plant_state_history, dtype=float).reshape(-1, model.n)
    if hist.shape[0] < 1:
        raise ValueError("at least one observed state is required")
    return MpcController(model, B, cfg).step(hist)


def run_closed_loop(model: FosModel, cfg: MpcConfig, B, disturbance: Optional[np.ndarray] = None,
                    T: int = 1600, seed: int = 0, noise: Optional[np.ndarray] = None,
                    start_step: int = 0, x0=None, dt: float = DEFAULT_DT,
                    controller: Optional[MpcController] = None) -> SimulationTrace:
    """Simulate the full-memory FOS plant under MPC re-planned every ``M`` steps.

    The controller predicts with ``fos_to_mvar(model, cfg.p)`` and observes the
    true plant state. Before ``start_step`` the input is zero.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = model.n
    if disturbance is None:
        disturbance = np.zeros((T, n))
    disturbance = np.asarray(disturbance, dtype=float)
    if disturbance.shape != (T, n):
        raise ValueError(f"disturbance must have shape {(T, n)}, got {disturbance.shape}")
    if noise is None:
        noise = draw_noise(model.sigma_w2, T, n, seed)
    if controller is None:
        controller = MpcController(fos_to_mvar(model, cfg.p), B, cfg)
    plant = FosPlant(model, B, x0=x0, capacity=T)
    n_u = plant.n_u
    states = np.zeros((T, n))
    inputs = np.zeros((T, n_u))
    events = []
    states[0] = plant.state
    plan = np.zeros((0, n_u))
    for k in range(T):
        if k >= start_step:
            i = (k - start_step) % cfg.M
            if i == 0:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", ConvergenceWarning)
                    plan = controller.step(plant.history(cfg.p))
                if caught:
                    events.append((k, "solver_not_converged"))
            inputs[k] = plan[i]
        if k + 1 < T:
            states[k + 1] = plant.step(inputs[k], disturbance[k], noise[k])
    return SimulationTrace(dt, states, inputs, disturbance.copy(), events)
