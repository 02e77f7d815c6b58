"""Companion-form realization of MVAR models and condensed prediction matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .fos_core import MvarModel

__all__ = ["AugmentedLti", "PredictionMatrices", "augment", "augmented_state",
           "prediction_matrices"]


@dataclass(frozen=True)
class AugmentedLti:
    """``xt[k+1] = A_tilde xt[k] + B_tilde u[k] + Bw_tilde w[k]`` with
    ``xt[k] = (x[k], x[k-1], ..., x[k-p+1])``."""

    A_tilde: np.ndarray
    B_tilde: np.ndarray
    Bw_tilde: np.ndarray
    n: int
    p: int
    n_u: int

    @property
    def selector(self) -> np.ndarray:
        """Matrix picking the current channel state out of the augmented state."""
        S = np.zeros((self.n, self.n * self.p))
        S[:, :self.n] = np.eye(self.n)
        return S


def augment(mvar: MvarModel, B) -> AugmentedLti:
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n, p = mvar.n, mvar.p
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows but the MVAR model has n={n}")
    n_u = B.shape[1]
    A_t = np.zeros((n * p, n * p))
    A_t[:n, :] = np.hstack(list(mvar.lag_matrices))
    A_t[n:, :-n] = np.eye(n * (p - 1))
    B_t = np.zeros((n * p, n_u))
    B_t[:n] = B
    Bw_t = np.zeros((n * p, n))
    Bw_t[:n] = np.eye(n)
    return AugmentedLti(A_t, B_t, Bw_t, n, p, n_u)


def augmented_state(history, n: int, p: int) -> np.ndarray:
    """Stack the ``p`` most recent states (newest first); missing ones are zero."""
    h = np.asarray(history, dtype=float).reshape(-1, n)
    out = np.zeros(n * p)
    m = min(p, h.shape[0])
    out[:n * m] = h[:m].ravel()
    return out


@dataclass(frozen=True)
class PredictionMatrices:
    """Predicted channel states ``X = Phi @ xt + Gamma @ U`` over steps 1..P."""

    Phi: np.ndarray
    Gamma: np.ndarray
    P: int
    n: int
    n_u: int


def prediction_matrices(aug: Union[AugmentedLti, Sequence[AugmentedLti]], P: int
                        ) -> PredictionMatrices:
    """Condensed map from augmented state and stacked inputs to predicted states.

    ``aug`` may be a sequence of ``P`` realizations for a time-varying model,
    entry ``j`` being the dynamics used between steps ``j`` and ``j + 1``.
    """
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    if isinstance(aug, AugmentedLti):
        seq = [aug] * P
    else:
        seq = list(aug)
        if len(seq) != P:
            raise ValueError(f"expected {P} time-varying realizations, got {len(seq)}")
    n, n_u = seq[0].n, seq[0].n_u
    N = seq[0].A_tilde.shape[0]
    Phi = np.zeros((n * P, N))
    Gamma = np.zeros((n * P, n_u * P))
    # cols[j] holds the augmented-state response at the current step to u_j
    trans = np.eye(N)
    cols = []
    for i in range(P):
        A_i, B_i = seq[i].A_tilde, seq[i].B_tilde
        trans = A_i @ trans
        cols = [A_i @ c for c in cols] + [B_i]
        Phi[i * n:(i + 1) * n] = trans[:n]
        for j, c in enumerate(cols):
            Gamma[i * n:(i + 1) * n, j * n_u:(j + 1) * n_u] = c[:n]
    return PredictionMatrices(Phi, Gamma, P, n, n_u)
