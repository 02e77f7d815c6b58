"""Estimating ``(A, alpha, sigma_w2)`` of a linear FOS from multichannel data.

Coordinate descent over the fractional exponents: for each channel the
exponent is chosen on a grid by least-squares fit quality of the
fractionally differenced series, with the coupling row re-fit by OLS for
every candidate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import fftconvolve

from .fos_core import FosModel, gl_coefficients

__all__ = ["DegenerateDataError", "IdentificationResult", "CouplingFit", "identify",
           "fit_coupling", "frac_diff", "normalize", "denormalize"]

Data = Union[np.ndarray, Sequence[np.ndarray]]


class DegenerateDataError(ValueError):
    """The regression design is rank deficient."""


@dataclass
class IdentificationResult:
    model: FosModel
    residual_rss: float
    alpha_grid_step: float
    passes: int
    offset: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_history: list = field(default_factory=list)


@dataclass
class CouplingFit:
    A: np.ndarray
    offset: np.ndarray
    residuals: np.ndarray
    stderr: np.ndarray
    extra_lags: np.ndarray


def _segments(data: Data) -> list:
    if isinstance(data, np.ndarray):
        segs = [data]
    else:
        segs = list(data)
    out = []
    for s in segs:
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if not np.all(np.isfinite(s)):
            raise ValueError("data contains non-finite values")
        out.append(s)
    n = out[0].shape[1]
    if any(s.shape[1] != n for s in out):
        raise ValueError("all segments must have the same number of channels")
    return out


def _psi_table(alphas: np.ndarray, n_lags: int) -> np.ndarray:
    alphas = np.asarray(alphas, dtype=float)
    psi = np.zeros((alphas.size, n_lags + 1))
    psi[:, 0] = 1.0
    pos = alphas > 0
    if pos.any():
        psi[pos] = gl_coefficients(alphas[pos], n_lags).psi
    return psi


def frac_diff(x: np.ndarray, alphas, memory: Optional[int] = None) -> np.ndarray:
    """Fractional differences ``sum_{j<=min(k, memory)} psi(alpha, j) x[k-j]``.

    ``x`` is one channel of length ``T``; returns ``(len(alphas), T)``.
    An exponent of 0 leaves the series unchanged.
    """
    x = np.asarray(x, dtype=float)
    T = x.size
    L = T - 1 if memory is None else min(memory, T - 1)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    out = fftconvolve(_psi_table(alphas, L), x[None, :], axes=1)[:, :T]
    out[alphas == 0] = x
    return out


def _design(segs: list, p_fit: int, intercept: bool) -> np.ndarray:
    rows = []
    for s in segs:
        T, n = s.shape
        cols = []
        for lag in range(p_fit):
            shifted = np.zeros((T - 1, n))
            shifted[lag:] = s[:T - 1 - lag]
            cols.append(shifted)
        if intercept:
            cols.append(np.ones((T - 1, 1)))
        rows.append(np.hstack(cols))
    return np.vstack(rows)


def _targets(segs: list, channel: int, alphas, memory) -> np.ndarray:
    return np.hstack([frac_diff(s[:, channel], alphas, memory)[:, 1:] for s in segs]).T


def _qr(X: np.ndarray):
    Q, R = np.linalg.qr(X)
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= 1e-12 * max(d.max(), 1e-300):
        raise DegenerateDataError(
            f"regression design is rank deficient (shape {X.shape}); "
            "data may be constant or too short")
    return Q, R


def fit_coupling(data: Data, alpha, p_fit: int = 1, memory: Optional[int] = 512,
                 intercept: bool = True) -> CouplingFit:
    """OLS of the fractionally differenced series on the previous state.

    ``alpha`` entries of 0 disable differencing for that channel.
    """
    segs = _segments(data)
    n = segs[0].shape[1]
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,))
    X = _design(segs, p_fit, intercept)
    Q, R = _qr(X)
    Y = np.column_stack([_targets(segs, i, [alpha[i]], memory)[:, 0] for i in range(n)])
    coef = np.linalg.solve(R, Q.T @ Y)
    resid = Y - X @ coef
    dof = max(X.shape[0] - X.shape[1], 1)
    s2 = (resid ** 2).sum(axis=0) / dof
    Rinv = np.linalg.inv(R)
    xtx_inv_diag = (Rinv ** 2).sum(axis=1)
    se = np.sqrt(np.outer(s2, xtx_inv_diag))
    A = coef[:n].T.copy()
    extra = np.stack([coef[n * l:n * (l + 1)].T for l in range(1, p_fit)]) if p_fit > 1 \
        else np.zeros((0, n, n))
    offset = coef[-1].copy() if intercept else np.zeros(n)
    return CouplingFit(A, offset, resid, se[:, :n], extra)


def identify(data: Data, p_fit: int = 1, alpha_grid=(0.1, 1.5, 0.01), passes: int = 3,
             memory: Optional[int] = 512, intercept: bool = True) -> IdentificationResult:
    """Grid-plus-OLS coordinate descent for ``(A, alpha, sigma_w2)``.

    Parameters
    ----------
    data : array (T, n) or list of such arrays
        One recording, or several independent segments each assumed to start
        from rest.
    p_fit : int
        Number of past states entering the coupling regression; the model's
        ``A`` is the coefficient of the most recent one.
    alpha_grid : (lo, hi, step)
        Candidate exponents, endpoints included.
    passes : int
        Coordinate-descent sweeps over the channels.
    memory : int or None
        Truncation lag of the fractional differencing (capped at the segment
        length); ``None`` uses the full segment history.
    intercept : bool
        Fit a constant offset per channel alongside ``A``.
    """
    segs = _segments(data)
    n = segs[0].shape[1]
    total = sum(s.shape[0] for s in segs)
    if p_fit < 1:
        raise ValueError(f"p_fit must be >= 1, got {p_fit}")
    if total < 10 * n * p_fit:
        raise ValueError(f"need at least {10 * n * p_fit} samples, got {total}")
    lo, hi, step = alpha_grid
    grid = np.round(np.arange(lo, hi + step / 2, step), 12)
    grid = grid[(grid > 0) & (grid <= 2)]

    X = _design(segs, p_fit, intercept)
    Q, _ = _qr(X)

    def channel_rss(i, alphas):
        Y = _targets(segs, i, alphas, memory)
        Rres = Y - Q @ (Q.T @ Y)
        return (Rres ** 2).sum(axis=0)

    alpha = np.ones(n)
    rss = np.array([channel_rss(i, [alpha[i]])[0] for i in range(n)])
    history = [float(rss.sum())]
    for _ in range(passes):
        for i in range(n):
            cand = np.concatenate([channel_rss(i, grid[b:b + 32]) for b in range(0, grid.size, 32)])
            best = int(np.argmin(cand))
            if cand[best] <= rss[i]:
                alpha[i], rss[i] = grid[best], cand[best]
        history.append(float(rss.sum()))

    fit = fit_coupling(segs, alpha, p_fit, memory, intercept)
    sigma2 = float(np.mean(fit.residuals ** 2))
    model = FosModel(fit.A, alpha, sigma2)
    return IdentificationResult(model, float(rss.sum()), float(step), passes,
                                offset=fit.offset, objective_history=history)


def normalize(data) -> tuple:
    """Scale each channel by its max absolute value into ``[-1, 1]``.

    All-zero channels keep scale 1.
    """
    x = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    scale = np.abs(x).max(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return x / scale, scale


def denormalize(data, scale) -> np.ndarray:
    return np.asarray(data, dtype=float) * scale
