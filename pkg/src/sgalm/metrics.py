"""Communication and sensing metrics for a beamformer matrix.

``V`` is M x (K+N): columns ``0..K-1`` are user beams, ``K..K+N-1`` sensing
beams. Every column interferes with every user except the user's own beam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Problem, build_channel, watts_to_dbm


@dataclass(frozen=True)
class ConstraintResiduals:
    """Sensing (``u``, watts) and SINR (``c``) shortfalls; ``<= 0`` is satisfied."""

    u: np.ndarray
    c: np.ndarray

    def max_violation(self, u_scale=1.0, c_scale=1.0) -> float:
        vals = np.concatenate([self.u / u_scale, self.c / c_scale])
        return float(max(0.0, vals.max())) if vals.size else 0.0


def _check_dims(V, F):
    if V.ndim != 2 or F.shape[0] != V.shape[0]:
        raise ValueError(f"dimension mismatch: V is {V.shape}, channel has {F.shape[0]} rows")


def _signal_interference(V, H, noise_power):
    V = np.asarray(V)
    H = np.asarray(H)
    if H.ndim == 1:
        H = H[:, None]
    _check_dims(V, H)
    K = H.shape[1]
    if V.shape[1] < K:
        raise ValueError(f"V has {V.shape[1]} columns but there are {K} users")
    A = np.abs(H.conj().T @ V) ** 2  # K x (K+N)
    signal = A[np.arange(K), np.arange(K)]
    interference = A.sum(axis=1) - signal + noise_power
    return signal, interference


def sinr(V, h, k, noise_power):
    """SINR of user ``k`` whose channel is ``h`` (length M)."""
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    V = np.asarray(V)
    h = np.asarray(h).reshape(-1)
    _check_dims(V, h[:, None])
    if not 0 <= k < V.shape[1]:
        raise ValueError(f"user index {k} out of range for {V.shape[1]} columns")
    a = np.abs(h.conj() @ V) ** 2
    return float(a[k] / (a.sum() - a[k] + noise_power))


def sinrs(V, H, noise_power):
    """All user SINRs; ``H`` is M x K."""
    signal, interference = _signal_interference(V, H, noise_power)
    return signal / interference


def rates(V, H, noise_power):
    return np.log2(1.0 + sinrs(V, H, noise_power))


def sum_rate(V, H, noise_power):
    return float(rates(V, H, noise_power).sum())


def beampattern_gain(V, g):
    """Transmit power toward channel ``g``: ``||g^H V||^2``."""
    V = np.asarray(V)
    g = np.asarray(g).reshape(-1)
    _check_dims(V, g[:, None])
    return float(np.sum(np.abs(g.conj() @ V) ** 2))


def beampattern_gains(V, G):
    V = np.asarray(V)
    G = np.asarray(G)
    _check_dims(V, G)
    return np.sum(np.abs(G.conj().T @ V) ** 2, axis=1)


def transmit_power(V):
    return float(np.vdot(V, V).real)


def lifted_sinrs(Vt, problem: Problem):
    return sinrs(Vt, problem.channels.H_lifted, problem.noise_power)


def lifted_gains(Vt, problem: Problem):
    return beampattern_gains(Vt, problem.channels.G_lifted)


def residuals(Vt, problem: Problem) -> ConstraintResiduals:
    """Constraint shortfalls evaluated on the lifted beamformer directly."""
    Vt = np.asarray(Vt)
    if Vt.shape != problem.lifted_shape:
        raise ValueError(f"dimension mismatch: expected {problem.lifted_shape}, got {Vt.shape}")
    u = problem.beampattern_thresholds - lifted_gains(Vt, problem)
    c = problem.sinr_thresholds - lifted_sinrs(Vt, problem)
    return ConstraintResiduals(u=u, c=c)


def beampattern_sweep(V, config, angles_deg, reference_range=20.0):
    """Beampattern gain of ``V`` over a grid of probe directions at a fixed range.

    Returns ``(angles, gain_watts, gain_dbm)``.
    """
    angles = np.asarray(angles_deg, dtype=float)
    probes = np.stack([build_channel(reference_range, a, config) for a in angles], axis=1)
    gains = beampattern_gains(V, probes)
    return angles, gains, watts_to_dbm(gains)
