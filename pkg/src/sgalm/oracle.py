"""Independent checks: finite-difference gradients, loop-based metrics, random search.

Nothing here imports the metric or gradient code it is meant to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import manifold
from .model import Problem


class NonFiniteEvaluation(ArithmeticError):
    pass


@dataclass(frozen=True)
class FdSpec:
    step: float = 1e-6
    floor: float = 1e-8

    def __post_init__(self):
        if self.step <= 0 or self.floor <= 0:
            raise ValueError("finite-difference steps must be positive")


def finite_difference_gradient(fun, X, spec: FdSpec = FdSpec()):
    """Central differences over the real and imaginary part of every entry.

    Returns ``G = g_re + 1j * g_im`` so that ``fun(X + D) ~ fun(X) + Re Tr(G^H D)``.
    """
    X = np.asarray(X, dtype=complex)
    G = np.zeros_like(X)
    flat = G.reshape(-1)
    for i, x in enumerate(X.reshape(-1)):
        for unit in (1.0, 1j):
            part = x.real if unit == 1.0 else x.imag
            h = max(spec.step * abs(part), spec.floor)
            Xp = X.copy().reshape(-1)
            Xm = X.copy().reshape(-1)
            Xp[i] += unit * h
            Xm[i] -= unit * h
            fp = fun(Xp.reshape(X.shape))
            fm = fun(Xm.reshape(X.shape))
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteEvaluation(f"non-finite value at coordinate {i}")
            flat[i] += unit * (fp - fm) / (2 * h)
    return G


def bruteforce_metrics(V, H, G, noise_power):
    """SINRs, beampattern gains and transmit power by explicit loops.

    ``V`` is M x (K+N); ``H`` is M x K and ``G`` is M x N.
    """
    V = np.asarray(V)
    H = np.asarray(H)
    G = np.asarray(G)
    M, L = V.shape
    if H.shape[0] != M or (G.size and G.shape[0] != M):
        raise ValueError("dimension mismatch between V and the channels")
    K = H.shape[1]
    N = G.shape[1] if G.ndim == 2 else 0

    def inner_prod(f, col):
        acc = 0j
        for m in range(M):
            acc += f[m].conjugate() * V[m, col]
        return acc

    gammas = []
    for k in range(K):
        signal = abs(inner_prod(H[:, k], k)) ** 2
        interference = noise_power
        for i in range(L):
            if i != k:
                interference += abs(inner_prod(H[:, k], i)) ** 2
        gammas.append(signal / interference)

    gains = []
    for n in range(N):
        total = 0.0
        for i in range(K):
            total += abs(inner_prod(G[:, n], i)) ** 2
        for j in range(L - K):
            total += abs(inner_prod(G[:, n], K + j)) ** 2
        gains.append(total)

    power = 0.0
    for m in range(M):
        for i in range(L):
            power += V[m, i].real ** 2 + V[m, i].imag ** 2
    return np.array(gammas), np.array(gains), power


def _satisfies(gammas, gains, problem, tol):
    Omega = problem.beampattern_thresholds
    Gamma = problem.sinr_thresholds
    ok_gain = np.all(gains >= Omega * (1 - tol))
    ok_sinr = np.all(gammas >= Gamma - tol * np.maximum(Gamma, 1.0))
    return bool(ok_gain and ok_sinr)


@dataclass
class SearchResult:
    V: np.ndarray | None
    sum_rate: float | None
    feasible_count: int
    samples: int

    @property
    def found(self) -> bool:
        return self.V is not None


def random_search_baseline(problem: Problem, budget: int, rng, tol=0.0, chunk=4096) -> SearchResult:
    """Best feasible sum rate over ``budget`` uniform points on the sphere.

    Samples are drawn in fixed-size chunks from ``rng`` so a larger budget
    with the same seed sees the same prefix of points.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    H = problem.channels.H_lifted
    Gm = problem.channels.G_lifted
    shape = problem.lifted_shape
    K = problem.num_users
    idx = np.arange(K)
    best_rate, best_X, feasible = -np.inf, None, 0
    done = 0
    while done < budget:
        n = min(chunk, budget - done)
        Z = rng.standard_normal((chunk, *shape)) + 1j * rng.standard_normal((chunk, *shape))
        Z = Z[:n]
        Z /= np.linalg.norm(Z, axis=(1, 2), keepdims=True)
        A = np.abs(np.einsum("mk,smi->ski", H.conj(), Z)) ** 2
        S = A[:, idx, idx]
        gam = S / (A.sum(axis=2) - S + problem.noise_power)
        gains = np.abs(np.einsum("mn,smi->sni", Gm.conj(), Z)) ** 2
        gains = gains.sum(axis=2)
        ok = np.all(gains >= problem.beampattern_thresholds * (1 - tol), axis=1)
        Gamma = problem.sinr_thresholds
        ok &= np.all(gam >= Gamma - tol * np.maximum(Gamma, 1.0), axis=1)
        feasible += int(ok.sum())
        if ok.any():
            rates = np.log2(1 + gam).sum(axis=1)
            rates[~ok] = -np.inf
            j = int(np.argmax(rates))
            if rates[j] > best_rate:
                best_rate, best_X = float(rates[j]), Z[j].copy()
        done += n
    if best_X is None:
        return SearchResult(None, None, 0, budget)
    return SearchResult(manifold.extract(best_X, problem.max_power), best_rate, feasible, budget)


def feasibility_certificate(problem: Problem, margin=1.0):
    """Constructive feasibility check with matched-filter beams.

    Each sensing beam alone is given ``margin * Omega_n / ||g_n||^2`` watts
    along its target channel; the remaining power is split evenly over
    matched-filter user beams. Returns the beamformer if it satisfies every
    constraint, else ``None``.
    """
    H, G = problem.channels.H, problem.channels.G
    K, N = H.shape[1], G.shape[1]
    p = problem.max_power
    sense = margin * problem.beampattern_thresholds / np.sum(np.abs(G) ** 2, axis=0) if N else np.zeros(0)
    left = p - sense.sum()
    if left <= 0:
        return None
    V = np.zeros((H.shape[0], K + N), dtype=complex)
    for k in range(K):
        V[:, k] = H[:, k] / np.linalg.norm(H[:, k]) * np.sqrt(left / K)
    for n in range(N):
        V[:, K + n] = G[:, n] / np.linalg.norm(G[:, n]) * np.sqrt(sense[n])
    gammas, gains, _ = bruteforce_metrics(V, H, G, problem.noise_power)
    return V if _satisfies(gammas, gains, problem, 0.0) else None
