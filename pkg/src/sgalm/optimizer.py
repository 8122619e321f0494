"""Riemannian augmented-Lagrangian beamforming solver.

Three nested loops:

* fractional-programming rounds fix the SINR auxiliaries ``mu`` at the
  current SINRs, which turns the sum of log-rates into a sum of weighted
  signal fractions;
* augmented-Lagrangian rounds minimise the penalised surrogate for fixed
  multipliers, then update multipliers and the penalty weight;
* the inner loop takes stochastic, steepest-descent or conjugate-gradient
  steps on the unit sphere followed by a normalising retraction.

Gradients use the convention ``L(X + D) ~ L(X) + Re Tr(G^H D)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import manifold
from .metrics import ConstraintResiduals, lifted_gains, lifted_sinrs, residuals
from .model import ConfigError, Problem

log = logging.getLogger(__name__)

METHODS = ("sgd", "sd", "cg")
METHOD_ALIASES = {
    "stochastic-gradient": "sgd",
    "steepest-descent": "sd",
    "conjugate-gradient": "cg",
}


@dataclass(frozen=True)
class FpState:
    """SINR auxiliaries. ``weight`` multiplies the rate term inside the Lagrangian."""

    mu: np.ndarray
    weight: float = 1.0

    @property
    def mu_hat(self) -> np.ndarray:
        return 1.0 + self.mu


@dataclass(frozen=True)
class MultiplierState:
    lam: np.ndarray
    kappa: np.ndarray
    rho: float = 1.0
    clip_min: float = 0.0
    clip_max: float = 100.0
    growth: float = 2.0
    rho_max: float = 1e6
    shrink: float = 0.9

    @classmethod
    def zeros(cls, num_targets, num_users, **kw):
        return cls(lam=np.zeros(num_targets), kappa=np.zeros(num_users), **kw)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of :func:`solve`.

    ``step_size`` and ``decay`` define the schedule
    ``alpha_t = step_size / (1 + step_size * decay * t)``; ``t`` restarts at
    every inner minimisation. ``max_step_norm`` caps the step length
    ``alpha * ||direction||``; for SGD the cap shrinks by ``alpha_t / alpha_0``.
    """

    method: str = "sgd"
    step_size: float = 0.1
    decay: float = 10.0
    batch_fraction: float = 0.5
    max_inner: int = 300
    max_fp: int = 30
    max_alm: int = 3
    tol0: float = 1e-2
    tol_final: float = 1e-6
    feasibility_tol: float = 1e-3
    fp_tol: float = 1e-4
    check_interval: int = 10
    init: str = "random"
    projection: str = "trace"
    normalize_constraints: bool = True
    normalize_objective: bool = False
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4
    max_step_norm: float | None = 0.5
    multiplier_cadence: int = 1
    rho0: float = 1.0
    multiplier_bounds: tuple[float, float] = (0.0, 100.0)
    penalty_growth: float = 2.0
    penalty_shrink: float = 0.9
    rho_max: float = 1e6
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", METHOD_ALIASES.get(self.method, self.method))
        object.__setattr__(self, "multiplier_bounds", tuple(float(b) for b in self.multiplier_bounds))
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.step_size <= 0 or self.decay < 0:
            raise ConfigError("step_size must be positive and decay non-negative")
        if not 0 < self.batch_fraction <= 1:
            raise ConfigError("batch_fraction must lie in (0, 1]")
        for name in ("max_inner", "max_fp", "max_alm", "check_interval", "multiplier_cadence"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("tol0", "tol_final", "feasibility_tol", "fp_tol", "rho0"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.tol_final > self.tol0:
            raise ConfigError("tol_final must not exceed tol0")
        if self.init not in ("random", "matched"):
            raise ConfigError("init must be 'random' or 'matched'")
        if self.projection not in ("trace", "hadamard"):
            raise ConfigError("projection must be 'trace' or 'hadamard'")
        lo, hi = self.multiplier_bounds
        if not 0 <= lo <= hi:
            raise ConfigError("multiplier_bounds must satisfy 0 <= min <= max")
        if self.max_step_norm is not None and self.max_step_norm <= 0:
            raise ConfigError("max_step_norm must be positive")

    def tolerance(self, t: int) -> float:
        return max(self.tol0 * 0.5**t, self.tol_final)


@dataclass
class TraceRow:
    iter: int
    fp_round: int
    alm_round: int
    inner_iter: int
    objective: float
    lagrangian: float
    grad_norm: float
    max_violation: float
    step: float
    rho: float
    method: str


TRACE_FIELDS = tuple(TraceRow.__dataclass_fields__)


@dataclass
class InnerResult:
    point: np.ndarray
    steps: int
    grad_norm: float
    converged: bool
    rows: list = field(default_factory=list)


@dataclass
class SolveResult:
    point: np.ndarray
    V: np.ndarray
    sum_rate: float
    sinr: np.ndarray
    gains: np.ndarray
    residuals: ConstraintResiduals
    max_violation: float
    feasible: bool
    fp_rounds: int
    alm_rounds: int
    inner_iterations: int
    wall_time: float
    trace: list
    multipliers: MultiplierState
    initial_grad_norm: float
    final_grad_norm: float
    stationarity: float = float("nan")

    @property
    def time_per_iteration(self) -> float:
        return self.wall_time / max(self.inner_iterations, 1)


# -- problem pieces -----------------------------------------------------------


def constraint_scales(problem: Problem, normalize=True):
    """Per-constraint divisors applied to the residuals inside the Lagrangian.

    Dividing ``u_n`` by its threshold and ``c_k`` by ``max(Gamma_k, 1)`` keeps
    all penalty terms O(1) whatever the physical power scale. The feasible
    set is unchanged.
    """
    if not normalize:
        return np.ones(problem.num_targets), np.ones(problem.num_users)
    Omega = problem.beampattern_thresholds
    u_scale = np.where(Omega > 0, Omega, 1.0)
    c_scale = np.maximum(problem.sinr_thresholds, 1.0)
    return u_scale, c_scale


def scaled_residuals(Vt, problem, scales):
    r = residuals(Vt, problem)
    return r.u / scales[0], r.c / scales[1]


def max_violation(u, c) -> float:
    vals = np.concatenate([u, c])
    return float(max(0.0, vals.max())) if vals.size else 0.0


def update_mu(Vt, problem: Problem, normalize=False) -> FpState:
    """Closed-form auxiliary update ``mu = gamma(Vt)``.

    With ``normalize`` the rate term is divided by ``sum(1 + mu)`` so it stays
    in [-1, 0]; a positive constant factor leaves the minimisers alone.
    """
    mu = lifted_sinrs(Vt, problem)
    weight = 1.0 / float(np.sum(1.0 + mu)) if normalize and mu.size else 1.0
    return FpState(mu=mu, weight=weight)


def _user_terms(Vt, problem):
    H = problem.channels.H_lifted
    A = H.conj().T @ Vt
    absA2 = np.abs(A) ** 2
    K = problem.num_users
    idx = np.arange(K)
    S = absA2[idx, idx]
    T = absA2.sum(axis=1) + problem.noise_power
    return A, S, T


def fp_objective(Vt, fp: FpState, problem: Problem) -> float:
    """Negated weighted signal fraction ``-sum_k mu_hat_k S_k / T_k``.

    ``T_k`` is the total received power at user ``k`` including its own
    beam, so ``S_k / T_k = gamma_k / (1 + gamma_k)``.
    """
    _, S, T = _user_terms(Vt, problem)
    return float(-np.sum(fp.mu_hat * S / T))


def fp_sum_rate(Vt, fp: FpState, problem: Problem) -> float:
    """Fractional-programming lower bound on the sum rate (bits/s/Hz).

    Tight, and equal to ``sum log2(1 + gamma_k)``, when ``mu = gamma``.
    """
    mu = fp.mu
    return float((np.sum(np.log1p(mu) - mu) - fp_objective(Vt, fp, problem)) / math.log(2))


def augmented_lagrangian(Vt, fp, mult: MultiplierState, problem, scales=None) -> float:
    """``w f + rho/2 sum max(0, lam/rho + u)^2 + rho/2 sum max(0, kappa/rho + c)^2``.

    ``w`` is ``fp.weight``, 1 unless the rate term is normalised.
    """
    if scales is None:
        scales = constraint_scales(problem, normalize=False)
    u, c = scaled_residuals(Vt, problem, scales)
    rho = mult.rho
    hu = np.maximum(0.0, mult.lam / rho + u)
    hc = np.maximum(0.0, mult.kappa / rho + c)
    return fp.weight * fp_objective(Vt, fp, problem) + 0.5 * rho * (np.sum(hu**2) + np.sum(hc**2))


def num_gradient_terms(problem: Problem) -> int:
    return 2 * problem.num_users + problem.num_targets


def euclidean_gradient(Vt, fp, mult: MultiplierState, problem, batch=None, scales=None):
    """Ambient gradient of :func:`augmented_lagrangian`.

    The gradient is a sum over ``2K + N`` terms: K rate terms, N sensing
    penalties and K SINR penalties, indexed in that order. ``batch`` selects
    a subset; each selected term is reweighted by ``population / len(batch)``
    so the estimate is unbiased over uniformly drawn batches.
    """
    K, N = problem.num_users, problem.num_targets
    P = 2 * K + N
    weights = np.ones(P)
    if batch is not None:
        batch = np.asarray(batch, dtype=int).reshape(-1)
        if batch.size == 0:
            raise ValueError("empty batch")
        if batch.min() < 0 or batch.max() >= P:
            raise ValueError(f"batch indices must lie in [0, {P})")
        weights = np.zeros(P)
        np.add.at(weights, batch, P / batch.size)
    w_f, w_u, w_c = weights[:K], weights[K : K + N], weights[K + N :]
    if scales is None:
        scales = constraint_scales(problem, normalize=False)
    u_scale, c_scale = scales

    H = problem.channels.H_lifted
    Gm = problem.channels.G_lifted
    idx = np.arange(K)
    rho = mult.rho

    A, S, T = _user_terms(Vt, problem)
    I = T - S

    # rate terms: d/dV of -mu_hat * S/T
    R = (2.0 * fp.mu_hat * S / T**2)[:, None] * A
    R[idx, idx] -= 2.0 * fp.mu_hat * A[idx, idx] / T
    R *= (fp.weight * w_f)[:, None]

    # SINR penalties: rho * hinge * d(c/scale) with dc = -dgamma
    gamma = S / I
    c = (problem.sinr_thresholds - gamma) / c_scale
    hc = np.maximum(0.0, mult.kappa / rho + c)
    active = w_c * hc > 0
    if np.any(active):
        A_off = A.copy()
        A_off[idx, idx] = 0.0
        dgamma = (-2.0 * S / I**2)[:, None] * A_off
        dgamma[idx, idx] += 2.0 * A[idx, idx] / I
        R -= (w_c * rho * hc / c_scale)[:, None] * dgamma

    grad = H @ R

    if N:
        B = Gm.conj().T @ Vt
        gains = np.sum(np.abs(B) ** 2, axis=1)
        u = (problem.beampattern_thresholds - gains) / u_scale
        hu = np.maximum(0.0, mult.lam / rho + u)
        coef = w_u * 2.0 * rho * hu / u_scale
        if np.any(coef > 0):
            grad -= Gm @ (coef[:, None] * B)
    return grad


def riemannian_gradient(Vt, fp, mult, problem, scales=None, batch=None, projection="trace"):
    G = euclidean_gradient(Vt, fp, mult, problem, batch=batch, scales=scales)
    return manifold.project_tangent(Vt, G, mode=projection)


def stationarity(Vt, mult: MultiplierState, problem, scales=None, projection="trace", normalize=False) -> float:
    """Full-batch Riemannian gradient norm with ``mu`` refreshed at ``Vt``.

    At ``mu = gamma(Vt)`` the rate surrogate touches the log-rate to first
    order, so this is a stationarity measure of the Lagrangian that can be
    compared across outer rounds.
    """
    fp = update_mu(Vt, problem, normalize=normalize)
    return manifold.norm(riemannian_gradient(Vt, fp, mult, problem, scales, projection=projection))


def step_size(t, alpha0, decay):
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    return alpha0 / (1.0 + alpha0 * decay * t)


def update_multipliers(mult: MultiplierState, u, c) -> MultiplierState:
    lo, hi = mult.clip_min, mult.clip_max
    return replace(
        mult,
        lam=np.clip(mult.lam + mult.rho * np.asarray(u), lo, hi),
        kappa=np.clip(mult.kappa + mult.rho * np.asarray(c), lo, hi),
    )


def update_penalty(mult: MultiplierState, violation, previous, tol=0.0) -> MultiplierState:
    """Grow ``rho`` when the worst violation failed to shrink by ``mult.shrink``.

    Nothing happens once the violation is within ``tol``.
    """
    if previous is None or violation <= tol or violation <= mult.shrink * previous:
        return mult
    return replace(mult, rho=min(mult.growth * mult.rho, mult.rho_max))


# -- inner loop ---------------------------------------------------------------


def _cap(alpha, direction_norm, max_step_norm):
    if max_step_norm is not None and alpha * direction_norm > max_step_norm:
        return max_step_norm / direction_norm
    return alpha


def inner_minimize(
    Vt,
    fp: FpState,
    mult: MultiplierState,
    problem: Problem,
    opts: SolverOptions,
    tol: float,
    rng=None,
    scales=None,
    monitor=None,
) -> InnerResult:
    """Minimise the augmented Lagrangian on the sphere for fixed ``mu`` and multipliers.

    Stops when the full-batch Riemannian gradient norm drops to ``tol``
    (checked every ``opts.check_interval`` steps for SGD, every step
    otherwise) or after ``opts.max_inner`` steps. ``monitor(point)`` is called
    at every check.
    """
    if rng is None:
        rng = np.random.default_rng(opts.rng_seed)
    if scales is None:
        scales = constraint_scales(problem, opts.normalize_constraints)
    proj = opts.projection

    def lagr(X):
        return augmented_lagrangian(X, fp, mult, problem, scales)

    def full_grad(X):
        return riemannian_gradient(X, fp, mult, problem, scales, projection=proj)

    def row(t, X, gnorm, step):
        u, c = scaled_residuals(X, problem, scales)
        return dict(
            inner_iter=t,
            objective=fp_objective(X, fp, problem),
            lagrangian=lagr(X),
            grad_norm=gnorm,
            max_violation=max_violation(u, c),
            step=step,
        )

    rows = []
    X = Vt
    if opts.method == "sgd":
        P = num_gradient_terms(problem)
        b = max(1, math.ceil(opts.batch_fraction * P))
        gnorm = manifold.norm(full_grad(X))
        t = 0
        step = 0.0
        while True:
            if t % opts.check_interval == 0 or t == opts.max_inner:
                if t:
                    gnorm = manifold.norm(full_grad(X))
                rows.append(row(t, X, gnorm, step))
                if monitor is not None:
                    monitor(X)
                if gnorm <= tol or t == opts.max_inner:
                    break
            batch = None if b == P else rng.choice(P, size=b, replace=False)
            xi = riemannian_gradient(X, fp, mult, problem, scales, batch=batch, projection=proj)
            xn = manifold.norm(xi)
            if xn == 0.0:
                t += 1
                continue
            alpha = step_size(t, opts.step_size, opts.decay)
            # the length cap shrinks with the schedule so late steps stay small
            cap = None if opts.max_step_norm is None else opts.max_step_norm * alpha / opts.step_size
            step = _cap(alpha, xn, cap)
            X = manifold.retract(X, -xi, step)
            t += 1
        return InnerResult(X, t, gnorm, gnorm <= tol, rows)

    # deterministic methods with Armijo backtracking
    g = full_grad(X)
    gnorm = manifold.norm(g)
    L = lagr(X)
    d = -g
    step = 0.0
    prev_alpha = None
    t = 0
    while True:
        rows.append(row(t, X, gnorm, step))
        if monitor is not None:
            monitor(X)
        if gnorm <= tol or t == opts.max_inner:
            break
        slope = manifold.inner(g, d)
        if slope >= 0:
            d = -g
            slope = -(gnorm**2)
        alpha = step_size(t, opts.step_size, opts.decay)
        if prev_alpha is not None:
            # start the search near the last accepted step, never above the schedule
            alpha = min(alpha, prev_alpha / opts.armijo_factor)
        alpha = _cap(alpha, manifold.norm(d), opts.max_step_norm)
        while True:
            Y = manifold.retract(X, d, alpha)
            L_new = lagr(Y)
            if L_new <= L + opts.armijo_slope * alpha * slope:
                break
            alpha *= opts.armijo_factor
            if alpha < 1e-16:
                Y = None
                break
        if Y is None:
            log.debug("line search stalled at inner step %d", t)
            break
        g_new = full_grad(Y)
        if opts.method == "cg":
            beta = manifold.norm(g_new) ** 2 / gnorm**2
            d = -g_new + beta * manifold.transport(Y, d)
        else:
            d = -g_new
        X, g, L, step = Y, g_new, L_new, alpha
        prev_alpha = alpha
        gnorm = manifold.norm(g)
        t += 1
    return InnerResult(X, t, gnorm, gnorm <= tol, rows)


# -- driver -------------------------------------------------------------------


def matched_filter_point(problem: Problem):
    """Unit-norm lifted point with every beam matched to its own channel at equal power."""
    F = np.hstack([problem.channels.H, problem.channels.G])
    norms = np.linalg.norm(F, axis=0)
    V = F / np.where(norms > 0, norms, 1.0)
    V *= np.sqrt(problem.max_power / F.shape[1])
    return manifold.lift(V, problem.max_power)


def initial_point(problem: Problem, opts: SolverOptions, rng):
    if opts.init == "matched":
        return matched_filter_point(problem)
    return manifold.random_point(problem.lifted_shape, rng)


def solve(problem: Problem, opts: SolverOptions | None = None, start=None) -> SolveResult:
    """Maximise the sum rate subject to sensing-gain, SINR and power constraints.

    Returns the feasible iterate with the highest sum rate seen at any
    convergence check; when no iterate is feasible, the one with the smallest
    worst-case violation. Deterministic for a given ``opts.rng_seed``.
    """
    opts = opts or SolverOptions()
    opts.validate()
    t0 = time.perf_counter()
    rng = np.random.default_rng(opts.rng_seed)
    scales = constraint_scales(problem, opts.normalize_constraints)
    lo, hi = opts.multiplier_bounds
    mult = MultiplierState.zeros(
        problem.num_targets,
        problem.num_users,
        rho=opts.rho0,
        clip_min=lo,
        clip_max=hi,
        growth=opts.penalty_growth,
        rho_max=opts.rho_max,
        shrink=opts.penalty_shrink,
    )
    X = initial_point(problem, opts, rng) if start is None else np.array(start, dtype=complex)
    stat = dict(scales=scales, projection=opts.projection, normalize=opts.normalize_objective)

    best = {"key": None, "point": X}

    def monitor(P):
        u, c = scaled_residuals(P, problem, scales)
        viol = max_violation(u, c)
        rate = float(np.sum(np.log2(1.0 + lifted_sinrs(P, problem))))
        feasible = viol <= opts.feasibility_tol
        key = (1, rate) if feasible else (0, -viol)
        if best["key"] is None or key > best["key"]:
            best["key"] = key
            best["point"] = P

    trace = []
    total_inner = 0
    alm_total = 0
    prev_rate = None
    prev_viol = None
    fp_round = 0
    for fp_round in range(opts.max_fp):
        fp = update_mu(X, problem, normalize=opts.normalize_objective)
        for alm_round in range(opts.max_alm):
            tol = opts.tolerance(alm_round)
            res = inner_minimize(X, fp, mult, problem, opts, tol, rng=rng, scales=scales, monitor=monitor)
            for r in res.rows:
                trace.append(
                    TraceRow(
                        iter=len(trace),
                        fp_round=fp_round,
                        alm_round=alm_round,
                        rho=mult.rho,
                        method=opts.method,
                        **r,
                    )
                )
            X = res.point
            total_inner += res.steps
            alm_total += 1
            u, c = scaled_residuals(X, problem, scales)
            viol = max_violation(u, c)
            if alm_total % opts.multiplier_cadence == 0:
                mult = update_multipliers(mult, u, c)
            mult = update_penalty(mult, viol, prev_viol, tol=opts.feasibility_tol)
            prev_viol = viol
            if res.grad_norm <= tol and viol <= opts.feasibility_tol:
                break
        rate = float(np.sum(np.log2(1.0 + lifted_sinrs(X, problem))))
        log.debug("fp round %d: sum rate %.6f, violation %.3g, rho %.3g", fp_round, rate, viol, mult.rho)
        if prev_rate is not None and abs(rate - prev_rate) < opts.fp_tol:
            break
        prev_rate = rate

    P = best["point"]
    r = residuals(P, problem)
    u, c = r.u / scales[0], r.c / scales[1]
    viol = max_violation(u, c)
    sinr = lifted_sinrs(P, problem)
    return SolveResult(
        point=P,
        V=manifold.extract(P, problem.max_power),
        sum_rate=float(np.sum(np.log2(1.0 + sinr))),
        sinr=sinr,
        gains=lifted_gains(P, problem),
        residuals=r,
        max_violation=viol,
        feasible=viol <= opts.feasibility_tol,
        fp_rounds=fp_round + 1,
        alm_rounds=alm_total,
        inner_iterations=total_inner,
        wall_time=time.perf_counter() - t0,
        trace=trace,
        multipliers=mult,
        initial_grad_norm=trace[0].grad_norm if trace else float("nan"),
        final_grad_norm=trace[-1].grad_norm if trace else float("nan"),
        stationarity=stationarity(P, mult, problem, **stat),
    )


def options_dict(opts: SolverOptions) -> dict:
    d = asdict(opts)
    d["multiplier_bounds"] = list(opts.multiplier_bounds)
    return d
