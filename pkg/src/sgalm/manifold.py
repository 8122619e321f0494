"""The complex unit sphere ``{X : ||X||_F = 1}`` of lifted beamformers.

A lifted beamformer stacks ``V / sqrt(p_max)`` over an auxiliary row ``z``
that soaks up unused power, turning ``Tr(V V^H) <= p_max`` into a sphere
constraint. Points and tangent vectors are plain complex ndarrays of shape
(M+1) x (K+N).
"""

from __future__ import annotations

import numpy as np


class DegenerateStepError(ArithmeticError):
    pass


class PowerExceededError(ValueError):
    pass


def inner(X, Y) -> float:
    """Riemannian metric: real part of the trace inner product."""
    return float(np.vdot(X, Y).real)


def norm(X) -> float:
    return float(np.linalg.norm(X))


def lift(V, max_power):
    """Embed a physical beamformer onto the sphere.

    The auxiliary row gets equal non-negative real entries carrying the power
    slack ``1 - Tr(V V^H) / p_max``.
    """
    V = np.asarray(V, dtype=complex)
    scaled = V / np.sqrt(max_power)
    used = np.vdot(scaled, scaled).real
    if used > 1.0 + 1e-9:
        raise PowerExceededError(f"Tr(VV^H) = {used * max_power:.6g} exceeds p_max = {max_power:.6g}")
    slack = max(0.0, 1.0 - used)
    L = V.shape[1]
    z = np.full(L, np.sqrt(slack / L))
    return np.vstack([scaled, z[None, :]])


def extract(Vt, max_power):
    return np.sqrt(max_power) * np.asarray(Vt)[:-1]


def project_tangent(Vt, G, mode="trace"):
    """Project an ambient direction onto the tangent space at ``Vt``.

    ``mode="trace"`` removes the radial component under the trace metric,
    which is the correct projection for the sphere. ``mode="hadamard"``
    applies the entrywise rule ``G - Re{G o conj(Vt)} o Vt`` instead; that is
    the projection for a product of circles and is kept only for comparison.
    """
    if mode == "trace":
        return G - inner(Vt, G) * Vt
    if mode == "hadamard":
        return G - np.real(G * Vt.conj()) * Vt
    raise ValueError(f"unknown projection mode {mode!r}")


def retract(Vt, xi, alpha=1.0):
    Y = Vt + alpha * xi
    n = np.linalg.norm(Y)
    if n < 1e-14:
        raise DegenerateStepError("retraction of a near-zero point")
    return Y / n


def transport(Vt_new, xi):
    """Vector transport by re-projection onto the new tangent space."""
    return project_tangent(Vt_new, xi)


def random_point(shape, rng):
    X = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return X / np.linalg.norm(X)


def dimension(shape) -> int:
    """Real dimension of the sphere in C^{rows x cols}."""
    rows, cols = shape
    return 2 * rows * cols - 1
