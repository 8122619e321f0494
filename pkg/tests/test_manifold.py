import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgalm import manifold


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_lift_full_power(rng):
    V = crand(rng, 6, 3)
    V *= np.sqrt(2.0) / np.linalg.norm(V)
    X = manifold.lift(V, 2.0)
    assert np.allclose(X[-1], 0)
    assert manifold.norm(X) == pytest.approx(1.0, abs=1e-12)


def test_lift_zero_beams():
    X = manifold.lift(np.zeros((4, 3)), 1.0)
    assert np.linalg.norm(X[-1]) == pytest.approx(1.0)
    assert np.all(X[-1].real >= 0) and np.all(X[-1].imag == 0)


def test_lift_extract_roundtrip(rng):
    for _ in range(20):
        V = crand(rng, 5, 4)
        V *= rng.uniform(0, 1) * np.sqrt(3.0) / np.linalg.norm(V)
        X = manifold.lift(V, 3.0)
        assert manifold.norm(X) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(manifold.extract(X, 3.0), V, rtol=0, atol=1e-14)


def test_lift_rejects_excess_power(rng):
    V = crand(rng, 4, 2)
    V *= 1.01 / np.linalg.norm(V)
    with pytest.raises(manifold.PowerExceededError):
        manifold.lift(V, 1.0)


def test_extract_power_identity(rng):
    for _ in range(20):
        X = manifold.random_point((7, 3), rng)
        V = manifold.extract(X, 5.0)
        z = X[-1]
        assert np.vdot(V, V).real == pytest.approx(5.0 * (1 - np.vdot(z, z).real), abs=1e-10)
    X = np.zeros((4, 2), complex)
    X[-1] = [0.6, 0.8]
    assert np.all(manifold.extract(X, 1.0) == 0)


def test_projection_radial_and_idempotent(rng):
    X = manifold.random_point((6, 4), rng)
    assert manifold.norm(manifold.project_tangent(X, 3.7 * X)) <= 1e-14
    G = crand(rng, 6, 4)
    P = manifold.project_tangent(X, G)
    assert np.allclose(manifold.project_tangent(X, P), P, rtol=0, atol=1e-12)
    assert abs(manifold.inner(X, P)) <= 1e-12


def test_hadamard_projection_is_not_sphere_tangent(rng):
    X = manifold.random_point((6, 4), rng)
    G = crand(rng, 6, 4)
    P = manifold.project_tangent(X, G, mode="hadamard")
    assert abs(manifold.inner(X, P)) > 1e-6
    with pytest.raises(ValueError):
        manifold.project_tangent(X, G, mode="oblique")


def test_retract(rng):
    X = manifold.random_point((5, 3), rng)
    assert np.array_equal(manifold.retract(X, np.zeros_like(X), 0.3), X / np.linalg.norm(X))
    xi = manifold.project_tangent(X, crand(rng, 5, 3))
    for a in (1e-3, 0.1, 10.0):
        assert manifold.norm(manifold.retract(X, xi, a)) == pytest.approx(1.0, abs=1e-15)
    for a in (1e-4, 1e-3, 1e-2):
        err = manifold.norm(manifold.retract(X, xi, a) - (X + a * xi))
        assert err <= a**2 * manifold.norm(xi) ** 2


def test_retract_degenerate(rng):
    X = manifold.random_point((3, 2), rng)
    with pytest.raises(manifold.DegenerateStepError):
        manifold.retract(X, -X, 1.0)


def test_random_point(rng):
    X = manifold.random_point((9, 4), np.random.default_rng(5))
    Y = manifold.random_point((9, 4), np.random.default_rng(5))
    assert np.array_equal(X, Y)
    assert manifold.norm(X) == pytest.approx(1.0)
    shape = (4, 3)
    draws = np.stack([manifold.random_point(shape, rng) for _ in range(10_000)])
    bound = 3 / np.sqrt(1e4 * 2 * shape[0] * shape[1])
    assert abs(draws.mean()) < bound


def test_dimension():
    assert manifold.dimension((34, 4)) == 2 * 34 * 4 - 1


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(1e-6, 1e3))
def test_projection_and_retraction_properties(rows, cols, seed, scale):
    rng = np.random.default_rng(seed)
    X = manifold.random_point((rows, cols), rng)
    G = scale * crand(rng, rows, cols)
    P = manifold.project_tangent(X, G)
    assert abs(manifold.inner(X, P)) <= 1e-10 * max(1.0, manifold.norm(G))
    Y = manifold.retract(X, P, rng.uniform(0, 2) / max(scale, 1.0))
    assert abs(manifold.norm(Y) - 1) <= 1e-12
