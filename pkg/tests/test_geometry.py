import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cabletrack.errors import DomainError, InvalidInput
from cabletrack.geometry import (
    VecMap,
    axis_angle,
    cross,
    dot,
    hat,
    is_rotation,
    project_rotation,
    rot_z,
    s2_error,
    so3_error,
    vec_map,
    vee,
)

from conftest import random_tangent, random_units

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)


def test_hat_examples():
    assert np.array_equal(hat([0, 0, 0]), np.zeros((3, 3)))
    assert np.array_equal(hat([1, 2, 3]), np.array([[0, -3, 2], [3, 0, -1], [-2, 1, 0]]))
    assert np.allclose(vee(hat([0.3, -1.2, 7])), [0.3, -1.2, 7], atol=0)


def test_vee_rejects_non_skew():
    with pytest.raises(InvalidInput):
        vee(np.eye(3))


@given(vec3, vec3)
def test_hat_is_cross_product(a, b):
    assert np.allclose(hat(a) @ b, np.cross(a, b), rtol=1e-12, atol=1e-9)


@given(arrays(np.float64, (3, 3), elements=finite))
def test_hat_vee_inverse_on_skew(M):
    S = 0.5 * (M - M.T)
    assert np.allclose(hat(vee(S)), S, atol=1e-12)


def test_triple_product(rng):
    a, b, c = rng.normal(size=(3, 1000, 3))
    lhs = dot(a, cross(b, c))
    rhs = dot(b, cross(c, a))
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_projector_identity(rng):
    p = random_units(rng, 1000)
    a = random_tangent(rng, p)
    for pi, ai in zip(p[:200], a[:200]):
        P = hat(pi)
        assert np.allclose(-P @ P @ ai, ai, atol=1e-12)


def test_s2_error_examples():
    q = np.array([0.0, 0.0, -1.0])
    e, psi = s2_error(q, q)
    assert np.allclose(e, 0) and psi == 0
    e, psi = s2_error(q, np.array([np.sin(0.1), 0.0, -np.cos(0.1)]))
    assert np.allclose(e, [0, -0.099833, 0], atol=5e-7)
    assert abs(psi - 0.0049958) < 5e-8
    e, psi = s2_error(q, -q)
    assert np.allclose(e, 0) and psi == pytest.approx(2.0)


def test_s2_error_identity_many(rng):
    q_d = random_units(rng, 100_000)
    q = random_units(rng, 100_000)
    e, psi = s2_error(q_d, q)
    assert np.max(np.abs(dot(e, e) - psi * (2 - psi))) < 1e-12


def test_so3_error_examples():
    R_d = axis_angle(np.array([0.3, -0.2, 0.5]))
    e_R, e_W = so3_error(R_d, R_d, np.ones(3), np.ones(3))
    assert np.allclose(e_R, 0, atol=1e-15) and np.allclose(e_W, 0, atol=1e-15)
    e_R, e_W = so3_error(R_d, rot_z(0.2) @ R_d, np.zeros(3), np.zeros(3))
    # a world-frame z rotation appears in body axes after left-multiplication
    assert np.linalg.norm(e_R) == pytest.approx(np.sin(0.2), abs=1e-12)
    e_R, _ = so3_error(np.eye(3), rot_z(0.2), np.zeros(3), np.zeros(3))
    assert np.allclose(e_R, [0, 0, 0.198669], atol=5e-7)
    _, e_W = so3_error(np.eye(3), np.eye(3), np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))
    assert np.allclose(e_W, 0)


def test_vec_map_examples():
    assert np.array_equal(vec_map([0, 0, 0], VecMap.TANH), [0, 0, 0])
    assert np.array_equal(vec_map([0.0], VecMap.SECH), [1.0])
    assert vec_map(vec_map([0.5], VecMap.COSH), VecMap.LN)[0] == pytest.approx(0.120114, abs=1e-6)
    with pytest.raises(DomainError):
        vec_map([1.0, 0.0], VecMap.LN)


def test_rotation_projection(rng):
    R = axis_angle(rng.normal(size=3)) + 1e-6 * rng.normal(size=(3, 3))
    P = project_rotation(R)
    assert is_rotation(P)
    assert np.linalg.norm(P.T @ P - np.eye(3)) < 1e-14
