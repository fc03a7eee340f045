import numpy as np
import pytest

from tugharnack.boundary import (Affine, Constant, FunctionBoundary, Sampled, Trig, VonMises,
                                 from_name, positive_battery)


def angles(n=50):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([np.cos(t), np.sin(t)])


def test_projection_reads_by_angle():
    F = Trig(1)
    assert np.allclose(F(3 * angles()), F(angles()))


def test_affine_extension_exact():
    F = Affine([1.0, -2.0], 0.5)
    x = np.array([[0.3, 0.1], [0.0, 0.0]])
    assert np.allclose(F.extension(x), x @ [1, -2] + 0.5)


def test_trig_extension_harmonic():
    # r^k cos(k theta) is harmonic: discrete Laplacian vanishes to O(h^2)
    F = Trig(3, amp=1.0)
    h = 1e-3
    x = np.array([0.2, 0.3])
    lap = sum(F.extension(x + s * h * e) for e in np.eye(2) for s in (1, -1)) - 4 * F.extension(x)
    assert abs(lap / h ** 2) < 1e-4


def test_keys_stable_and_distinct():
    assert Trig(1).key == Trig(1).key
    assert Trig(1).key != Trig(2).key
    assert (-Trig(1)).key != Trig(1).key


def test_transforms():
    F = Trig(1)
    y = angles()
    assert np.allclose((-F)(y), -F(y))
    assert np.allclose((F + 2)(y), F(y) + 2)
    Q = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(F.rotated(Q)(y @ Q.T), F(y))


def test_sampled_interpolates_nodes():
    vals = np.arange(8.0)
    F = Sampled(vals)
    assert np.allclose(F(angles(8)), vals)


def test_function_boundary():
    F = FunctionBoundary(lambda y: y[..., 0] ** 2, "x^2")
    assert np.allclose(F(angles()), angles()[:, 0] ** 2)


def test_from_name():
    assert isinstance(from_name("cos", 2), Trig)
    assert isinstance(from_name("cos", 3), Affine)
    assert from_name("constant", c=2.0)(angles()).tolist() == [2.0] * 50
    with pytest.raises(ValueError):
        from_name("nope")


def test_positive_battery():
    b = positive_battery()
    assert len(b) == 20
    y = angles(400)
    assert all(np.min(F(y)) > 0 for F in b)
    assert len({F.key for F in b}) == 20


def test_vonmises_peak():
    F = VonMises(kappa=2.0, center=0.0)
    v = F(angles(100))
    assert np.argmax(v) == 0
    assert np.isclose(v.max(), np.exp(2.0))


def test_constant():
    assert np.all(Constant(1.5).extension(np.zeros((3, 2))) == 1.5)
