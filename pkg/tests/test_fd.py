import numpy as np
import pytest

from tugharnack.boundary import Affine, Constant, Trig
from tugharnack.dpp import FieldError, GridField
from tugharnack.fd import (FdError, FdProblem, cross_validate, discrete_max_principle_gap,
                           radial_profile, solve_plaplace)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 6.0])
def test_affine_exact(p):
    F = Affine([0.3, 0.7], 1.0)
    u = solve_plaplace(FdProblem(p, 0.05, F))
    m = u.inside()
    x = u.coords()[m]
    assert np.max(np.abs(u.values[m] - F.extension(x))) < 1e-6


def test_quadratic_harmonic_exact():
    # x^2 - y^2 is discretely harmonic on the criss-cross mesh
    u = solve_plaplace(FdProblem(2.0, 0.05, Trig(2)))
    m = u.inside()
    assert np.max(np.abs(u.values[m] - Trig(2).extension(u.coords()[m]))) < 1e-10


def test_harmonic_second_order():
    errs = []
    for h in (0.05, 0.025):
        u = solve_plaplace(FdProblem(2.0, h, Trig(5)))
        m = u.inside()
        x = u.coords()[m]
        errs.append(np.max(np.abs(u.values[m] - Trig(5).extension(x))))
    assert errs[1] < errs[0] / 2.5


def test_radial_fundamental_solution():
    # p = 3 in the plane: r^{1/2} is p-harmonic
    p = 3.0
    k = radial_profile(p)
    assert k == pytest.approx(0.5)
    prob = FdProblem(p, 0.02, Constant(1.0), hole_radius=0.25,
                     hole_boundary=Constant(0.25 ** k))
    u = solve_plaplace(prob)
    x = u.coords()
    r = np.linalg.norm(x, axis=-1)
    m = (r > 0.35) & (r < 0.95)
    assert np.max(np.abs(u.values[m] - r[m] ** k)) < 0.02


def test_max_principle():
    F = Trig(3, amp=1.0, offset=0.5)
    u = solve_plaplace(FdProblem(4.0, 0.05, F))
    # Dirichlet nodes sit on or just outside the circle
    fixed = ~(np.linalg.norm(u.coords(), axis=-1) < 1 - 1e-12)
    assert discrete_max_principle_gap(u, u.values[fixed]) < 1e-9


def test_status_and_meta():
    u = solve_plaplace(FdProblem(2.0, 0.1, Trig(1)))
    assert u.meta["status"] == "converged"
    assert u.meta["boundary_key"] == Trig(1).key


def test_problem_errors():
    with pytest.raises(FdError):
        FdProblem(1.0, 0.1, Trig(1))
    with pytest.raises(FdError):
        FdProblem(2.0, 0.0, Trig(1))
    with pytest.raises(FdError):
        FdProblem(2.0, 0.1, Trig(1), hole_radius=0.2)


def test_cross_validate():
    u = solve_plaplace(FdProblem(2.0, 0.05, Trig(1)))
    res = cross_validate(u, u, 0.2)
    assert res["sup_diff"] < 1e-14
    v = solve_plaplace(FdProblem(2.0, 0.05, Trig(2)))
    with pytest.raises(FieldError):
        cross_validate(u, v, 0.2)


def test_radius_scaling():
    # data read by angle on the circle of radius 5
    u = solve_plaplace(FdProblem(2.0, 0.25, Trig(1), radius=5.0))
    assert abs(float(u(np.array([2.5, 0.0]))) - 0.5) < 0.01
