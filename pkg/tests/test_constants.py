import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kornlab import constants, diffops, linsolve
from kornlab.errors import OptimizationStallError, ParameterError
from kornlab.field import Bump, VectorField, generate, integrate, rot90_rigid
from kornlab.geometry import Ball, Transformed, named_shape, rasterize_shape


@pytest.mark.parametrize(
    "p, N, diam, field, expected",
    [
        (2, 3, 1.0, "C_pN", (2 + math.sqrt(3)) * 2 / 5),
        (2, 2, math.sqrt(2), "kappa_Omega", math.sqrt(2) * (2 + math.sqrt(2)) / 2),
        (2, 2, math.sqrt(2), "kappa_boundary", 2 * 0.75 * math.sqrt(2)),
        (1, 1, 1.0, "C_pN", 2.0),
    ],
)
def test_explicit_constant_values(p, N, diam, field, expected):
    assert math.isclose(getattr(constants.paper_constants(p, N, diam), field), expected, rel_tol=1e-15)


def test_explicit_constant_printed_decimals():
    assert round(constants.paper_constants(2, 3, 1).C_pN, 6) == 1.492820
    c = constants.paper_constants(2, 2, math.sqrt(2))
    assert round(c.kappa_Omega, 6) == 2.414214 and round(c.kappa_boundary, 6) == 2.121320


@pytest.mark.parametrize("p, N, diam", [(0.5, 2, 1.0), (2, 4, 1.0), (2, 0, 1.0), (2, 2, 0.0), (2, 2, -1.0)])
def test_explicit_constants_reject_bad_input(p, N, diam):
    with pytest.raises(ParameterError):
        constants.paper_constants(p, N, diam)


@given(st.floats(1, 20), st.sampled_from([1, 2, 3]), st.floats(1e-3, 1e3), st.floats(1.0001, 10))
def test_explicit_constants_positive_and_monotone_in_diam(p, N, diam, grow):
    a = constants.paper_constants(p, N, diam)
    b = constants.paper_constants(p, N, diam * grow)
    assert a.C_pN > 0 and a.kappa_Omega > 0 and a.kappa_boundary > 0
    assert b.kappa_Omega > a.kappa_Omega and b.kappa_boundary > a.kappa_boundary
    assert b.C_pN == a.C_pN


# --- p = 2 eigen constants -------------------------------------------------


@pytest.mark.parametrize("shape", ["square", "ball", "annulus", "lshape"])
def test_first_korn_bracket(shape):
    m = rasterize_shape(named_shape(shape), 1 / 8)
    est = constants.korn_first_p2(m)
    assert 1 - 1e-9 <= est.value <= 2 + 1e-6
    assert est.bound_direction == "sharp-eigen" and est.residual <= linsolve.EIG_TOL
    assert est.maximizer.is_compact()


def _rot_grad_bump_quotient(h):
    m = rasterize_shape(named_shape("square"), h)
    x = m.grid.coords()
    t = 2 * x - 1
    # psi = prod (1 - t^2)^3, u = rot90(grad psi) evaluated analytically
    f = np.clip(1 - t**2, 0, None)
    dpsi0 = 3 * f[..., 0] ** 2 * (-2 * t[..., 0]) * 2 * f[..., 1] ** 3
    dpsi1 = 3 * f[..., 1] ** 2 * (-2 * t[..., 1]) * 2 * f[..., 0] ** 3
    vals = np.stack([-dpsi1, dpsi0], axis=-1)
    vals[~m.interior] = 0
    u = VectorField(m, vals)
    g = diffops.grad(u, diffops.DUAL).values
    s = diffops.sym_grad(u, diffops.DUAL).values
    q = integrate(m, np.sum(g**2, axis=(-1, -2))) / integrate(m, np.sum(s**2, axis=(-1, -2)))
    return m, q


def test_first_korn_dominates_divergence_free_oracle():
    qs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        m, q = _rot_grad_bump_quotient(h)
        assert q <= constants.korn_first_p2(m).value + 1e-9
        qs.append(q)
    # the oracle quotient climbs toward 2 under refinement
    assert qs[0] < qs[1] < qs[2] <= 2 + 1e-12
    assert qs[2] > 1.9


def test_first_korn_scale_invariance():
    m1 = rasterize_shape(Ball((0.0, 0.0), 1.0), 1 / 8)
    m2 = rasterize_shape(Ball((0.0, 0.0), 2.0), 1 / 4)
    assert np.array_equal(m1.labels, m2.labels)
    a, b = constants.korn_first_p2(m1).value, constants.korn_first_p2(m2).value
    assert abs(a - b) <= 1e-10


def test_second_korn_exceeds_first(square8):
    first = constants.korn_first_p2(square8)
    second = constants.korn_second_p2(square8)
    assert second.value > first.value
    assert second.residual <= linsolve.EIG_TOL
    assert not second.maximizer.is_compact()


def test_second_korn_rigid_quotient(square8):
    u = generate(rot90_rigid(), square8)
    q = constants.evaluate_quotient(u, 2.0, "second")
    mass = integrate(square8, np.sum(u.values**2, axis=-1))
    area = square8.n_inside * square8.grid.cell_volume
    assert math.isclose(q, (mass + 2 * area) / mass, rel_tol=1e-12)
    assert q <= constants.korn_second_p2(square8).value * (1 + 1e-9)


def test_second_korn_depends_on_scale():
    m1 = rasterize_shape(named_shape("square"), 1 / 8)
    m2 = rasterize_shape(Transformed(named_shape("square"), 2.0, (0.0, 0.0)), 1 / 4)
    assert not math.isclose(constants.korn_second_p2(m1).value, constants.korn_second_p2(m2).value,
                            rel_tol=1e-3)


def test_estimate_record(square8):
    rec = constants.korn_first_p2(square8).to_record("square")
    assert set(rec) == {"shape", "p", "mode", "h", "value", "boundDirection", "residual", "seed"}
    assert rec["shape"] == "square" and rec["mode"] == "first" and rec["h"] == square8.h


# --- general exponent --------------------------------------------------------


@pytest.mark.parametrize("mode", ["first", "second"])
def test_general_p_matches_eigen_at_p2(mode, square8):
    eig = (constants.korn_first_p2 if mode == "first" else constants.korn_second_p2)(square8)
    opt = constants.korn_general_p(square8, 2.0, mode, restarts=2)
    assert abs(opt.value - eig.value) <= 0.01 * eig.value
    # a lower bound can exceed the sharp value only by solver tolerance
    assert opt.value <= eig.value * (1 + 10 * linsolve.EIG_TOL)
    assert opt.bound_direction == "lower-bound"


@pytest.mark.parametrize("p, mode", [(1.5, "first"), (3.0, "second"), (1.5, "pk-plain"), (3.0, "pk-weighted")])
def test_general_p_value_reproducible_from_maximizer(p, mode, square8):
    est = constants.korn_general_p(square8, p, mode, restarts=2)
    again = constants.evaluate_quotient(est.maximizer, p, mode)
    assert abs(again - est.value) <= 1e-12 * est.value
    assert est.meta["failed_restarts"] == 0


def test_general_p_dilation_invariance():
    m1 = rasterize_shape(Ball((0.0, 0.0), 1.0), 1 / 4)
    m2 = rasterize_shape(Ball((0.0, 0.0), 2.0), 1 / 2)
    a = constants.korn_general_p(m1, 3.0, "first", restarts=1).value
    b = constants.korn_general_p(m2, 3.0, "first", restarts=1).value
    assert abs(a - b) <= 1e-10 * a


def test_general_p_deterministic(square8):
    a = constants.korn_general_p(square8, 1.5, "first", restarts=2, seed=4)
    b = constants.korn_general_p(square8, 1.5, "first", restarts=2, seed=4)
    assert a.value == b.value and a.seed == b.seed


def test_general_p_stall_error(square8):
    with pytest.raises(OptimizationStallError) as exc:
        constants.korn_general_p(square8, 2.0, "first", restarts=2, max_iter=0)
    assert exc.value.best is not None


@pytest.mark.parametrize("p, mode", [(1.0, "first"), (0.5, "pk-plain"), (2.0, "third")])
def test_general_p_rejects_bad_input(p, mode, square8):
    with pytest.raises(ParameterError):
        constants.korn_general_p(square8, p, mode)


# --- Poincare-Korn -----------------------------------------------------------


def test_poincare_korn_square_respects_explicit_bound(square16):
    est = constants.poincare_korn_best(square16, 2.0)
    assert est.value <= constants.paper_constants(2, 2, math.sqrt(2)).kappa_Omega
    assert est.meta["explicit_bound"] == pytest.approx(2.414213562373095)
    assert est.residual <= 1e-8


def test_weighted_poincare_korn_respects_dimension_constant(ball16):
    est = constants.poincare_korn_best(ball16, 2.0, weighted=True)
    assert est.value <= constants.paper_constants(2, 2, 1.0).C_pN
    shifted = constants.poincare_korn_best(ball16, 2.0, weighted=True, x0=(0.5, 0.0))
    assert shifted.value <= constants.paper_constants(2, 2, 1.0).C_pN
    assert shifted.value != est.value


def test_poincare_korn_interval_is_classical_poincare(segment32):
    est = constants.poincare_korn_best(segment32, 2.0, tol=1e-10)
    h = segment32.h
    G = linsolve.gram(linsolve.assemble("grad", segment32), segment32)
    M = linsolve.assemble("mass", segment32)
    mu = linsolve.dense_gen_eig(G, M)[0]
    assert math.isclose(est.value, mu**-0.5, rel_tol=1e-9)
    assert math.isclose(est.value, h / (2 * math.sin(math.pi * h / 2)), rel_tol=1e-9)


def test_poincare_korn_general_p(square8):
    est = constants.poincare_korn_best(square8, 3.0, restarts=2)
    assert est.bound_direction == "lower-bound"
    assert 0 < est.value <= est.meta["explicit_bound"]
    assert est.maximizer is not None and np.any(est.maximizer.values)
