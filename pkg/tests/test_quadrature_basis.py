from __future__ import annotations
import numpy as np
import pytest
from dualcell.errors import QuadratureError
from dualcell.layer3_discretization.quadrature_basis import (
    LagrangeBasis, NodeKind, dual_rule, gauss_rule, lagrange_deriv, lagrange_eval, lgr_rule, reflect_rule,
    tensor_rule,
)


@pytest.mark.parametrize("degree", range(21))
def test_lgr_rules_integrate_degree_2p(degree):
    primal = lgr_rule(degree)
    dual = dual_rule(primal)
    for m in range(2 * degree + 1):
        exact = 1.0 / (m + 1)
        assert primal.integrate(primal.nodes ** m) == pytest.approx(exact, rel=1e-12)
        assert dual.integrate(dual.nodes ** m) == pytest.approx(exact, rel=1e-12)


def test_lgr_endpoints_and_ordering():
    for degree in (0, 1, 5, 12):
        primal = lgr_rule(degree)
        dual = dual_rule(primal)
        assert primal.size == degree + 1
        assert primal.nodes[-1] == 1.0
        assert dual.nodes[0] == 0.0
        assert np.all(np.diff(primal.nodes) > 0)
        assert np.all(primal.weights > 0)
        np.testing.assert_allclose(dual.nodes, 1.0 - primal.nodes[::-1], atol=1e-15)
        np.testing.assert_array_equal(dual.weights, primal.weights[::-1])


def test_two_point_radau_values():
    rule = lgr_rule(1)
    np.testing.assert_allclose(rule.nodes, [1 / 3, 1.0], rtol=1e-14)
    np.testing.assert_allclose(rule.weights, [0.75, 0.25], rtol=1e-14)


def test_degree_zero_is_the_right_endpoint():
    rule = lgr_rule(0)
    assert rule.nodes.tolist() == [1.0]
    assert rule.weights.tolist() == [1.0]
    assert dual_rule(rule).nodes.tolist() == [0.0]


def test_reflecting_twice_returns_the_same_family():
    primal = lgr_rule(4)
    dual = dual_rule(primal)
    assert dual.kind == NodeKind.DUAL_LGR
    assert reflect_rule(dual) is primal


def test_dual_rule_rejects_non_primal_families():
    with pytest.raises(QuadratureError):
        dual_rule(gauss_rule(3))


def test_degree_cap_and_negative_degree(monkeypatch):
    monkeypatch.setenv("DUALCELL_DEGREE_CAP", "8")
    with pytest.raises(QuadratureError):
        lgr_rule(33)
    with pytest.raises(QuadratureError):
        lgr_rule(-1)


def test_gauss_rule_exactness():
    rule = gauss_rule(4)
    for m in range(8):
        assert rule.integrate(rule.nodes ** m) == pytest.approx(1.0 / (m + 1), rel=1e-13)


def test_tensor_rule_runs_xi_fastest():
    rule = lgr_rule(2)
    xi, eta, w = tensor_rule(rule)
    assert xi[:3].tolist() == rule.nodes.tolist()
    assert np.all(eta[:3] == rule.nodes[0])
    assert w.sum() == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("degree", [0, 1, 3, 8])
def test_lagrange_basis_is_nodal(degree):
    basis = LagrangeBasis(dual_rule(lgr_rule(degree)))
    np.testing.assert_allclose(basis.tabulate(basis.family.nodes), np.eye(degree + 1), atol=1e-14)
    x = np.linspace(0.0, 1.0, 17)
    np.testing.assert_allclose(basis.tabulate(x).sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(basis.tabulate_deriv(x).sum(axis=1), 0.0, atol=1e-9)


def test_lagrange_reproduces_polynomials_and_derivatives():
    basis = LagrangeBasis(lgr_rule(4))
    coeffs = np.array([0.3, -1.0, 2.0, 0.5, -0.25])
    poly = np.polynomial.Polynomial(coeffs)
    nodal = poly(basis.family.nodes)
    x = np.array([0.0, 0.1234, 0.5, 0.99])
    np.testing.assert_allclose(basis.tabulate(x) @ nodal, poly(x), atol=1e-12)
    np.testing.assert_allclose(basis.tabulate_deriv(x) @ nodal, poly.deriv()(x), atol=1e-10)


def test_scalar_eval_and_index_check():
    basis = LagrangeBasis(lgr_rule(2))
    node = basis.family.nodes[1]
    assert lagrange_eval(basis, 1, node) == pytest.approx(1.0)
    assert lagrange_eval(basis, 0, node) == pytest.approx(0.0, abs=1e-15)
    assert lagrange_deriv(basis, 0, 0.3) == pytest.approx(basis.tabulate_deriv([0.3])[0, 0])
    with pytest.raises(QuadratureError):
        basis.eval(3, 0.5)
