# ABOUTME: Unit tests for forward-mode evaluation of expressions
# ABOUTME: Tests values, exact directional derivatives against finite differences, linearity and error handling
import numpy as np
import pytest
from pytest import approx

from evolve.dual import (
    DomainError,
    EvaluationError,
    SingularMatrixError,
    evaluate,
    evaluate_batch,
    evaluate_dual,
)
from evolve.expr import parse

LC_CONSTANTS = {"e": np.array([0.0, 0.0, 1.0]), "G": np.eye(3), "c": 0.25}

# All defined for t in [-1, 1] and F with det(F) > 0
CORPUS = [
    "det(F)",
    "tr(transpose(F)*F)",
    "exp(-t)*det(F)",
    "dot(F*e, G*(F*e)) + c",
    "(1 + t^2) * det(F) - 3 / (2 + t)",
    "log(det(F)) + sin(t) * cos(t) - sqrt(1 + t^2)",
    "tr(inv(F)*G) * t^3",
    "dot(inv(transpose(F))*e, e) / det(F)",
    "det(F*mat(vec(1, t, 0), vec(0, 1, 0), vec(0, 0, 2 + t)))",
    "-(tr(F*F) - t)^2",
]


def random_points(seed, count=100):
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < count:
        F = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
        if np.linalg.det(F) < 0.2:
            continue
        points.append((rng.uniform(-1, 1), F, rng.normal(), rng.normal(size=(3, 3))))
    return points


def test_det_of_identity():
    assert evaluate(parse("det(F)"), 0.0, np.eye(3)) == 1.0


def test_time_scaled_det():
    assert evaluate(parse("(1+t)*det(F)"), 1.0, np.diag([2.0, 1.0, 1.0])) == approx(4.0)


def test_liquid_crystal_r_at_identity():
    ast = parse("dot(F*e, G*(F*e)) + c", LC_CONSTANTS)

    assert evaluate(ast, 0.0, np.eye(3), LC_CONSTANTS) == approx(1.25)


def test_det_derivative_is_trace_at_identity():
    E = np.arange(9.0).reshape(3, 3)

    value, derivative = evaluate_dual(parse("det(F)"), 0.0, np.eye(3), 0.0, E)

    assert value == approx(1.0)
    assert derivative == approx(np.trace(E))


def test_det_derivative_at_singular_argument():
    G = np.diag([0.0, 0.0, 1.0])
    E33 = np.zeros((3, 3))
    E33[2, 2] = 1.0

    value, derivative = evaluate_dual(parse("det(F - G)", {"G": G}), 0.0, np.eye(3), 0.0, E33, {"G": G})

    assert value == approx(0.0, abs=1e-15)
    assert derivative == approx(1.0)


def test_det_derivative_at_singular_argument_matches_central_difference():
    P = np.diag([1.0, 1.0, 0.0])
    ast = parse("det(F*P + t*G)", {"P": P, "G": np.eye(3)})
    constants = {"P": P, "G": np.eye(3)}
    rng = np.random.default_rng(7)
    F, dF = np.eye(3) + 0.3 * rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    h = 1e-6

    _, derivative = evaluate_dual(ast, 0.0, F, 0.7, dF, constants)

    plus = evaluate(ast, h * 0.7, F + h * dF, constants)
    minus = evaluate(ast, -h * 0.7, F - h * dF, constants)
    assert derivative == approx((plus - minus) / (2 * h), rel=1e-6, abs=1e-8)


def test_polynomial_time_derivative():
    assert evaluate_dual(parse("t*t"), 3.0, np.eye(3), 1.0, np.zeros((3, 3))) == (9.0, 6.0)


def test_matrix_literal_uses_rows():
    source = "dot(mat(vec(1, 2, 3), vec(4, 5, 6), vec(7, 8, 9))*vec(1, 0, 0), vec(0, 1, 0))"

    assert evaluate(parse(source), 0.0, np.eye(3)) == approx(4.0)


def test_literal_derivative_in_time():
    ast = parse("det(mat(vec(2, 0, 0), vec(0, 3, 0), vec(0, 0, t)))")

    assert evaluate_dual(ast, 4.0, np.eye(3), 1.0, np.zeros((3, 3))) == (approx(24.0), approx(6.0))


def test_inverse_derivative_closed_form():
    """d tr(F^-1) along U is -tr(F^-1 U F^-1)."""
    F = np.diag([2.0, 1.0, 4.0]) + 0.1
    U = np.random.default_rng(3).normal(size=(3, 3))
    F_inv = np.linalg.inv(F)

    _, derivative = evaluate_dual(parse("tr(inv(F))"), 0.0, F, 0.0, U)

    assert derivative == approx(-np.trace(F_inv @ U @ F_inv), rel=1e-12)


def test_leibniz_rule_bit_for_bit():
    F = np.diag([2.0, 3.0, 0.5]) + 0.05
    E = np.random.default_rng(11).normal(size=(3, 3))
    t, dt = 0.7, 1.3

    det_value, det_derivative = evaluate_dual(parse("det(F)"), t, F, dt, E)
    _, product_derivative = evaluate_dual(parse("t*det(F)"), t, F, dt, E)

    assert product_derivative == dt * det_value + t * det_derivative


@pytest.mark.parametrize("source", CORPUS)
def test_derivative_matches_central_difference(source):
    ast = parse(source, LC_CONSTANTS)
    h = 1e-6

    for t, F, dt, dF in random_points(seed=len(source)):
        _, derivative = evaluate_dual(ast, t, F, dt, dF, LC_CONSTANTS)
        plus = evaluate(ast, t + h * dt, F + h * dF, LC_CONSTANTS)
        minus = evaluate(ast, t - h * dt, F - h * dF, LC_CONSTANTS)
        finite = (plus - minus) / (2 * h)

        assert abs(derivative - finite) <= 1e-6 * (1 + abs(derivative))


@pytest.mark.parametrize("source", CORPUS)
def test_derivative_is_linear_in_direction(source):
    ast = parse(source, LC_CONSTANTS)
    rng = np.random.default_rng(5)
    t, F, dt1, dF1 = random_points(seed=1, count=1)[0]
    dt2, dF2 = rng.normal(), rng.normal(size=(3, 3))
    a, b = 0.75, -1.5

    _, d1 = evaluate_dual(ast, t, F, dt1, dF1, LC_CONSTANTS)
    _, d2 = evaluate_dual(ast, t, F, dt2, dF2, LC_CONSTANTS)
    _, combined = evaluate_dual(ast, t, F, a * dt1 + b * dt2, a * dF1 + b * dF2, LC_CONSTANTS)

    assert combined == approx(a * d1 + b * d2, rel=1e-12, abs=1e-12 * (abs(d1) + abs(d2)))


def test_batch_shapes_and_agreement_with_single_point():
    ast = parse("exp(-t)*det(F)")
    points = random_points(seed=2, count=4)
    frames = np.stack([p[1] for p in points])
    dts = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.5]])
    dFs = np.stack([np.stack([p[3], np.eye(3)]) for p in points])

    values, derivs = evaluate_batch(ast, 0.3, frames, dts, dFs)

    assert values.shape == (4,)
    assert derivs.shape == (4, 2)
    for i, F in enumerate(frames):
        for k in range(2):
            value, derivative = evaluate_dual(ast, 0.3, F, dts[i, k], dFs[i, k])
            assert values[i] == approx(value)
            assert derivs[i, k] == approx(derivative)


def test_constant_expression_broadcasts_over_batch():
    values, derivs = evaluate_batch(parse("2"), 0.0, np.stack([np.eye(3)] * 3),
                                    np.ones((3, 4)), np.zeros((3, 4, 3, 3)))

    assert values.tolist() == [2.0, 2.0, 2.0]
    assert not derivs.any()


def test_inverse_of_singular_matrix():
    with pytest.raises(SingularMatrixError):
        evaluate(parse("tr(inv(F))"), 0.0, np.zeros((3, 3)))


def test_log_of_nonpositive_value():
    with pytest.raises(DomainError, match="log"):
        evaluate(parse("log(t)"), 0.0, np.eye(3))


def test_sqrt_of_negative_value():
    with pytest.raises(DomainError, match="sqrt"):
        evaluate(parse("sqrt(t)"), -1.0, np.eye(3))


def test_division_by_zero():
    with pytest.raises(DomainError, match="Division by zero"):
        evaluate(parse("1/t"), 0.0, np.eye(3))


def test_overflow_is_a_domain_error():
    with pytest.raises(DomainError):
        evaluate(parse("exp(1000*t)"), 1.0, np.eye(3))


def test_missing_constant_value():
    ast = parse("c*t", {"c": 1.0})

    with pytest.raises(EvaluationError, match="No value supplied for constant 'c'"):
        evaluate(ast, 0.0, np.eye(3))


def test_evaluation_errors_are_value_errors():
    assert issubclass(SingularMatrixError, ValueError)
    assert issubclass(DomainError, ValueError)
