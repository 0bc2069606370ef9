# ABOUTME: Forward-mode (dual number) evaluation of expression ASTs with exact first derivatives
# ABOUTME: Evaluates batches of frames and directions at once; values and tangents are numpy arrays
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from evolve.expr import Call, ExprAst, Kind, Number, Power, Symbol, Unary

# |det A| <= SINGULAR_RTOL * ||A||^3 counts as singular
SINGULAR_RTOL = 1e-12


class EvaluationError(ValueError):
    """Expression could not be evaluated at the requested point."""


class SingularMatrixError(EvaluationError):
    pass


class DomainError(EvaluationError):
    pass


@dataclass(frozen=True)
class Dual:
    """
    A value together with its directional derivatives.

    `value` has shape batch + kind.shape and `deriv` has shape
    batch + (k,) + kind.shape, where k is the number of directions carried.
    Either part may omit the batch axes (constants), in which case numpy
    broadcasting supplies them. Arithmetic follows the Leibniz rule.
    """
    value: np.ndarray
    deriv: np.ndarray
    kind: Kind

    @property
    def value_k(self) -> np.ndarray:
        """Value with a length-1 direction axis inserted, ready to meet `deriv`."""
        return np.expand_dims(self.value, self.value.ndim - self.kind.rank)


def constant(value: Any, kind: Kind) -> Dual:
    value = np.asarray(value, dtype=float)
    return Dual(value, np.zeros((1,) + kind.shape), kind)


def _lift(x: np.ndarray, rank: int) -> np.ndarray:
    return x.reshape(x.shape + (1,) * rank)


def _add(a: Dual, b: Dual, sign: float) -> Dual:
    return Dual(a.value + sign * b.value, a.deriv + sign * b.deriv, a.kind)


def _scale(s: Dual, x: Dual) -> Dual:
    """Scalar times anything."""
    rank = x.kind.rank
    value = _lift(s.value, rank) * x.value
    deriv = _lift(s.deriv, rank) * x.value_k + _lift(s.value_k, rank) * x.deriv
    return Dual(value, deriv, x.kind)


def _matmul(a: Dual, b: Dual) -> Dual:
    if b.kind is Kind.MATRIX:
        value = a.value @ b.value
        deriv = a.deriv @ b.value_k + a.value_k @ b.deriv
        return Dual(value, deriv, Kind.MATRIX)
    value = np.einsum("...ij,...j->...i", a.value, b.value)
    deriv = (np.einsum("...ij,...j->...i", a.deriv, b.value_k)
             + np.einsum("...ij,...j->...i", a.value_k, b.deriv))
    return Dual(value, deriv, Kind.VECTOR)


def _divide(x: Dual, s: Dual) -> Dual:
    if np.any(s.value == 0):
        raise DomainError("Division by zero")
    rank = x.kind.rank
    inv_s = 1.0 / s.value
    value = x.value * _lift(inv_s, rank)
    inv_s_k = np.expand_dims(inv_s, inv_s.ndim)
    deriv = (x.deriv * _lift(inv_s_k, rank)
             - x.value_k * _lift(s.deriv * inv_s_k ** 2, rank))
    return Dual(value, deriv, x.kind)


def _power(x: Dual, n: int) -> Dual:
    if n == 0:
        return constant(np.ones_like(x.value), Kind.SCALAR)
    value = x.value ** n
    deriv = n * x.value_k ** (n - 1) * x.deriv
    return Dual(value, deriv, Kind.SCALAR)


def _check_invertible(a: np.ndarray, det: np.ndarray, what: str) -> None:
    norm = np.linalg.norm(a, axis=(-2, -1))
    if np.any(np.abs(det) <= SINGULAR_RTOL * norm ** 3):
        raise SingularMatrixError(f"Singular matrix passed to {what}")


def _adjugate(a: np.ndarray) -> np.ndarray:
    """3x3 adjugate from cross products of columns; adj(A) A = det(A) I, also for singular A."""
    c0, c1, c2 = a[..., :, 0], a[..., :, 1], a[..., :, 2]
    return np.stack([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)], axis=-2)


def _det(a: Dual) -> Dual:
    det = np.linalg.det(a.value)
    if not np.any(a.deriv):
        return Dual(det, np.zeros(a.deriv.shape[:-2]), Kind.SCALAR)
    # d(det A) = tr(adj(A) dA)
    adj = np.expand_dims(_adjugate(a.value), -3)
    deriv = np.einsum("...ij,...ji->...", adj, a.deriv)
    return Dual(det, deriv, Kind.SCALAR)


def _inv(a: Dual) -> Dual:
    det = np.linalg.det(a.value)
    _check_invertible(a.value, det, "inv")
    a_inv = np.linalg.inv(a.value)
    a_inv_k = np.expand_dims(a_inv, -3)
    # d(A^-1) = -A^-1 dA A^-1
    return Dual(a_inv, -(a_inv_k @ a.deriv @ a_inv_k), Kind.MATRIX)


def _elementwise(name: str, x: Dual) -> Dual:
    v = x.value
    if name == "exp":
        value = np.exp(v)
        slope = value
    elif name == "log":
        if np.any(v <= 0):
            raise DomainError("log of non-positive value")
        value = np.log(v)
        slope = 1.0 / v
    elif name == "sin":
        value = np.sin(v)
        slope = np.cos(v)
    elif name == "cos":
        value = np.cos(v)
        slope = -np.sin(v)
    else:
        if np.any(v < 0):
            raise DomainError("sqrt of negative value")
        value = np.sqrt(v)
        with np.errstate(divide="ignore"):
            slope = 0.5 / value
    return Dual(value, np.expand_dims(slope, slope.ndim) * x.deriv, Kind.SCALAR)


def _stack(parts: list[Dual], kind: Kind) -> Dual:
    values = np.broadcast_arrays(*[p.value for p in parts])
    derivs = np.broadcast_arrays(*[p.deriv for p in parts])
    return Dual(np.stack(values, axis=-1), np.stack(derivs, axis=-1), kind)


def _call(name: str, args: list[Dual]) -> Dual:
    if name == "det":
        return _det(args[0])
    if name == "inv":
        return _inv(args[0])
    if name == "tr":
        a = args[0]
        return Dual(np.trace(a.value, axis1=-2, axis2=-1),
                    np.trace(a.deriv, axis1=-2, axis2=-1), Kind.SCALAR)
    if name == "transpose":
        a = args[0]
        return Dual(np.swapaxes(a.value, -1, -2), np.swapaxes(a.deriv, -1, -2), Kind.MATRIX)
    if name == "dot":
        u, v = args
        value = np.sum(u.value * v.value, axis=-1)
        deriv = np.sum(u.deriv * v.value_k + u.value_k * v.deriv, axis=-1)
        return Dual(value, deriv, Kind.SCALAR)
    if name == "vec":
        return _stack(args, Kind.VECTOR)
    if name == "mat":
        # rows, so stack along the second-to-last axis
        rows = _stack(args, Kind.MATRIX)
        return Dual(np.swapaxes(rows.value, -1, -2), np.swapaxes(rows.deriv, -1, -2), Kind.MATRIX)
    return _elementwise(name, args[0])


class _Evaluator:
    def __init__(self, env: Mapping[str, Dual]):
        self.env = env

    def walk(self, node: ExprAst) -> Dual:
        if isinstance(node, Number):
            return constant(node.value, Kind.SCALAR)
        if isinstance(node, Symbol):
            try:
                return self.env[node.name]
            except KeyError:
                raise EvaluationError(f"No value supplied for constant '{node.name}'") from None
        if isinstance(node, Unary):
            x = self.walk(node.operand)
            return Dual(-x.value, -x.deriv, x.kind)
        if isinstance(node, Power):
            return _power(self.walk(node.base), node.exponent)
        if isinstance(node, Call):
            return _call(node.name, [self.walk(a) for a in node.args])

        left = self.walk(node.left)
        right = self.walk(node.right)
        if node.op == "+":
            return _add(left, right, 1.0)
        if node.op == "-":
            return _add(left, right, -1.0)
        if node.op == "/":
            return _divide(left, right)
        if left.kind is Kind.SCALAR:
            return _scale(left, right)
        if right.kind is Kind.SCALAR:
            return _scale(right, left)
        return _matmul(left, right)


def evaluate_batch(
    ast: ExprAst,
    t: float,
    frames: np.ndarray,
    dts: np.ndarray,
    dFs: np.ndarray,
    constants: Optional[Mapping[str, Any]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Evaluate a scalar expression at many frames along many directions.

    Args:
        ast: Typed scalar expression
        t: Time instant
        frames: Array of shape (n, 3, 3)
        dts: Time tangents, shape (n, k)
        dFs: Frame tangents, shape (n, k, 3, 3)
        constants: Named constant values

    Returns:
        (values of shape (n,), directional derivatives of shape (n, k))

    Raises:
        EvaluationError: On singular matrices or domain errors
    """
    frames = np.asarray(frames, dtype=float)
    dts = np.asarray(dts, dtype=float)
    dFs = np.asarray(dFs, dtype=float)
    n, k = dts.shape
    env = {name: constant(value, Kind(np.ndim(value))) for name, value in (constants or {}).items()}
    env["t"] = Dual(np.full(n, float(t)), dts, Kind.SCALAR)
    env["F"] = Dual(frames, dFs, Kind.MATRIX)
    with np.errstate(over="raise", invalid="raise"):
        try:
            result = _Evaluator(env).walk(ast)
        except FloatingPointError as e:
            raise DomainError(f"Floating point error during evaluation: {e}") from e
    if result.kind is not Kind.SCALAR:
        raise EvaluationError(f"Expression is {result.kind.name.lower()}-valued, expected scalar")
    return (np.broadcast_to(result.value, (n,)).copy(),
            np.broadcast_to(result.deriv, (n, k)).copy())


def evaluate_dual(
    ast: ExprAst,
    t: float,
    F: Any,
    dt: float,
    dF: Any,
    constants: Optional[Mapping[str, Any]] = None,
) -> tuple[float, float]:
    """Value and derivative d/de|0 of the expression at (t + e*dt, F + e*dF)."""
    frames = np.asarray(F, dtype=float)[None]
    values, derivs = evaluate_batch(
        ast, t, frames, np.array([[dt]], dtype=float),
        np.asarray(dF, dtype=float)[None, None], constants,
    )
    return float(values[0]), float(derivs[0, 0])


def evaluate(ast: ExprAst, t: float, F: Any, constants: Optional[Mapping[str, Any]] = None) -> float:
    """Value of a scalar expression at (t, F)."""
    frames = np.asarray(F, dtype=float)[None]
    values, _ = evaluate_batch(ast, t, frames, np.zeros((1, 0)), np.zeros((1, 0, 3, 3)), constants)
    return float(values[0])
