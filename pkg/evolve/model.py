# ABOUTME: Fixed-particle constitutive responses W(t, F) with exact derivatives
# ABOUTME: Model zoo (liquid crystal, det, isotropic, exp decay, piecewise), JSON loader, change of reference
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Protocol, Sequence

import numpy as np

from evolve.dual import SingularMatrixError, evaluate_batch
from evolve.expr import (
    Binary,
    ExprAst,
    Kind,
    format_expr,
    free_symbols,
    kind_of_value,
    parse,
    substitute,
)


class ModelError(ValueError):
    """Model file or model parameters are invalid."""


class Component(Protocol):
    """One scalar component W_c of a constitutive response."""

    def jet(self, t: float, frames: np.ndarray, dts: np.ndarray,
            dFs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (n,) and directional derivatives (n, k) at a batch of frames."""
        ...

    def describe(self) -> str:
        ...


@dataclass(frozen=True, eq=False)
class ExprComponent:
    """Component given by an expression in t, F and named constants."""
    ast: ExprAst
    constants: Mapping[str, np.ndarray] = field(default_factory=dict)

    def jet(self, t, frames, dts, dFs):
        return evaluate_batch(self.ast, t, frames, dts, dFs, self.constants)

    def describe(self) -> str:
        return format_expr(self.ast)


# partials(t, frames) -> (W (n,), dW/dt (n,), dW/dF (n, 3, 3))
Partials = Callable[[float, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class ClosureComponent:
    """Component implemented in Python with closed-form partial derivatives."""
    name: str
    partials: Partials

    def jet(self, t, frames, dts, dFs):
        value, dw_dt, dw_dF = self.partials(t, frames)
        deriv = dw_dt[:, None] * dts + np.einsum("nij,nkij->nk", dw_dF, dFs)
        return value, deriv

    def describe(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class ReferencedComponent:
    """W1(t, F) = W(t, F C): the inner component seen from another reference configuration."""
    inner: Component
    C: np.ndarray

    def jet(self, t, frames, dts, dFs):
        return self.inner.jet(t, frames @ self.C, dts, dFs @ self.C)

    def describe(self) -> str:
        return f"({self.inner.describe()}) o [F*C]"


@dataclass(frozen=True, eq=False)
class ConstitutiveModel:
    """
    Mechanical response W: (t, F) -> R^m of one fixed material particle.

    The value space is plain R^m; each component is a scalar function with
    exact first derivatives in t and F.
    """
    label: str
    components: tuple[Component, ...]
    time_domain: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        if not self.components:
            raise ModelError("A model needs at least one component")
        lo, hi = self.time_domain
        if not lo < hi:
            raise ModelError(f"time_domain must satisfy lo < hi, got [{lo}, {hi}]")

    @property
    def m(self) -> int:
        return len(self.components)

    def check_time(self, t: float) -> None:
        lo, hi = self.time_domain
        if not lo <= t <= hi:
            raise ModelError(f"t={t} outside model time domain [{lo}, {hi}]")

    def jet(self, t: float, frames: np.ndarray, dts: np.ndarray,
            dFs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Evaluate all components at a batch of frames along k directions.

        Returns:
            values of shape (n, m) and derivatives of shape (n, m, k)

        Raises:
            SingularMatrixError: If any frame is singular
        """
        frames = np.asarray(frames, dtype=float)
        check_invertible(frames, "frame")
        values, derivs = zip(*(c.jet(t, frames, dts, dFs) for c in self.components))
        return np.stack(values, axis=1), np.stack(derivs, axis=1)

    def values(self, t: float, frames: np.ndarray) -> np.ndarray:
        """W(t, F) for a batch of frames, shape (n, m)."""
        n = len(frames)
        values, _ = self.jet(t, frames, np.zeros((n, 0)), np.zeros((n, 0, 3, 3)))
        return values


def check_invertible(matrices: np.ndarray, what: str) -> None:
    matrices = np.asarray(matrices, dtype=float)
    det = np.linalg.det(matrices)
    norm = np.linalg.norm(matrices, axis=(-2, -1))
    if np.any(np.abs(det) <= 1e-12 * norm ** 3):
        raise SingularMatrixError(f"Singular {what} matrix")


def evaluate(model: ConstitutiveModel, t: float, F: Any) -> np.ndarray:
    """W(t, F) as a vector of length m."""
    model.check_time(t)
    return model.values(t, np.asarray(F, dtype=float)[None])[0]


def d_dt(model: ConstitutiveModel, t: float, F: Any) -> np.ndarray:
    """Partial derivative of W with respect to t, length m."""
    model.check_time(t)
    frames = np.asarray(F, dtype=float)[None]
    _, derivs = model.jet(t, frames, np.ones((1, 1)), np.zeros((1, 1, 3, 3)))
    return derivs[0, :, 0]


def d_dF(model: ConstitutiveModel, t: float, F: Any, E: Any) -> np.ndarray:
    """Directional derivative of W in F along E, length m."""
    model.check_time(t)
    frames = np.asarray(F, dtype=float)[None]
    direction = np.asarray(E, dtype=float)[None, None]
    _, derivs = model.jet(t, frames, np.zeros((1, 1)), direction)
    return derivs[0, :, 0]


def change_reference(model: ConstitutiveModel, C: Any) -> ConstitutiveModel:
    """
    Apply the rule of change of reference configuration.

    The returned model satisfies W1(t, F) = W(t, F C).

    Raises:
        SingularMatrixError: If C is singular
    """
    C = np.array(C, dtype=float)
    if C.shape != (3, 3):
        raise ModelError(f"Reference change must be a 3x3 matrix, got shape {C.shape}")
    check_invertible(C, "reference change")
    C.setflags(write=False)
    return ConstitutiveModel(
        label=f"{model.label} [changed reference]",
        components=tuple(ReferencedComponent(c, C) for c in model.components),
        time_domain=model.time_domain,
    )


# --- Built-in models -------------------------------------------------------

def from_expressions(label: str, sources: Sequence[str],
                     constants: Optional[Mapping[str, Any]] = None,
                     time_domain: tuple[float, float] = (-math.inf, math.inf)) -> ConstitutiveModel:
    """Build a model from component expression strings."""
    values = {name: _frozen(value) for name, value in (constants or {}).items()}
    components = []
    for index, source in enumerate(sources):
        ast = parse(source, values)
        if ast.kind is not Kind.SCALAR:
            raise ModelError(
                f"Schema violation: component {index} ({source!r}) is "
                f"{ast.kind.name.lower()}-valued, components must be scalar"
            )
        components.append(ExprComponent(ast, values))
    return ConstitutiveModel(label, tuple(components), time_domain)


def _frozen(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float)
    kind_of_value(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FixedParticleContext:
    """
    Data of the laminated liquid crystal frozen at one particle X.

    Attributes:
        e: Reference cross-grain field value e(X), nonzero
        g: Metric at X, symmetric positive definite
        c: The constant ||X||^2
        mu: Stiffness coefficient, an expression in t only
        what: Components of the immersion W-hat as expressions in r and J
    """
    e: np.ndarray
    g: np.ndarray
    c: float
    mu: ExprAst
    what: tuple[ExprAst, ...]

    def __post_init__(self):
        if self.e.shape != (3,) or not np.any(self.e):
            raise ModelError("e must be a nonzero 3-vector")
        if self.g.shape != (3, 3) or not np.allclose(self.g, self.g.T):
            raise ModelError("g must be a symmetric 3x3 matrix")
        try:
            np.linalg.cholesky(self.g)
        except np.linalg.LinAlgError:
            raise ModelError("g must be positive definite") from None
        if not self.c >= 0:
            raise ModelError(f"c = ||X||^2 must be nonnegative, got {self.c}")
        if not free_symbols(self.mu) <= {"t"}:
            raise ModelError("mu must depend on t only")
        if not self.what:
            raise ModelError("what must list at least one component")

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "FixedParticleContext":
        unknown = set(params) - {"e", "g", "c", "X", "mu", "what"}
        if unknown:
            raise ModelError(f"Unknown liquid_crystal params: {', '.join(sorted(unknown))}")
        if "c" in params and "X" in params:
            raise ModelError("Give either 'c' or 'X', not both")
        try:
            e = np.array(params.get("e", [0.0, 0.0, 1.0]), dtype=float)
            g = np.array(params.get("g", np.eye(3)), dtype=float)
            X = np.array(params["X"], dtype=float) if "X" in params else None
            c = float(params.get("c", 0.25))
        except (TypeError, ValueError) as err:
            raise ModelError(f"Invalid liquid_crystal params: {err}") from err
        if X is not None:
            if X.shape != (3,):
                raise ModelError("X must be a 3-vector")
            c = float(X @ X)
        mu = parse(str(params.get("mu", "1")))
        what_sources = params.get("what", ["r", "J"])
        if not isinstance(what_sources, list) or not all(isinstance(s, str) for s in what_sources):
            raise ModelError("what must be a list of expression strings")
        placeholders = {"r": Kind.SCALAR, "J": Kind.SCALAR}
        what = tuple(parse(s, placeholders) for s in what_sources)
        for source, ast in zip(what_sources, what):
            if not free_symbols(ast) <= {"r", "J"}:
                raise ModelError(f"what component {source!r} may only use r and J")
        return cls(e=e, g=g, c=c, mu=mu, what=what)


def liquid_crystal(context: FixedParticleContext, label: str = "laminated liquid crystal") -> ConstitutiveModel:
    """W = mu(t) * W-hat(r, J) with r = g(F e, F e) + ||X||^2 and J = det F."""
    constants = {"e": _frozen(context.e), "G": _frozen(context.g), "c": _frozen(context.c)}
    r = parse("dot(F*e, G*(F*e)) + c", constants)
    J = parse("det(F)")
    components = []
    for what in context.what:
        body = substitute(what, {"r": r, "J": J})
        components.append(ExprComponent(Binary("*", context.mu, body, kind=Kind.SCALAR), constants))
    return ConstitutiveModel(label, tuple(components))


def det_only() -> ConstitutiveModel:
    return from_expressions("det", ["det(F)"])


def isotropic() -> ConstitutiveModel:
    return from_expressions("isotropic", ["tr(transpose(F)*F)", "det(F)"])


def exp_decay() -> ConstitutiveModel:
    return from_expressions("exp_decay", ["exp(-t)*det(F)"])


_PIECEWISE_E = np.array([0.0, 0.0, 1.0])
_PIECEWISE_C = 0.25


def _piecewise_mu(t: float) -> tuple[float, float]:
    ramp = max(t, 0.0)
    return 1.0 + ramp ** 3, 3.0 * ramp ** 2


def _piecewise_r_partials(t: float, frames: np.ndarray):
    mu, mu_dot = _piecewise_mu(t)
    Fe = frames @ _PIECEWISE_E
    r = np.einsum("ni,ni->n", Fe, Fe) + _PIECEWISE_C
    dr_dF = 2.0 * Fe[:, :, None] * _PIECEWISE_E[None, None, :]
    return mu * r, mu_dot * r, mu * dr_dF


def _piecewise_det_partials(t: float, frames: np.ndarray):
    mu, mu_dot = _piecewise_mu(t)
    det = np.linalg.det(frames)
    inv_t = np.swapaxes(np.linalg.inv(frames), -1, -2)
    return mu * det, mu_dot * det, (mu * det)[:, None, None] * inv_t


def piecewise_cubic() -> ConstitutiveModel:
    """
    Liquid crystal with mu = 1 for t <= 0 and 1 + t^3 after, at e = (0, 0, 1)
    and c = 0.25. It remodels up to t = 0 and ages once mu starts moving.
    """
    components = (
        ClosureComponent("(1 + max(t, 0)^3) * (|F e|^2 + 0.25)", _piecewise_r_partials),
        ClosureComponent("(1 + max(t, 0)^3) * det(F)", _piecewise_det_partials),
    )
    return ConstitutiveModel("piecewise_cubic", components)


def _no_params(factory: Callable[[], ConstitutiveModel]):
    def build(params: Mapping[str, Any]) -> ConstitutiveModel:
        if params:
            raise ModelError(f"Built-in takes no params, got {', '.join(sorted(params))}")
        return factory()
    return build


BUILTINS: dict[str, Callable[[Mapping[str, Any]], ConstitutiveModel]] = {
    "liquid_crystal": lambda params: liquid_crystal(FixedParticleContext.from_params(params)),
    "det_only": _no_params(det_only),
    "isotropic": _no_params(isotropic),
    "exp_decay": _no_params(exp_decay),
    "piecewise_cubic": _no_params(piecewise_cubic),
}


# --- Model files -----------------------------------------------------------

def _parse_time_domain(value: Any) -> tuple[float, float]:
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ModelError("'time_domain' must be a [lo, hi] pair of numbers")
    lo, hi = float(value[0]), float(value[1])
    if not lo < hi:
        raise ModelError(f"'time_domain' must satisfy lo < hi, got [{lo}, {hi}]")
    return lo, hi


def _parse_constants(value: Any) -> dict[str, np.ndarray]:
    if not isinstance(value, dict):
        raise ModelError("'constants' must be an object mapping names to values")
    constants = {}
    for name, raw in value.items():
        try:
            constants[name] = _frozen(raw)
        except (TypeError, ValueError) as e:
            raise ModelError(
                f"Constant '{name}' must be a number, 3-array or 3x3 nested array"
            ) from e
    return constants


def load_model(path: str) -> ConstitutiveModel:
    """
    Load a constitutive model from a JSON model file.

    Args:
        path: Path to the model file

    Returns:
        ConstitutiveModel described by the file

    Raises:
        ModelError: If the file is missing, not JSON, or violates the schema
        ExpressionError: If a component expression fails to parse or type
    """
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ModelError(f"Model file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ModelError(f"Invalid JSON in model file: {e}") from e
    except OSError as e:
        raise ModelError(f"Cannot read model file {path}: {e}") from e

    if not isinstance(data, dict):
        raise ModelError("Model file must contain a JSON object")

    time_domain = (-math.inf, math.inf)
    if "time_domain" in data:
        time_domain = _parse_time_domain(data["time_domain"])

    if "builtin" in data:
        name = data["builtin"]
        if name not in BUILTINS:
            raise ModelError(f"Unknown builtin '{name}', expected one of: {', '.join(BUILTINS)}")
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise ModelError("'params' must be an object")
        model = BUILTINS[name](params)
        label = data.get("label", model.label)
        if not isinstance(label, str):
            raise ModelError("'label' must be a string")
        return ConstitutiveModel(label, model.components, time_domain)

    missing = [key for key in ("label", "m", "components") if key not in data]
    if missing:
        raise ModelError(f"Missing required model keys: {', '.join(missing)}")
    if not isinstance(data["label"], str):
        raise ModelError("'label' must be a string")
    m = data["m"]
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ModelError(f"'m' must be a positive integer, got {m!r}")
    sources = data["components"]
    if not isinstance(sources, list) or not all(isinstance(s, str) for s in sources):
        raise ModelError("'components' must be an array of expression strings")
    if len(sources) != m:
        raise ModelError(f"'m' is {m} but {len(sources)} components were given")
    constants = _parse_constants(data.get("constants", {}))
    return from_expressions(data["label"], sources, constants, time_domain)
