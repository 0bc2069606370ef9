# ABOUTME: Jet arrows between instants of one particle and remodeling processes along a leaf
# ABOUTME: RK4 integration of dP/dt = P Theta(t), isomorphism/cocycle/freedom residuals and symmetry conjugation
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from evolve.config import SolverConfig
from evolve.evolution import (
    EvolutionTangent,
    FibreResult,
    assemble_system,
    evolution_fibre,
    map_instants,
    relative_residual,
    sample_frames,
)
from evolve.foliation import GRID_RTOL, Leaf, leaf_grid
from evolve.model import ConstitutiveModel

logger = logging.getLogger(__name__)

# |det P| below this aborts an integration
DET_FLOOR = 1e-9


class ArrowError(ValueError):
    """Jet arrows that cannot be built or composed."""


class ProcessError(ValueError):
    """A remodeling process cannot be integrated on the requested leaf."""


def _same_instant(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=GRID_RTOL, abs_tol=GRID_RTOL)


@dataclass(frozen=True, eq=False)
class JetArrow:
    """
    Element (t_src, t_tgt, P) of the body-time groupoid restricted to one
    particle: a material isomorphism with W(t_src, F P) = W(t_tgt, F).
    """
    t_src: float
    t_tgt: float
    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 3):
            raise ArrowError(f"Arrow matrix must be 3x3, got shape {P.shape}")
        if abs(np.linalg.det(P)) <= 1e-12 * np.linalg.norm(P) ** 3:
            raise ArrowError("Arrow matrix is singular")
        object.__setattr__(self, "P", P)

    def to_dict(self) -> dict:
        return {
            "t_src": float(self.t_src),
            "t_tgt": float(self.t_tgt),
            "P": [[float(x) for x in row] for row in self.P],
        }


def identity_arrow(t: float) -> JetArrow:
    return JetArrow(t, t, np.eye(3))


def compose(a: JetArrow, b: JetArrow) -> JetArrow:
    """a after b: defined when b ends where a starts."""
    if not _same_instant(b.t_tgt, a.t_src):
        raise ArrowError(f"Cannot compose: right arrow ends at {b.t_tgt}, left arrow starts at {a.t_src}")
    return JetArrow(b.t_src, a.t_tgt, a.P @ b.P)


def invert(a: JetArrow) -> JetArrow:
    return JetArrow(a.t_tgt, a.t_src, np.linalg.inv(a.P))


@dataclass(frozen=True, eq=False)
class RemodelingProcess:
    """
    P(t) sampled on a leaf grid: P(t) is the arrow from t to t_ref, so
    W(t, F P(t)) = W(t_ref, F) and P(t_ref) = I.
    """
    t_ref: float
    grid: np.ndarray
    P_samples: np.ndarray
    theta_used: tuple[EvolutionTangent, ...]
    gauge: tuple[float, ...] = ()

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.grid - t)))
        if not _same_instant(self.grid[i], t):
            raise ProcessError(f"t={t} is not a grid instant of this process")
        return i

    def P_at(self, t: float) -> np.ndarray:
        return self.P_samples[self.index_of(t)]

    def arrow(self, t: float) -> JetArrow:
        return JetArrow(float(t), self.t_ref, self.P_at(t))

    def to_dict(self) -> dict:
        return {
            "t_ref": float(self.t_ref),
            "grid": [float(t) for t in self.grid],
            "P": [[[float(x) for x in row] for row in P] for P in self.P_samples],
            "gauge": [float(a) for a in self.gauge],
        }


def _process_grid(leaf: Leaf, t_ref: float) -> tuple[np.ndarray, int]:
    """Leaf grid with t_ref placed on it; returns (grid, index of t_ref)."""
    grid = leaf_grid(leaf)
    i = int(np.argmin(np.abs(grid - t_ref)))
    if abs(grid[i] - t_ref) <= 1e-9 * leaf.step:
        grid[i] = t_ref
        return grid, i
    i = int(np.searchsorted(grid, t_ref))
    return np.insert(grid, i, t_ref), i


def _directions(fibres: Sequence[FibreResult], gauge: Sequence[float]) -> list[EvolutionTangent]:
    thetas = []
    for fibre in fibres:
        direction = fibre.remodeling_direction
        if direction is None:
            raise ProcessError(f"No remodeling direction at t={fibre.t}")
        if len(gauge) > len(fibre.symmetry_basis):
            raise ProcessError(
                f"{len(gauge)} gauge coefficients but the symmetry algebra at t={fibre.t} "
                f"has dimension {len(fibre.symmetry_basis)}"
            )
        theta = direction.theta.copy()
        for coefficient, symmetry in zip(gauge, fibre.symmetry_basis):
            theta = theta + coefficient * symmetry.theta
        thetas.append(EvolutionTangent(1.0, theta))
    return thetas


def _rk4_step(P: np.ndarray, h: float, theta_a: np.ndarray, theta_b: np.ndarray) -> np.ndarray:
    # Theta at the midpoint by linear interpolation
    theta_m = 0.5 * (theta_a + theta_b)
    k1 = P @ theta_a
    k2 = (P + 0.5 * h * k1) @ theta_m
    k3 = (P + 0.5 * h * k2) @ theta_m
    k4 = (P + h * k3) @ theta_b
    return P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(grid: np.ndarray, thetas: Sequence[np.ndarray], ref: int) -> np.ndarray:
    """Integrate dP/dt = P Theta(t) outward from grid[ref] with P = I there."""
    samples = np.empty((len(grid), 3, 3))
    samples[ref] = np.eye(3)
    for direction in (1, -1):
        P = samples[ref]
        i = ref
        while 0 <= i + direction < len(grid):
            j = i + direction
            P = _rk4_step(P, grid[j] - grid[i], thetas[i], thetas[j])
            det = np.linalg.det(P)
            if abs(det) < DET_FLOOR or det < 0:
                raise ProcessError(f"P became singular near t={grid[j]} (det P = {det:.3e})")
            samples[j] = P
            i = j
    return samples


def integrate_process(
    model: ConstitutiveModel,
    leaf: Leaf,
    t_ref: float,
    cfg: Optional[SolverConfig] = None,
    gauge: Optional[Sequence[float]] = None,
    threads: int = 1,
) -> RemodelingProcess:
    """
    Integrate a remodeling process along a remodeling leaf.

    The direction at each grid instant is the canonical remodeling direction
    plus sum_i gauge[i] * S_i(t), where S_i(t) is the symmetry basis at t.
    Classical RK4 is used with the grid spacing as step.

    Raises:
        ProcessError: If the leaf is not a remodeling leaf, t_ref lies outside
            it, an instant has no remodeling direction, or P degenerates
    """
    if not leaf.is_remodeling:
        raise ProcessError(f"Leaf [{leaf.t_lo}, {leaf.t_hi}] is not a remodeling leaf")
    if not leaf.contains(t_ref, t_ref):
        raise ProcessError(f"t_ref={t_ref} lies outside the leaf [{leaf.t_lo}, {leaf.t_hi}]")
    gauge = tuple(float(a) for a in (gauge or ()))

    grid, ref = _process_grid(leaf, t_ref)
    fibres = map_instants(lambda t: evolution_fibre(model, float(t), cfg), list(grid), threads)
    thetas = _directions(fibres, gauge)
    samples = _integrate(grid, [d.theta for d in thetas], ref)
    logger.info(f"Integrated remodeling process on [{leaf.t_lo}, {leaf.t_hi}] from t_ref={t_ref}")
    return RemodelingProcess(float(t_ref), grid, samples, tuple(thetas), gauge)


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    """max over frames of ||a - b|| / (1 + ||b||), with rows indexing frames."""
    return float(np.max(np.linalg.norm(a - b, axis=1) / (1.0 + np.linalg.norm(b, axis=1))))


def isomorphism_residual(
    model: ConstitutiveModel,
    process: RemodelingProcess,
    n_frames: int = 20,
    seed: int = 42,
) -> float:
    """Largest relative mismatch of W(t, F P(t)) against W(t_ref, F) over frames and grid instants."""
    frames = sample_frames(n_frames, seed)
    reference = model.values(process.t_ref, frames)
    return max(
        _relative_gap(model.values(float(t), frames @ P), reference)
        for t, P in zip(process.grid, process.P_samples)
    )


def freedom_residual(
    model: ConstitutiveModel,
    p: RemodelingProcess,
    q: RemodelingProcess,
    n_frames: int = 20,
    seed: int = 42,
) -> float:
    """
    Check that two processes with the same t_ref differ by symmetries.

    At every shared instant t, the loop t -> t_ref -> t built from q and the
    inverse of p must leave W(t, .) unchanged.
    """
    if not _same_instant(p.t_ref, q.t_ref):
        raise ProcessError(f"Processes have different reference instants {p.t_ref} and {q.t_ref}")
    frames = sample_frames(n_frames, seed)
    residual = 0.0
    for t in p.grid:
        try:
            q_arrow = q.arrow(t)
        except ProcessError:
            continue
        loop = compose(invert(p.arrow(t)), q_arrow)
        reference = model.values(float(t), frames)
        residual = max(residual, _relative_gap(model.values(float(t), frames @ loop.P), reference))
    return residual


def conjugate_symmetry(basis: Sequence[EvolutionTangent], arrow: JetArrow) -> list[EvolutionTangent]:
    """Carry symmetry generators at arrow.t_src to arrow.t_tgt: Theta -> P Theta P^-1."""
    P_inv = np.linalg.inv(arrow.P)
    conjugated = []
    for tangent in basis:
        if tangent.lam != 0.0:
            raise ArrowError(f"Only symmetry generators (lambda = 0) can be conjugated, got lambda={tangent.lam}")
        conjugated.append(EvolutionTangent(0.0, arrow.P @ tangent.theta @ P_inv))
    return conjugated


def symmetry_residual(
    model: ConstitutiveModel,
    basis: Sequence[EvolutionTangent],
    t: float,
    cfg: Optional[SolverConfig] = None,
) -> float:
    """Largest relative residual of the tangents in the evolution system at t."""
    cfg = cfg or SolverConfig()
    A = assemble_system(model, t, sample_frames(cfg.n_samples_max, cfg.seed, cfg))
    return max((relative_residual(A, b.to_vector()) for b in basis), default=0.0)


def _triples(n: int) -> list[tuple[int, int, int]]:
    candidates = [(0, n // 2, n - 1), (0, n // 4, n // 2), (n // 4, n // 2, (3 * n) // 4)]
    return sorted({c for c in candidates if c[0] < c[1] < c[2]})


def cocycle_check(
    model: ConstitutiveModel,
    leaf: Leaf,
    cfg: Optional[SolverConfig] = None,
    threads: int = 1,
) -> float:
    """
    Largest defect ||P_t(z) - P_t(r) P_z(r)^-1|| over sampled grid triples
    z < r < t, where P_s(x) is the arrow x -> s of the process with reference s.

    P_t(.) is integrated backward from t and P_z(r) forward from z, so the
    leg z -> r is covered once in each direction. The defect therefore
    vanishes only up to the RK4 discretization error.
    """
    if not leaf.is_remodeling:
        raise ProcessError(f"Leaf [{leaf.t_lo}, {leaf.t_hi}] is not a remodeling leaf")
    grid = leaf_grid(leaf)
    triples = _triples(len(grid))
    if not triples:
        raise ProcessError("Cocycle check needs a leaf with at least three grid instants")

    fibres = map_instants(lambda t: evolution_fibre(model, float(t), cfg), list(grid), threads)
    thetas = [d.theta for d in _directions(fibres, ())]
    processes: dict[int, np.ndarray] = {}

    def process(ref: int) -> np.ndarray:
        if ref not in processes:
            processes[ref] = _integrate(grid, thetas, ref)
        return processes[ref]

    defect = 0.0
    for z, r, t in triples:
        direct = process(t)[z]
        chained = process(t)[r] @ np.linalg.inv(process(z)[r])
        defect = max(defect, float(np.max(np.abs(direct - chained))))
    return defect
