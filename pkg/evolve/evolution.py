# ABOUTME: Per-instant solver for the evolution equation lambda dW/dt + F^i_l Theta^l_j dW/dF^i_j = 0
# ABOUTME: Samples frames, assembles the linear system, takes its SVD null space and splits off the remodeling direction
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np
import scipy.linalg

from evolve.config import SolverConfig
from evolve.model import ConstitutiveModel

logger = logging.getLogger(__name__)

N_UNKNOWNS = 10

# projections of unit matrices shorter than this are skipped in the canonical basis
CANONICAL_TOL = 1e-6

T = TypeVar("T")


class NonConvergenceError(RuntimeError):
    """Null-space dimension kept changing up to the sample cap."""


@dataclass(frozen=True, eq=False)
class EvolutionTangent:
    """
    A pair (lambda, Theta): the coefficient of d/dt and the gl(3) part of a
    left-invariant vector field. Flattened, Theta is row-major, so the vector
    form is (lambda, Theta^1_1, Theta^1_2, ..., Theta^3_3).
    """
    lam: float
    theta: np.ndarray

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "EvolutionTangent":
        vector = np.asarray(vector, dtype=float)
        return cls(float(vector[0]), vector[1:].reshape(3, 3).copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.lam], np.asarray(self.theta, dtype=float).reshape(9)))

    def to_dict(self) -> dict:
        return {"lambda": float(self.lam), "theta": [[float(x) for x in row] for row in self.theta]}


@dataclass(frozen=True, eq=False)
class FibreResult:
    """Null-space analysis of the evolution equation at one instant."""
    t: float
    pointwise_dim: int
    sharp_dim: int
    remodeling_direction: Optional[EvolutionTangent]
    symmetry_basis: tuple[EvolutionTangent, ...]
    singular_values: tuple[float, ...]
    samples_used: int
    frame_seed: int
    converged: bool = True
    max_residual: float = 0.0

    @property
    def sigma_min(self) -> float:
        return self.singular_values[-1]

    def to_dict(self) -> dict:
        return {
            "t": float(self.t),
            "pointwise_dim": self.pointwise_dim,
            "sharp_dim": self.sharp_dim,
            "remodeling_direction": (
                self.remodeling_direction.to_dict() if self.remodeling_direction else None
            ),
            "symmetry_basis": [b.to_dict() for b in self.symmetry_basis],
            "singular_values": [float(s) for s in self.singular_values],
            "samples_used": self.samples_used,
            "frame_seed": self.frame_seed,
            "converged": self.converged,
            "max_residual": float(self.max_residual),
        }


def _structured_frames() -> list[np.ndarray]:
    c, s = np.cos(0.3), np.sin(0.3)
    return [
        np.eye(3),
        np.diag([2.0, 1.0, 1.0]),
        np.diag([1.0, 1.0, 2.0]),
        np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]),
        np.eye(3) + 0.1 * np.ones((3, 3)),
    ]


def sample_frames(n: int, seed: int, cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """
    Deterministic sample of orientation-preserving frames.

    The first five frames are always I, diag(2,1,1), diag(1,1,2), a 0.3 rad
    rotation about z and I + 0.1*ones. The rest are Gaussian matrices kept
    only if det >= frame_det_min and cond <= frame_cond_max, so a larger n
    with the same seed extends a smaller sample.

    Returns:
        Array of shape (n, 3, 3)
    """
    if n < 1:
        raise ValueError(f"Need at least one frame, got n={n}")
    cfg = cfg or SolverConfig()
    frames = _structured_frames()[:n]
    rng = np.random.default_rng(seed)
    while len(frames) < n:
        F = rng.normal(size=(3, 3))
        if np.linalg.det(F) < 0:
            F[0] = -F[0]
        if np.linalg.det(F) < cfg.frame_det_min or np.linalg.cond(F) > cfg.frame_cond_max:
            continue
        frames.append(F)
    return np.stack(frames)


def assemble_system(model: ConstitutiveModel, t: float, frames: np.ndarray) -> np.ndarray:
    """
    Assemble the evolution equation as a (n*m) x 10 matrix.

    Row (k, c) holds dW_c/dt at frame F_k in column 0 and, in column
    1 + 3*l + j, the coefficient of Theta^l_j, i.e. sum_i F^i_l dW_c/dF^i_j,
    obtained as the derivative of W_c along the direction F E_lj.

    Raises:
        SingularMatrixError: If a frame is singular
    """
    frames = np.asarray(frames, dtype=float)
    n = len(frames)
    dts = np.zeros((n, N_UNKNOWNS))
    dts[:, 0] = 1.0
    dFs = np.zeros((n, N_UNKNOWNS, 3, 3))
    for l in range(3):
        for j in range(3):
            # F E_lj keeps column l of F, moved to column j
            dFs[:, 1 + 3 * l + j, :, j] = frames[:, :, l]
    _, derivs = model.jet(t, frames, dts, dFs)
    return derivs.reshape(n * model.m, N_UNKNOWNS)


def null_space(A: np.ndarray, rank_tol_rel: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Numerical null space of A by SVD.

    Args:
        A: Matrix with 10 columns
        rank_tol_rel: Singular values at or below rank_tol_rel * sigma_max count as zero

    Returns:
        (basis, singular_values): basis rows are orthonormal vectors spanning
        the trailing right-singular directions; singular_values has length 10,
        zero-padded when A has fewer than 10 rows
    """
    A = np.asarray(A, dtype=float)
    sigma = np.zeros(N_UNKNOWNS)
    if A.shape[0] == 0:
        return np.eye(N_UNKNOWNS), sigma
    _, s, vh = scipy.linalg.svd(A, full_matrices=True)
    sigma[:len(s)] = s[:N_UNKNOWNS]
    if sigma[0] == 0:
        return np.eye(N_UNKNOWNS), sigma
    rank = int(np.sum(sigma > rank_tol_rel * sigma[0]))
    return vh[rank:].copy(), sigma


def relative_residual(A: np.ndarray, v: np.ndarray) -> float:
    """||A v|| / (sigma_max ||v||), zero for a zero system or vector."""
    scale = np.linalg.norm(A, 2) * np.linalg.norm(v)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(A @ v) / scale)


def split_null_space(basis: np.ndarray, rank_tol_rel: float) -> tuple[Optional[np.ndarray], np.ndarray]:
    """
    Split a null basis into the remodeling direction and the symmetry algebra.

    The basis vector with the largest |lambda| is the pivot; lambda is
    eliminated from the others, which are re-orthonormalized. The pivot is
    scaled to lambda = 1 and made orthogonal to the symmetry part, which
    gives the minimal-norm remodeling direction.

    Returns:
        (direction or None, symmetry rows with lambda exactly 0)
    """
    if len(basis) == 0:
        return None, np.zeros((0, N_UNKNOWNS))
    lam = basis[:, 0]
    pivot_index = int(np.argmax(np.abs(lam)))
    if abs(lam[pivot_index]) <= rank_tol_rel:
        symmetry = basis.copy()
        symmetry[:, 0] = 0.0
        return None, _orthonormal_rows(symmetry)

    pivot = basis[pivot_index]
    others = np.delete(basis, pivot_index, axis=0)
    others = others - np.outer(others[:, 0] / pivot[0], pivot)
    others[:, 0] = 0.0
    symmetry = _orthonormal_rows(others)

    direction = pivot / pivot[0]
    if len(symmetry):
        direction = direction - symmetry.T @ (symmetry @ direction)
    direction[0] = 1.0
    return direction, symmetry


def _orthonormal_rows(rows: np.ndarray) -> np.ndarray:
    """
    Orthonormal rows spanning the same subspace, in a canonical order.

    The unit matrices E_lj are projected onto the subspace and Gram-Schmidt
    keeps them in order, so the basis depends only on the subspace and
    varies smoothly with it.
    """
    if len(rows) == 0:
        return np.zeros((0, N_UNKNOWNS))
    q, _ = np.linalg.qr(rows.T)
    q = q.T
    q[:, 0] = 0.0
    projector = q.T @ q
    canonical: list[np.ndarray] = []
    for column in range(1, N_UNKNOWNS):
        v = projector[:, column].copy()
        for b in canonical:
            v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > CANONICAL_TOL:
            canonical.append(v / norm)
        if len(canonical) == len(q):
            return np.array(canonical)
    return q


def evolution_fibre(model: ConstitutiveModel, t: float, cfg: Optional[SolverConfig] = None) -> FibreResult:
    """
    Solve the evolution equation at instant t.

    Starts from cfg.n_samples_initial frames and doubles the sample (fresh
    seed each round) until the null-space dimension repeats across two
    consecutive rounds or cfg.n_samples_max is reached. A dimension still
    changing at the cap is reported with converged=False.

    Raises:
        ModelError: If t lies outside the model time domain
    """
    cfg = cfg or SolverConfig()
    model.check_time(t)
    cfg.check_rows(model.m)

    n = cfg.n_samples_initial
    round_index = 0
    previous_dim: Optional[int] = None
    while True:
        frame_seed = cfg.seed + round_index
        A = assemble_system(model, t, sample_frames(n, frame_seed, cfg))
        basis, sigma = null_space(A, cfg.rank_tol_rel)
        dim = len(basis)
        logger.debug(f"t={t}: round {round_index} with {n} frames, null dim {dim}")
        if previous_dim is not None and dim == previous_dim:
            converged = True
            break
        if n >= cfg.n_samples_max:
            converged = previous_dim is None
            break
        previous_dim = dim
        n = min(2 * n, cfg.n_samples_max)
        round_index += 1

    if not converged:
        logger.warning(
            f"t={t}: null-space dimension still changing at {n} frames "
            f"({previous_dim} -> {dim})"
        )

    direction, symmetry = split_null_space(basis, cfg.rank_tol_rel)
    checked = list(basis) + list(symmetry) + ([direction] if direction is not None else [])
    max_residual = max((relative_residual(A, v) for v in checked), default=0.0)
    if max_residual > cfg.residual_tol:
        logger.warning(f"t={t}: null vector residual {max_residual:.3e} exceeds {cfg.residual_tol:.1e}")

    return FibreResult(
        t=float(t),
        pointwise_dim=dim,
        sharp_dim=0 if direction is None else 1,
        remodeling_direction=None if direction is None else EvolutionTangent.from_vector(direction),
        symmetry_basis=tuple(EvolutionTangent.from_vector(v) for v in symmetry),
        singular_values=tuple(float(s) for s in sigma),
        samples_used=n,
        frame_seed=frame_seed,
        converged=converged,
        max_residual=max_residual,
    )


def final_system(model: ConstitutiveModel, result: FibreResult, cfg: Optional[SolverConfig] = None) -> np.ndarray:
    """Rebuild the system a fibre result was computed from."""
    frames = sample_frames(result.samples_used, result.frame_seed, cfg)
    return assemble_system(model, result.t, frames)


def require_converged(result: FibreResult) -> FibreResult:
    if not result.converged:
        raise NonConvergenceError(
            f"Null-space dimension did not stabilize at t={result.t} "
            f"with {result.samples_used} frames"
        )
    return result


def map_instants(fn: Callable[[float], T], instants: Sequence[float], threads: int = 1) -> list[T]:
    """Apply fn to every instant, in parallel when threads > 1; results keep input order."""
    if threads <= 1 or len(instants) <= 1:
        return [fn(t) for t in instants]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, instants))
