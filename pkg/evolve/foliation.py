# ABOUTME: Classifies a time interval instant by instant and extracts its remodeling/aging foliation
# ABOUTME: Spike demotion, maximal leaves, the smooth-aging verdict and the maximality check against candidate leaves
import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from evolve.config import SolverConfig
from evolve.evolution import FibreResult, evolution_fibre, map_instants
from evolve.model import ConstitutiveModel

logger = logging.getLogger(__name__)

# relative tolerance for grid uniformity and for snapping instants to grid points
GRID_RTOL = 1e-12

LONE_REMODELING_NOTE = "single remodeling instant at the grid boundary, not resolvable into an interval"


class LeafKind(str, enum.Enum):
    REMODELING = "remodeling-interval"
    AGING = "aging-instant"


@dataclass(frozen=True)
class TimeClassification:
    """Fibres on a uniform grid plus the spike-corrected sharp dimensions."""
    t0: float
    t1: float
    grid: tuple[float, ...]
    fibres: tuple[FibreResult, ...]
    effective_sharp: tuple[int, ...]

    def __post_init__(self):
        if len(self.grid) != len(self.fibres) or len(self.grid) != len(self.effective_sharp):
            raise ValueError("grid, fibres and effective_sharp must have the same length")
        for effective, fibre in zip(self.effective_sharp, self.fibres):
            if effective > fibre.sharp_dim:
                raise ValueError(f"effective_sharp exceeds sharp_dim at t={fibre.t}")

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / (len(self.grid) - 1)

    @property
    def unconverged(self) -> tuple[float, ...]:
        return tuple(f.t for f in self.fibres if not f.converged)

    @property
    def demoted(self) -> tuple[float, ...]:
        return tuple(f.t for f, e in zip(self.fibres, self.effective_sharp) if e < f.sharp_dim)


@dataclass(frozen=True)
class Leaf:
    """
    A leaf of the foliation at grid resolution.

    Endpoints are grid instants. boundary_flags mark endpoints whose true
    position is only known to within one grid step.

    note says why a leaf is not what its run suggests; it is only serialized
    when set.
    """
    kind: LeafKind
    t_lo: float
    t_hi: float
    boundary_flags: tuple[bool, bool]
    step: float
    note: Optional[str] = None

    @property
    def is_remodeling(self) -> bool:
        return self.kind is LeafKind.REMODELING

    def contains(self, lo: float, hi: float) -> bool:
        tol = GRID_RTOL * max(1.0, abs(self.t_lo), abs(self.t_hi)) + 1e-9 * self.step
        return self.t_lo - tol <= lo and hi <= self.t_hi + tol

    def to_dict(self) -> dict:
        data = {
            "kind": self.kind.value,
            "t_lo": float(self.t_lo),
            "t_hi": float(self.t_hi),
            "boundary_flags": list(self.boundary_flags),
        }
        if self.note is not None:
            data["note"] = self.note
        return data


@dataclass(frozen=True)
class AgingVerdict:
    smooth_aging: bool
    constant_fibre_dim: Optional[int]
    jump_instants: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "smooth_aging": self.smooth_aging,
            "constant_fibre_dim": self.constant_fibre_dim,
            "jump_instants": [float(t) for t in self.jump_instants],
        }


@dataclass(frozen=True)
class MaximalityVerdict:
    violations: tuple[str, ...]
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations


def uniform_grid(t0: float, t1: float, n_grid: int) -> np.ndarray:
    if not t0 < t1:
        raise ValueError(f"Need t0 < t1, got [{t0}, {t1}]")
    if n_grid < 2:
        raise ValueError(f"Need at least 2 grid points, got {n_grid}")
    return np.linspace(t0, t1, n_grid)


def leaf_grid(leaf: Leaf) -> np.ndarray:
    """Grid instants covered by a leaf."""
    if leaf.t_lo == leaf.t_hi:
        return np.array([leaf.t_lo])
    count = int(round((leaf.t_hi - leaf.t_lo) / leaf.step)) + 1
    return np.linspace(leaf.t_lo, leaf.t_hi, max(count, 2))


def demote_spikes(sharp: Sequence[int]) -> list[int]:
    """
    Demote isolated pointwise remodeling instants.

    A run of sharp_dim=1 of length one whose neighbours both have
    sharp_dim=0 cannot carry a smooth nonvanishing time component, so it is
    set to 0. Runs touching either end of the grid are left alone.
    """
    effective = list(sharp)
    for i in range(1, len(sharp) - 1):
        if sharp[i] == 1 and sharp[i - 1] == 0 and sharp[i + 1] == 0:
            effective[i] = 0
    return effective


def classify_interval(
    model: ConstitutiveModel,
    t0: float,
    t1: float,
    n_grid: int,
    cfg: Optional[SolverConfig] = None,
    threads: int = 1,
) -> TimeClassification:
    """
    Solve the evolution equation on a uniform grid over [t0, t1].

    Unconverged instants are kept with converged=False; the sweep never
    stops early.
    """
    grid = uniform_grid(t0, t1, n_grid)
    fibres = map_instants(lambda t: evolution_fibre(model, float(t), cfg), list(grid), threads)
    effective = demote_spikes([f.sharp_dim for f in fibres])

    classification = TimeClassification(
        t0=float(t0),
        t1=float(t1),
        grid=tuple(float(t) for t in grid),
        fibres=tuple(fibres),
        effective_sharp=tuple(effective),
    )
    for t in classification.demoted:
        logger.warning(f"Isolated remodeling instant at t={t} demoted to aging")
    if classification.unconverged:
        logger.warning(f"{len(classification.unconverged)} of {n_grid} instants did not converge")
    logger.info(
        f"Classified {model.label} on [{t0}, {t1}] with {n_grid} instants: "
        f"{sum(effective)} remodeling"
    )
    return classification


def _runs(values: Sequence[int]) -> list[tuple[int, int, int]]:
    """Maximal runs as (value, first index, last index)."""
    runs = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] != values[start]:
            runs.append((values[start], start, i - 1))
            start = i
    return runs


def extract_leaves(classification: TimeClassification) -> list[Leaf]:
    """
    Maximal runs of effective_sharp=1 become remodeling leaves, every other
    instant an aging singleton. A remodeling run of a single instant (only
    possible at either end of the grid) cannot be resolved into an interval
    and is reported as a singleton flagged on both sides, with a note saying so.
    """
    grid = classification.grid
    step = classification.step
    leaves: list[Leaf] = []
    runs = _runs(classification.effective_sharp)
    for position, (value, first, last) in enumerate(runs):
        if value == 1 and last > first:
            leaves.append(Leaf(LeafKind.REMODELING, grid[first], grid[last], (True, True), step))
            continue
        for i in range(first, last + 1):
            near_remodeling = value == 1
            lo_flag = near_remodeling or (i == first and position > 0 and runs[position - 1][0] == 1)
            hi_flag = near_remodeling or (
                i == last and position + 1 < len(runs) and runs[position + 1][0] == 1
            )
            note = LONE_REMODELING_NOTE if near_remodeling else None
            leaves.append(Leaf(LeafKind.AGING, grid[i], grid[i], (lo_flag, hi_flag), step, note))
    return leaves


def detect_smooth_aging(classification: TimeClassification) -> AgingVerdict:
    """
    Smooth aging: no remodeling anywhere and a constant fibre dimension.

    jump_instants lists the grid instants where the pointwise dimension
    differs from the previous instant.
    """
    dims = [f.pointwise_dim for f in classification.fibres]
    jumps = tuple(
        classification.grid[i] for i in range(1, len(dims)) if dims[i] != dims[i - 1]
    )
    smooth = not any(classification.effective_sharp) and not jumps
    return AgingVerdict(
        smooth_aging=smooth,
        constant_fibre_dim=dims[0] if smooth else None,
        jump_instants=jumps,
    )


def check_maximality(
    leaves: Sequence[Leaf],
    candidates: Sequence[tuple[float, float]],
    model: ConstitutiveModel,
    cfg: Optional[SolverConfig] = None,
    threads: int = 1,
) -> MaximalityVerdict:
    """
    Check that every interval carrying a verified remodeling process lies
    inside a reported remodeling leaf.

    A candidate on which no process integrates, or whose process fails the
    isomorphism check, creates no obligation and only earns a note.
    """
    from evolve.flow import ProcessError, integrate_process, isomorphism_residual

    cfg = cfg or SolverConfig()
    if not leaves:
        raise ValueError("check_maximality needs the leaves of a classification")
    step = leaves[0].step
    remodeling = [leaf for leaf in leaves if leaf.is_remodeling]

    violations: list[str] = []
    notes: list[str] = []
    for lo, hi in candidates:
        if not lo < hi:
            notes.append(f"[{lo}, {hi}] is empty, skipped")
            continue
        candidate = Leaf(LeafKind.REMODELING, lo, hi, (False, False), min(step, hi - lo))
        try:
            process = integrate_process(model, candidate, lo, cfg, threads=threads)
        except ProcessError as e:
            notes.append(f"[{lo}, {hi}]: no remodeling process ({e})")
            continue
        residual = isomorphism_residual(model, process)
        if residual > cfg.residual_tol:
            notes.append(f"[{lo}, {hi}]: process residual {residual:.3e} above {cfg.residual_tol:.1e}")
            continue
        if not any(leaf.contains(lo, hi) for leaf in remodeling):
            violations.append(f"[{lo}, {hi}] carries a remodeling process but lies in no remodeling leaf")
    return MaximalityVerdict(tuple(violations), tuple(notes))
