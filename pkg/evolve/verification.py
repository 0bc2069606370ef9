# ABOUTME: Built-in property suite run by `evolve verify` on the model zoo
# ABOUTME: Symmetry oracles, liquid-crystal dichotomy, closed-form flow, covariance, spike demotion, maximality
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from evolve.config import SolverConfig
from evolve.evolution import (
    FibreResult,
    assemble_system,
    evolution_fibre,
    map_instants,
    null_space,
    sample_frames,
)
from evolve.flow import (
    JetArrow,
    cocycle_check,
    conjugate_symmetry,
    integrate_process,
    isomorphism_residual,
    symmetry_residual,
)
from evolve.foliation import (
    Leaf,
    LeafKind,
    check_maximality,
    classify_interval,
    detect_smooth_aging,
    extract_leaves,
)
from evolve.model import (
    ConstitutiveModel,
    FixedParticleContext,
    change_reference,
    det_only,
    exp_decay,
    isotropic,
    liquid_crystal,
    piecewise_cubic,
)

logger = logging.getLogger(__name__)

ORACLE_FRAMES = 500
COVARIANCE_CHANGES = 10
COVARIANCE_INSTANTS = (0.0, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def liquid_crystal_with(mu: str) -> ConstitutiveModel:
    return liquid_crystal(FixedParticleContext.from_params({"mu": mu}))


def fibre_span(fibre: FibreResult) -> np.ndarray:
    """Rows spanning the full null space of a fibre."""
    rows = [b.to_vector() for b in fibre.symmetry_basis]
    if fibre.remodeling_direction is not None:
        rows.append(fibre.remodeling_direction.to_vector())
    return np.array(rows).reshape(len(rows), 10)


def brute_force_angle(model: ConstitutiveModel, t: float, cfg: SolverConfig) -> tuple[int, int, float]:
    """
    Recompute the null space from a large independent frame sample.

    Returns:
        (adaptive dimension, brute-force dimension, largest principal angle)
    """
    fibre = evolution_fibre(model, t, cfg)
    A = assemble_system(model, t, sample_frames(ORACLE_FRAMES, cfg.seed + 1000, cfg))
    basis, _ = null_space(A, cfg.rank_tol_rel)
    span = fibre_span(fibre)
    if len(span) != len(basis) or len(basis) == 0:
        return fibre.pointwise_dim, len(basis), 0.0
    angle = float(np.max(scipy.linalg.subspace_angles(span.T, basis.T)))
    return fibre.pointwise_dim, len(basis), angle


def _symmetry_oracle(model: ConstitutiveModel, symmetry_dim: int, cfg: SolverConfig):
    def check():
        fibre = evolution_fibre(model, 0.0, cfg)
        dim, brute_dim, angle = brute_force_angle(model, 0.0, cfg)
        ok = (len(fibre.symmetry_basis) == symmetry_dim and fibre.sharp_dim == 1
              and dim == brute_dim and angle < 1e-8)
        return ok, (f"symmetry dim {len(fibre.symmetry_basis)} (expected {symmetry_dim}), "
                    f"brute force dim {brute_dim}, max angle {angle:.2e}")
    return check


def _remodeling_dichotomy(cfg: SolverConfig, threads: int):
    def check():
        classification = classify_interval(liquid_crystal_with("1"), 0.0, 10.0, 101, cfg, threads)
        leaves = extract_leaves(classification)
        ok = (len(leaves) == 1 and leaves[0].is_remodeling
              and (leaves[0].t_lo, leaves[0].t_hi) == (0.0, 10.0))
        return ok, f"{len(leaves)} leaves, first {leaves[0].kind.value} [{leaves[0].t_lo}, {leaves[0].t_hi}]"
    return check


def _aging_dichotomy(cfg: SolverConfig, threads: int):
    def check():
        classification = classify_interval(liquid_crystal_with("1 + t"), 0.0, 10.0, 101, cfg, threads)
        verdict = detect_smooth_aging(classification)
        ok = verdict.smooth_aging and verdict.constant_fibre_dim == 5
        return ok, f"smooth_aging={verdict.smooth_aging}, constant_fibre_dim={verdict.constant_fibre_dim}"
    return check


def _closed_form_flow(cfg: SolverConfig, threads: int):
    def check():
        model = exp_decay()
        leaf = Leaf(LeafKind.REMODELING, 0.0, 3.0, (True, True), 0.015)
        process = integrate_process(model, leaf, 0.0, cfg, threads=threads)
        exact = np.exp(process.grid / 3.0)[:, None, None] * np.eye(3)
        error = float(np.max(np.abs(process.P_samples - exact)))
        residual = isomorphism_residual(model, process)
        defect = cocycle_check(model, leaf, cfg, threads)
        ok = error <= 1e-8 and residual <= 1e-8 and defect <= 1e-8
        return ok, f"max |P - exp(t/3) I| {error:.2e}, isomorphism {residual:.2e}, cocycle {defect:.2e}"
    return check


def random_reference_changes(count: int, seed: int, cond_max: float = 50.0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    changes = []
    while len(changes) < count:
        C = rng.normal(size=(3, 3))
        if abs(np.linalg.det(C)) > 0.1 and np.linalg.cond(C) <= cond_max:
            changes.append(C)
    return changes


def covariance_defect(model: ConstitutiveModel, C: np.ndarray, t: float, cfg: SolverConfig) -> tuple[bool, float]:
    """
    Compare a model with its reference-changed version at t.

    Returns:
        (dimensions agree, residual of the conjugated symmetry basis in the changed model)
    """
    changed = change_reference(model, C)
    before = evolution_fibre(model, t, cfg)
    after = evolution_fibre(changed, t, cfg)
    same = (before.pointwise_dim, before.sharp_dim) == (after.pointwise_dim, after.sharp_dim)
    conjugated = conjugate_symmetry(before.symmetry_basis, JetArrow(t, t, C))
    return same, symmetry_residual(changed, conjugated, t, cfg)


def _covariance(cfg: SolverConfig, threads: int):
    def check():
        worst = 0.0
        mismatches = 0
        for model in (det_only(), isotropic(), liquid_crystal_with("1")):
            for C in random_reference_changes(COVARIANCE_CHANGES, cfg.seed):
                defects = map_instants(lambda t: covariance_defect(model, C, t, cfg), COVARIANCE_INSTANTS, threads)
                for same, residual in defects:
                    mismatches += not same
                    worst = max(worst, residual)
        checked = 3 * COVARIANCE_CHANGES * len(COVARIANCE_INSTANTS)
        ok = mismatches == 0 and worst <= 1e-8
        return ok, f"{checked} cases, {mismatches} dimension mismatches, worst residual {worst:.2e}"
    return check


def _spike_demotion(cfg: SolverConfig, threads: int):
    def check():
        classification = classify_interval(liquid_crystal_with("1 + t^2"), -1.0, 1.0, 201, cfg, threads)
        sharp_at = [f.t for f in classification.fibres if f.sharp_dim == 1]
        leaves = extract_leaves(classification)
        ok = (len(sharp_at) == 1 and abs(sharp_at[0]) < 1e-12
              and not any(classification.effective_sharp)
              and all(not leaf.is_remodeling for leaf in leaves))
        return ok, f"pointwise sharp at {sharp_at}, {sum(classification.effective_sharp)} effective"
    return check


def _maximality(cfg: SolverConfig, threads: int):
    def check():
        model = piecewise_cubic()
        classification = classify_interval(model, -1.0, 1.0, 201, cfg, threads)
        leaves = extract_leaves(classification)
        remodeling = [leaf for leaf in leaves if leaf.is_remodeling]
        if len(remodeling) != 1:
            return False, f"expected one remodeling leaf, found {len(remodeling)}"
        leaf = remodeling[0]
        mid = leaf.t_lo + 0.5 * (leaf.t_hi - leaf.t_lo)
        candidates = [(leaf.t_lo, leaf.t_hi), (leaf.t_lo, mid), (mid, leaf.t_hi)]
        verdict = check_maximality(leaves, candidates, model, cfg, threads)
        return verdict.passed, f"leaf [{leaf.t_lo}, {leaf.t_hi}], {len(verdict.violations)} violations"
    return check


def run_suite(cfg: Optional[SolverConfig] = None, threads: int = 1) -> list[CheckResult]:
    """Run every built-in check; a check that raises counts as failed."""
    cfg = cfg or SolverConfig()
    checks: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
        ("det symmetry oracle", _symmetry_oracle(det_only(), 8, cfg)),
        ("isotropic symmetry oracle", _symmetry_oracle(isotropic(), 3, cfg)),
        ("liquid crystal remodeling", _remodeling_dichotomy(cfg, threads)),
        ("liquid crystal aging", _aging_dichotomy(cfg, threads)),
        ("exp decay closed-form flow", _closed_form_flow(cfg, threads)),
        ("change of reference covariance", _covariance(cfg, threads)),
        ("spike demotion", _spike_demotion(cfg, threads)),
        ("maximality", _maximality(cfg, threads)),
    ]
    results = []
    for name, check in checks:
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        result = CheckResult(name, bool(passed), detail)
        (logger.info if result.passed else logger.error)(result.line())
        results.append(result)
    return results
