"""Spoof-angle estimation by minimizing the corrected-measurement objective.

The objective ``J_corr(theta)`` rotates each PMU's phasors back by
``-theta_i``, runs the iterative WLS estimator on the full measurement set
and returns the weighted residual. :func:`pso_correct` searches only the
PMUs flagged by identification, each inside its identified interval;
:func:`golden_section_baseline` is the single-attack line search over every
PMU used for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attack import AttackProfile, canonical_angle
from .estimator import Workspace, iterate_batch
from .feeder import FeederModel
from .identify import IdentificationResult
from .measurement import MeasurementSet, Placement, build_layout

MARGIN = 1e-3
INNER_TOL = 1e-6
INNER_MAX_ITER = 20
INV_PHI = (np.sqrt(5.0) - 1) / 2


@dataclass(frozen=True)
class PsoParams:
    swarm_size: int = 50
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    max_iters: int = 200
    stall_iters: int = 30
    stall_tol: float = 1e-6
    velocity_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if not 0 < self.inertia < 1:
            raise ValueError("inertia must lie in (0, 1)")
        if self.max_iters < 1 or self.stall_iters < 1:
            raise ValueError("max_iters and stall_iters must be positive")
        if self.stall_tol < 0 or self.velocity_fraction <= 0:
            raise ValueError("stall_tol must be >= 0 and velocity_fraction > 0")


@dataclass
class CorrectionResult:
    theta_hat: AttackProfile
    J_corr: float
    x_corr: np.ndarray = field(repr=False)
    objective_evaluations: int
    converged: bool
    iterations: int = 0
    no_attack: bool = False
    history: np.ndarray = field(default=None, repr=False)   # global-best J per iteration


class CorrectionObjective:
    """Batched ``J_corr`` for one spoofed measurement set.

    Every call counts one evaluation per candidate column. Candidates whose
    inner estimator does not converge score ``+inf``.
    """

    def __init__(self, model: FeederModel, placement: Placement, z_spf: MeasurementSet,
                 workspace: Workspace | None = None, tol: float = INNER_TOL,
                 max_iter: int = INNER_MAX_ITER):
        self.ws = workspace if workspace is not None else Workspace(model, build_layout(model, placement))
        self.z = z_spf
        self.bundle = self.ws.full_bundle(z_spf)
        self.n_pmu = placement.n_pmu
        self.tol, self.max_iter = tol, max_iter
        self.evaluations = 0
        self.calls = 0

    def corrected_values(self, thetas: np.ndarray) -> np.ndarray:
        """``(m, B)`` corrected measurement columns for ``thetas`` of shape ``(B, n_pmu)``."""
        lay = self.z.layout
        t = -np.asarray(thetas, dtype=float)[:, lay.pair_pmu - 1].T     # (pairs, B)
        Z = np.repeat(self.z.values[:, None], t.shape[1], axis=1)
        re, im = Z[lay.pair_re], Z[lay.pair_re + 1]
        c, s = np.cos(t), np.sin(t)
        Z[lay.pair_re] = c * re - s * im
        Z[lay.pair_re + 1] = s * re + c * im
        return Z

    def __call__(self, thetas) -> tuple[np.ndarray, np.ndarray]:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.n_pmu:
            raise ValueError(f"candidates need {self.n_pmu} angles, got {thetas.shape[1]}")
        X, Z, _it, ok = iterate_batch(self.bundle, self.corrected_values(thetas), self.z.meter_power,
                                      self.tol, self.max_iter)
        R = Z - self.bundle.H @ X
        J = np.einsum("ib,i,ib->b", R, self.bundle.w, R)
        J[~ok] = np.inf
        self.evaluations += thetas.shape[0]
        self.calls += 1
        return J, X


def evaluate_correction(z_spf: MeasurementSet, theta_candidate, model: FeederModel,
                        placement: Placement) -> tuple[float, np.ndarray]:
    """``(J_corr, x_corr)`` for one candidate profile."""
    th = theta_candidate.as_array() if isinstance(theta_candidate, AttackProfile) else theta_candidate
    J, X = CorrectionObjective(model, placement, z_spf)(np.asarray(th, dtype=float)[None, :])
    return float(J[0]), X[:, 0]


def search_box(ident: IdentificationResult, margin: float = MARGIN):
    """Searched PMU ids with lower/upper bounds, and the PMUs pinned to pi."""
    dims = sorted(ident.P2 | ident.P3)
    lo = np.array([margin if i in ident.P2 else -np.pi + margin for i in dims])
    hi = np.array([np.pi - margin if i in ident.P2 else -margin for i in dims])
    return dims, lo, hi, sorted(ident.P1)


def pso_correct(z_spf: MeasurementSet, ident: IdentificationResult, params: PsoParams,
                model: FeederModel, placement: Placement,
                objective: CorrectionObjective | None = None) -> CorrectionResult:
    """Minimize ``J_corr`` over the identified intervals with a constriction-factor PSO.

    Unflagged PMUs stay at 0 and ``P1`` PMUs at pi; one particle dimension
    per PMU in ``P2`` or ``P3``. The run stops when the global best improves
    by less than ``stall_tol`` for ``stall_iters`` consecutive iterations
    (``converged``) or after ``max_iters``.
    """
    f = objective if objective is not None else CorrectionObjective(model, placement, z_spf)
    start = f.evaluations
    dims, lo, hi, pinned = search_box(ident)
    base = np.zeros(placement.n_pmu)
    base[np.asarray(pinned, dtype=int) - 1] = np.pi
    cols = np.asarray(dims, dtype=int) - 1

    def profile(pos):
        th = np.repeat(base[None, :], pos.shape[0], axis=0)
        th[:, cols] = pos
        return th

    if not dims:
        J, X = f(base[None, :])
        return CorrectionResult(AttackProfile(tuple(base)), float(J[0]), X[:, 0], f.evaluations - start,
                                True, 0, no_attack=not pinned, history=np.array([J[0]]))

    rng = np.random.default_rng(params.seed)
    n, d = params.swarm_size, len(dims)
    vmax = params.velocity_fraction * (hi - lo)
    pos = rng.uniform(lo, hi, size=(n, d))
    vel = rng.uniform(-vmax, vmax, size=(n, d))
    J, X = f(profile(pos))
    pbest, pbest_j = pos.copy(), J.copy()
    g = int(np.argmin(pbest_j))
    gbest, gbest_j, gbest_x = pbest[g].copy(), pbest_j[g], X[:, g].copy()
    history = [gbest_j]
    stall, converged, it = 0, False, 0
    for it in range(1, params.max_iters + 1):
        r1, r2 = rng.random((n, d)), rng.random((n, d))
        vel = (params.inertia * vel + params.c1 * r1 * (pbest - pos) + params.c2 * r2 * (gbest - pos))
        vel = np.clip(vel, -vmax, vmax)
        pos = pos + vel
        out = (pos < lo) | (pos > hi)
        pos = np.clip(pos, lo, hi)
        vel[out] = -vel[out]
        J, X = f(profile(pos))
        better = J < pbest_j
        pbest[better], pbest_j[better] = pos[better], J[better]
        g = int(np.argmin(pbest_j))
        improvement = gbest_j - pbest_j[g]
        if pbest_j[g] < gbest_j:       # only a particle improved this round can beat the old best
            gbest, gbest_j, gbest_x = pbest[g].copy(), pbest_j[g], X[:, g].copy()
        history.append(gbest_j)
        stall = stall + 1 if improvement < params.stall_tol else 0
        if stall >= params.stall_iters:
            converged = True
            break
    theta = profile(gbest[None, :])[0]
    return CorrectionResult(AttackProfile(tuple(theta)), float(gbest_j), gbest_x, f.evaluations - start,
                            converged and np.isfinite(gbest_j), it, history=np.asarray(history))


def golden_section(fun, a: float, b: float, tol: float):
    """Golden-section minimization of a scalar function on ``[a, b]``; returns ``(x, f(x), evaluations)``."""
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    n = 2
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fun(d)
        n += 1
    return (c, fc, n) if fc <= fd else (d, fd, n)


@dataclass
class BaselineResult:
    per_pmu: tuple[tuple[int, float, float], ...]      # (pmu, theta_hat, J)
    best_pmu: int
    theta_hat: np.ndarray       # per PMU, PMU 1 included
    J_corr: float
    objective_evaluations: int


def golden_section_baseline(z_spf: MeasurementSet, model: FeederModel, placement: Placement,
                            tol: float = 1e-4, objective: CorrectionObjective | None = None
                            ) -> BaselineResult:
    """Single-attack baseline: a golden-section search of ``J_corr`` over ``[-pi, pi]``
    for each PMU in turn (other angles at 0); the PMU with the lowest minimum wins."""
    f = objective if objective is not None else CorrectionObjective(model, placement, z_spf)
    start = f.evaluations
    rows = []
    for i in range(1, placement.n_pmu + 1):
        def line(t, i=i):
            th = np.zeros(placement.n_pmu)
            th[i - 1] = t
            return float(f(th[None, :])[0][0])
        t, j, _n = golden_section(line, -np.pi, np.pi, tol)
        rows.append((i, float(canonical_angle(t)), j))
    best = min(rows, key=lambda r: (r[2], r[0]))
    th = np.zeros(placement.n_pmu)
    th[best[0] - 1] = best[1]
    return BaselineResult(tuple(rows), best[0], th, best[2], f.evaluations - start)
