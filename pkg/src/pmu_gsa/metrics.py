"""Monte Carlo harness and scoring.

PMD/PFD count missed and false attack flags over PMUs 2..N, ``epsilon`` is
the mean wrap-aware angle error over attacked PMUs, and the voltage RMSEs
are taken per bus and phase across trials.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import angle_distance, apply_gsa, canonical_angle, correct_measurements
from .config import ScenarioConfig
from .correct import CorrectionObjective, pso_correct
from .estimator import Workspace, estimate_iterative
from .identify import Category, Identifier
from .measurement import build_layout, synthesize
from .powerflow import solve


@dataclass
class TrialRecord:
    trial: int
    psi: np.ndarray                     # true angle per PMU, rad
    categories: dict = field(default_factory=dict)   # pmu id -> Category, PMUs 2..N
    theta_hat: np.ndarray | None = None
    v_true: np.ndarray | None = None    # (n_bus, 3) complex
    v_est: np.ndarray | None = None     # after correction
    v_spoofed: np.ndarray | None = None  # estimated from the spoofed data as received
    J_corr: float = float("nan")
    evaluations: int = 0
    error: str | None = None

    @property
    def attacked(self) -> np.ndarray:
        """``a_i`` for PMUs 2..N."""
        return np.abs(canonical_angle(np.asarray(self.psi)[1:])) > 1e-9

    @property
    def flagged(self) -> np.ndarray:
        n = len(self.psi)
        return np.array([self.categories[i] is not Category.NO_ATTACK for i in range(2, n + 1)])

    @property
    def alpha(self) -> np.ndarray:
        """Missed detections per PMU 2..N."""
        return (self.attacked & ~self.flagged).astype(int)

    @property
    def beta(self) -> np.ndarray:
        """False detections per PMU 2..N."""
        return (~self.attacked & self.flagged).astype(int)


@dataclass
class RmseResult:
    delta_v: np.ndarray        # (n_bus, 3) relative magnitude RMSE, nan for absent phases
    delta_theta: np.ndarray    # (n_bus, 3) angle RMSE, rad

    @property
    def max_per_phase(self):
        return _per_phase(np.nanmax, self.delta_v), _per_phase(np.nanmax, self.delta_theta)

    @property
    def mean_per_phase(self):
        return _per_phase(np.nanmean, self.delta_v), _per_phase(np.nanmean, self.delta_theta)


def _per_phase(fn, a):
    # a phase absent from every bus stays nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(a, axis=0)


@dataclass
class AggregateMetrics:
    pmd: float | None
    pfd: float | None
    epsilon: float | None
    n_trials: int
    n_failed: int
    rmse_corrected: RmseResult | None = field(default=None, repr=False)
    rmse_spoofed: RmseResult | None = field(default=None, repr=False)

    def summary(self) -> dict:
        def phase_stats(r):
            if r is None:
                return None
            (vmax, tmax), (vmean, tmean) = r.max_per_phase, r.mean_per_phase
            def clean(a):
                return [None if np.isnan(v) else float(v) for v in a]
            return {"delta_v_max": clean(vmax), "delta_theta_max": clean(tmax),
                    "delta_v_mean": clean(vmean), "delta_theta_mean": clean(tmean)}
        return {"PMD": self.pmd, "PFD": self.pfd, "epsilon": self.epsilon, "trials": self.n_trials,
                "failed": self.n_failed, "rmse_corrected": phase_stats(self.rmse_corrected),
                "rmse_spoofed": phase_stats(self.rmse_spoofed)}

    def __eq__(self, other):
        return isinstance(other, AggregateMetrics) and self.summary() == other.summary()


def _ok(records):
    return [r for r in records if r.error is None]


def pmd_pfd(records) -> tuple[float | None, float | None]:
    """Missed- and false-detection probabilities; ``None`` when no PMU falls in the denominator."""
    recs = sorted(_ok(records), key=lambda r: r.trial)
    missed = sum(int((r.attacked * r.alpha).sum()) for r in recs)
    n_att = sum(int(r.attacked.sum()) for r in recs)
    false = sum(int((~r.attacked * r.beta).sum()) for r in recs)
    n_clean = sum(int((~r.attacked).sum()) for r in recs)
    return (missed / n_att if n_att else None), (false / n_clean if n_clean else None)


def estimation_error(records) -> float | None:
    """Mean wrap-aware ``|theta_true - theta_hat|`` over attacked PMUs; ``None`` if none are attacked."""
    total, count = 0.0, 0
    for r in sorted(_ok(records), key=lambda r: r.trial):
        if r.theta_hat is None:
            continue
        a = r.attacked
        d = angle_distance(np.asarray(r.psi)[1:], np.asarray(r.theta_hat)[1:])
        total += float(np.sum(d[a]))
        count += int(a.sum())
    return total / count if count else None


def rmse(records, which: str = "v_est") -> RmseResult | None:
    """Per bus/phase relative magnitude RMSE and angle RMSE of ``which`` against the truth."""
    recs = [r for r in sorted(_ok(records), key=lambda r: r.trial) if getattr(r, which) is not None]
    if not recs:
        return None
    vt = np.stack([r.v_true for r in recs])
    ve = np.stack([getattr(r, which) for r in recs])
    present = np.abs(vt[0]) > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = (np.abs(ve) - np.abs(vt)) / np.abs(vt)
        dv = np.sqrt(np.mean(rel ** 2, axis=0))
        dth = np.sqrt(np.mean(angle_distance(np.angle(ve), np.angle(vt)) ** 2, axis=0))
    return RmseResult(np.where(present, dv, np.nan), np.where(present, dth, np.nan))


def aggregate(records) -> AggregateMetrics:
    pmd, pfd = pmd_pfd(records)
    return AggregateMetrics(pmd, pfd, estimation_error(records), len(_ok(records)),
                            sum(r.error is not None for r in records),
                            rmse(records, "v_est"), rmse(records, "v_spoofed"))


class TrialRunner:
    """Everything one scenario needs that does not change between trials."""

    def __init__(self, cfg: ScenarioConfig, correct: bool = True):
        self.cfg = cfg
        self.correct = correct
        self.model = cfg.model()
        self.placement = cfg.placement(self.model)
        self.truth = solve(self.model)
        self.ws = Workspace(self.model, build_layout(self.model, self.placement))
        self.ident = Identifier(self.model, self.placement, self.ws, cfg.linearization)
        self.profile = cfg.profile()

    def run(self, j: int, seed: int) -> TrialRecord:
        rec = TrialRecord(j, self.profile.as_array(), v_true=self.truth.bus_voltage)
        try:
            z = synthesize(self.model, self.truth, self.placement, self.cfg.noise, rng_seed=seed + j,
                           layout=self.ws.layout)
            z_spf = apply_gsa(z, self.profile)
            res = self.ident.identify(z_spf, self.cfg.delta_theta)
            rec.categories = res.categories()
            if not self.correct:
                return rec
            params = replace(self.cfg.pso, seed=seed + j)
            obj = CorrectionObjective(self.model, self.placement, z_spf, self.ws)
            cr = pso_correct(z_spf, res, params, self.model, self.placement, objective=obj)
            rec.theta_hat, rec.J_corr, rec.evaluations = cr.theta_hat.as_array(), cr.J_corr, cr.objective_evaluations
            bundle = self.ws.full_bundle(z_spf)
            z_corr = correct_measurements(z_spf, cr.theta_hat)
            rec.v_est = estimate_iterative(self.model, z_corr, bundle).bus_voltage
            rec.v_spoofed = estimate_iterative(self.model, z_spf, bundle, raise_on_failure=False).bus_voltage
        except Exception as exc:            # recorded per trial, never fatal to the run
            rec.error = f"{type(exc).__name__}: {exc}"
        return rec


_RUNNERS: dict = {}


def _worker(args):
    cfg, correct, j, seed = args
    key = (repr(cfg), correct)
    if key not in _RUNNERS:
        _RUNNERS.clear()
        _RUNNERS[key] = TrialRunner(cfg, correct)
    return _RUNNERS[key].run(j, seed)


def run_montecarlo(cfg: ScenarioConfig, n_trials: int | None = None, seed: int | None = None,
                   jobs: int | None = 1, correct: bool = True) -> tuple[list[TrialRecord], AggregateMetrics]:
    """Run ``n_trials`` seeded trials (trial ``j`` uses seed ``seed + j``).

    ``correct=False`` stops each trial after identification. ``jobs=None``
    uses every available CPU.
    """
    n = cfg.trials if n_trials is None else n_trials
    s = cfg.seed if seed is None else seed
    if n < 1:
        raise ValueError("at least one trial is required")
    jobs = (os.cpu_count() or 1) if jobs is None else jobs
    if jobs <= 1:
        runner = TrialRunner(cfg, correct)
        records = [runner.run(j, s) for j in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_worker, [(cfg, correct, j, s) for j in range(n)], chunksize=max(1, n // (4 * jobs))))
    records.sort(key=lambda r: r.trial)
    return records, aggregate(records)
