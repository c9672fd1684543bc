"""Probing-based location of spoofed PMUs.

For each PMU ``i`` the test dataset keeps the substation PMU, PMU ``i`` and
every smart meter. Its closed-form WLS objective is evaluated on the data as
received and with PMU ``i``'s phasors rotated by ``+dtheta`` and
``-dtheta``; the two ratios against the unprobed objective fix the interval
the spoof angle lies in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .attack import canonical_angle
from .estimator import JacobianBundle, Workspace, iterate_batch
from .feeder import FeederModel
from .measurement import MeasurementSet, Placement, build_layout

PHASE_ERROR_MAX = 0.01          # alpha: largest PMU angle error, rad
DEFAULT_DELTA_THETA = 0.2
LOW_CONFIDENCE = 0.01


class Category(str, Enum):
    NO_ATTACK = "NoAttack"
    EXACTLY_PI = "ExactlyPi"
    POSITIVE = "PositiveInterval"
    NEGATIVE = "NegativeInterval"

    @property
    def attacked(self) -> bool:
        return self is not Category.NO_ATTACK


def true_category(theta: float, tol: float = 1e-9) -> Category:
    t = float(canonical_angle(theta))
    if abs(t) <= tol:
        return Category.NO_ATTACK
    if abs(abs(t) - np.pi) <= tol:
        return Category.EXACTLY_PI
    return Category.POSITIVE if t > 0 else Category.NEGATIVE


def classify(ratio_plus: float, ratio_minus: float) -> Category:
    up_plus, up_minus = ratio_plus > 1, ratio_minus > 1
    if up_plus and up_minus:
        return Category.NO_ATTACK
    if not up_plus and not up_minus:
        return Category.EXACTLY_PI
    return Category.POSITIVE if up_plus else Category.NEGATIVE


@dataclass(frozen=True)
class TestDataset:
    pmu: int
    rows: np.ndarray = field(repr=False)        # rows of the full measurement vector
    bundle: JacobianBundle = field(repr=False)
    pairs: np.ndarray = field(repr=False)       # local rows of PMU i's (re) components

    __test__ = False

    def rotate(self, z_subset: np.ndarray, angles) -> np.ndarray:
        """Columns of ``z_subset`` with PMU i's phasors rotated by each angle: ``(m_i, len(angles))``."""
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        Z = np.repeat(np.asarray(z_subset, dtype=float)[:, None], len(angles), axis=1)
        re, im = Z[self.pairs], Z[self.pairs + 1]
        c, s = np.cos(angles), np.sin(angles)
        Z[self.pairs] = re * c - im * s
        Z[self.pairs + 1] = re * s + im * c
        return Z

    def objective(self, z_subset, angles) -> np.ndarray:
        return self.bundle.objective(self.rotate(z_subset, angles))


@dataclass(frozen=True)
class ProbeVerdict:
    pmu: int
    J: float
    J_plus: float
    J_minus: float
    category: Category

    @property
    def ratio_plus(self) -> float:
        return self.J_plus / self.J

    @property
    def ratio_minus(self) -> float:
        return self.J_minus / self.J

    @property
    def attacked(self) -> bool:
        return self.category.attacked

    @property
    def low_confidence(self) -> bool:
        return min(abs(1 - self.ratio_plus), abs(1 - self.ratio_minus)) < LOW_CONFIDENCE


@dataclass(frozen=True)
class IdentificationResult:
    verdicts: tuple[ProbeVerdict, ...]

    def _set(self, cat):
        return frozenset(v.pmu for v in self.verdicts if v.category is cat)

    @property
    def P1(self) -> frozenset:
        return self._set(Category.EXACTLY_PI)

    @property
    def P2(self) -> frozenset:
        return self._set(Category.POSITIVE)

    @property
    def P3(self) -> frozenset:
        return self._set(Category.NEGATIVE)

    def category(self, pmu: int) -> Category:
        return next(v.category for v in self.verdicts if v.pmu == pmu)

    def categories(self) -> dict[int, Category]:
        return {v.pmu: v.category for v in self.verdicts}


class Identifier:
    """Identification engine for one feeder and placement.

    ``linearization`` selects the voltages at which meter powers become
    equivalent currents for the closed-form objective: ``"slack"`` uses the
    substation voltage for every bus, ``"secure"`` uses the iterative
    estimate from the substation PMU and the smart meters alone. Neither
    depends on any PMU that might be spoofed.
    """

    def __init__(self, model: FeederModel, placement: Placement, workspace: Workspace | None = None,
                 linearization: str = "slack"):
        if linearization not in ("slack", "secure"):
            raise ValueError(f"unknown linearization {linearization!r}")
        self.model = model
        self.placement = placement
        self.ws = workspace if workspace is not None else Workspace(model, build_layout(model, placement))
        self.linearization = linearization

    def linearized_values(self, z: MeasurementSet) -> np.ndarray:
        if self.linearization == "slack":
            return z.values
        rows = self.ws.layout.rows_for_pmus([1])
        bundle = self.ws.bundle(rows, z.variances)
        sub = z.subset(rows)
        X, _Z, _it, _ok = iterate_batch(bundle, sub.values, sub.meter_power)
        v = self.ws.state.voltage_map[self.ws.layout.busphase[self.ws.layout.meter_re]] @ X[:, 0]
        cur = np.conj(z.meter_power / v)
        out = z.values.copy()
        m = self.ws.layout.meter_re
        out[m], out[m + 1] = cur.real, cur.imag
        return out

    def test_dataset(self, z: MeasurementSet, i: int) -> TestDataset:
        if not 2 <= i <= self.placement.n_pmu:
            raise ValueError(f"PMU {i}: test datasets exist for PMUs 2..{self.placement.n_pmu}")
        rows = self.ws.layout.rows_for_pmus([1, i])
        bundle = self.ws.bundle(rows, z.variances)
        lay = bundle.layout
        pairs = lay.pair_re[lay.pair_pmu == i]
        return TestDataset(i, rows, bundle, pairs)

    def probe(self, ds: TestDataset, z_subset, delta_theta: float = DEFAULT_DELTA_THETA,
              alpha: float = PHASE_ERROR_MAX) -> ProbeVerdict:
        return probe(ds, z_subset, delta_theta, alpha)

    def identify(self, z_spoofed: MeasurementSet, delta_theta: float = DEFAULT_DELTA_THETA,
                 alpha: float = PHASE_ERROR_MAX) -> IdentificationResult:
        check_delta_theta(delta_theta, alpha)
        values = self.linearized_values(z_spoofed)
        verdicts = []
        for i in range(2, self.placement.n_pmu + 1):
            ds = self.test_dataset(z_spoofed, i)
            verdicts.append(probe(ds, values[ds.rows], delta_theta, alpha))
        return IdentificationResult(tuple(verdicts))


def check_delta_theta(delta_theta: float, alpha: float = PHASE_ERROR_MAX):
    if not 2 * alpha < delta_theta < 2 * np.pi - 2 * alpha:
        raise ValueError(f"probing angle {delta_theta} must lie in (2*alpha, 2*pi - 2*alpha) "
                         f"with alpha = {alpha}")


def probe(ds: TestDataset, z_subset, delta_theta: float = DEFAULT_DELTA_THETA,
          alpha: float = PHASE_ERROR_MAX) -> ProbeVerdict:
    check_delta_theta(delta_theta, alpha)
    j0, jp, jm = ds.objective(z_subset, [0.0, delta_theta, -delta_theta])
    return ProbeVerdict(ds.pmu, float(j0), float(jp), float(jm), classify(jp / j0, jm / j0))


def build_test_dataset(model: FeederModel, placement: Placement, z: MeasurementSet, i: int,
                       linearization: str = "slack") -> tuple[TestDataset, np.ndarray]:
    """Test dataset for PMU ``i`` and its linearized measurement subset."""
    ident = Identifier(model, placement, linearization=linearization)
    ds = ident.test_dataset(z, i)
    return ds, ident.linearized_values(z)[ds.rows]


def identify_all(model: FeederModel, placement: Placement, z_spoofed: MeasurementSet,
                 delta_theta: float = DEFAULT_DELTA_THETA, linearization: str = "slack",
                 identifier: Identifier | None = None) -> IdentificationResult:
    ident = identifier if identifier is not None else Identifier(model, placement, linearization=linearization)
    return ident.identify(z_spoofed, delta_theta)


def sweep_objective(ds: TestDataset, z_subset, grid) -> np.ndarray:
    """``(len(grid), 2)`` array of (angle, J) with PMU i's phasors rotated by each grid angle."""
    grid = np.asarray(grid, dtype=float)
    return np.column_stack([grid, ds.objective(z_subset, grid)])


def sign_changes(values) -> int:
    d = np.sign(np.diff(np.asarray(values, dtype=float)))
    d = d[d != 0]
    return int(np.count_nonzero(d[1:] != d[:-1]))


def is_unimodal(curve: np.ndarray, cyclic: bool = True) -> bool:
    """One descent then one ascent. ``cyclic`` treats the grid as a circle and
    starts the scan at the curve maximum (duplicate end point dropped)."""
    j = np.asarray(curve)[:, 1] if np.ndim(curve) == 2 else np.asarray(curve)
    if cyclic:
        ang = np.asarray(curve)[:, 0] if np.ndim(curve) == 2 else None
        if ang is not None and np.isclose(ang[-1] - ang[0], 2 * np.pi):
            j = j[:-1]
        k = int(np.argmax(j))
        j = np.concatenate([j[k:], j[:k], j[k:k + 1]])
    return sign_changes(j) == 1
