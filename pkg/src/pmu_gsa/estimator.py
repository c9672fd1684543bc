"""Branch-current WLS state estimation with a constant Jacobian.

State vector: slack voltage (re, im per phase) followed by the (re, im)
current of every present phase of every branch, branches in BFS order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .feeder import FeederModel, path_to_bus
from .measurement import METER, PMU_CURRENT, PMU_VOLTAGE, MeasurementLayout, MeasurementSet
from .powerflow import backward_sweep, forward_sweep


class ObservabilityError(np.linalg.LinAlgError):
    def __init__(self, columns, state=None):
        self.columns = list(columns)
        names = [state.describe(c) for c in self.columns[:8]] if state is not None else self.columns[:8]
        super().__init__(f"gain matrix is singular (unobservable); deficient state columns: {names}")


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StateLayout:
    """Column bookkeeping for the state vector of one feeder."""

    model: FeederModel = field(repr=False)

    @cached_property
    def branch_col(self) -> np.ndarray:
        """``(n_branch, 3)`` column of the real part of each branch-phase current, -1 if absent."""
        cols = -np.ones((len(self.model.branches), 3), dtype=np.int64)
        c = 6
        for br in self.model.branches:
            for f in range(3):
                if br.phases[f]:
                    cols[br.id - 1, f] = c
                    c += 2
        return cols

    @property
    def n(self) -> int:
        return 6 + 2 * int((self.branch_col >= 0).sum())

    def describe(self, col: int) -> str:
        comp = "re" if col % 2 == 0 else "im"
        if col < 6:
            return f"v_slack[{'abc'[col // 2]}].{comp}"
        p, f = np.argwhere(self.branch_col == col - col % 2)[0]
        return f"i[{p + 1}][{'abc'[f]}].{comp}"

    def unpack(self, x):
        """``(slack_voltage[3], branch_current[n_branch, 3])`` as complex arrays."""
        x = np.asarray(x, dtype=float)
        slack = x[0:6:2] + 1j * x[1:6:2]
        cur = np.zeros(self.branch_col.shape, dtype=complex)
        m = self.branch_col >= 0
        c = self.branch_col[m]
        cur[m] = x[c] + 1j * x[c + 1]
        return slack, cur

    def pack(self, slack_voltage, branch_current) -> np.ndarray:
        x = np.zeros(self.n)
        sv = np.asarray(slack_voltage, dtype=complex)
        x[0:6:2], x[1:6:2] = sv.real, sv.imag
        m = self.branch_col >= 0
        c = self.branch_col[m]
        cur = np.asarray(branch_current, dtype=complex)[m]
        x[c], x[c + 1] = cur.real, cur.imag
        return x

    @cached_property
    def voltage_map(self) -> np.ndarray:
        """Complex ``(3 * n_bus, n)`` matrix mapping x to every bus-phase voltage (forward sweep)."""
        model = self.model
        cols = self.branch_col
        t = np.zeros((3 * len(model.buses), self.n), dtype=complex)
        for bi, bus in enumerate(model.buses):
            path = path_to_bus(model, bus.id)
            for f in range(3):
                if not bus.phases[f]:
                    continue
                row = t[3 * bi + f]
                row[2 * f] = 1.0
                row[2 * f + 1] = 1j
                for p in path:
                    z = model.branches[p - 1].z
                    for g in range(3):
                        c = cols[p - 1, g]
                        if c >= 0:
                            row[c] -= z[f, g]
                            row[c + 1] -= 1j * z[f, g]
        return t

    def bus_voltages(self, x) -> np.ndarray:
        """Bus voltages ``(n_bus, 3)`` for a state vector (or ``(n_bus, 3, B)`` for a batch)."""
        v = self.voltage_map @ np.asarray(x)
        return v.reshape((len(self.model.buses), 3) + v.shape[1:])


def jacobian(state: StateLayout, layout: MeasurementLayout) -> np.ndarray:
    """Constant measurement Jacobian ``H`` with rows in ``layout`` order."""
    model = state.model
    cols = state.branch_col
    h = np.zeros((len(layout), state.n))
    tmap = state.voltage_map
    for r in range(len(layout)):
        kind, comp, f = layout.kind[r], layout.component[r], layout.phase[r]
        if kind == PMU_VOLTAGE:
            row = tmap[layout.busphase[r]]
            h[r] = row.real if comp == 0 else row.imag
        elif kind == PMU_CURRENT:
            c = cols[layout.location[r] - 1, f]
            if c < 0:
                raise ValueError(f"row {r}: branch {layout.location[r]} has no phase {'abc'[f]}")
            h[r, c + comp] = 1.0
        else:
            k = int(layout.location[r])
            h[r, cols[model.branch_into[k].id - 1, f] + comp] = 1.0
            for br in model.children[k]:
                c = cols[br.id - 1, f]
                if c >= 0:
                    h[r, c + comp] = -1.0
    return h


def measurement_function(model: FeederModel, layout: MeasurementLayout, x) -> np.ndarray:
    """Evaluate h(x) by walking the network (KVL/KCL), independent of :func:`jacobian`."""
    state = StateLayout(model)
    slack, cur = state.unpack(x)
    volt = forward_sweep(model, slack, cur)
    out = np.empty(len(layout))
    for r in range(len(layout)):
        f = layout.phase[r]
        if layout.kind[r] == PMU_VOLTAGE:
            val = volt.reshape(-1)[layout.busphase[r]]
        elif layout.kind[r] == PMU_CURRENT:
            val = cur[layout.location[r] - 1, f]
        else:
            k = int(layout.location[r])
            val = cur[model.branch_into[k].id - 1, f] - sum(cur[br.id - 1, f] for br in model.children[k])
        out[r] = val.real if layout.component[r] == 0 else val.imag
    return out


@dataclass(frozen=True, eq=False)
class JacobianBundle:
    """``H``, weights, gain matrix factorization and residual sensitivity for one row set."""

    state: StateLayout
    layout: MeasurementLayout
    H: np.ndarray
    w: np.ndarray
    G: np.ndarray
    factor: tuple = field(repr=False)

    @property
    def W(self) -> np.ndarray:
        return np.diag(self.w)

    @cached_property
    def HtW(self) -> np.ndarray:
        return self.H.T * self.w

    @cached_property
    def K(self) -> np.ndarray:
        """Residual sensitivity ``I - H G^-1 H^T W``."""
        return np.eye(len(self.w)) - self.H @ sla.cho_solve(self.factor, self.HtW)

    @cached_property
    def meter_rows(self) -> np.ndarray:
        return self.layout.meter_re

    @cached_property
    def meter_voltage_map(self) -> np.ndarray:
        return self.state.voltage_map[self.layout.busphase[self.meter_rows]]

    def solve(self, z) -> np.ndarray:
        """Closed-form WLS estimate ``G^-1 H^T W z`` (``z`` may be ``(m,)`` or ``(m, B)``)."""
        return sla.cho_solve(self.factor, self.HtW @ z)

    def residual(self, z) -> np.ndarray:
        return z - self.H @ self.solve(z)

    def objective(self, z) -> np.ndarray:
        r = self.residual(z)
        return np.einsum("i...,i,i...->...", r, self.w, r)


def build_jacobian(model: FeederModel, measurements: MeasurementSet | MeasurementLayout,
                   variances=None, state: StateLayout | None = None, H=None) -> JacobianBundle:
    """Assemble ``H`` and factor ``G = H^T W H`` once; raises :class:`ObservabilityError`."""
    if isinstance(measurements, MeasurementSet):
        layout, variances = measurements.layout, measurements.variances
    else:
        layout = measurements
    if variances is None:
        raise ValueError("variances are required")
    state = state if state is not None else StateLayout(model)
    h = jacobian(state, layout) if H is None else H
    w = 1.0 / np.asarray(variances, dtype=float)
    g = (h.T * w) @ h
    try:
        factor = sla.cho_factor(g, lower=False, check_finite=False)
        if not np.all(np.isfinite(factor[0])):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        _q, rr, piv = sla.qr(h * np.sqrt(w)[:, None], pivoting=True, mode="economic")
        d = np.abs(np.diag(rr))
        rank = int((d > d[0] * 1e-10).sum())
        raise ObservabilityError(sorted(piv[rank:].tolist()), state) from None
    return JacobianBundle(state, layout, h, w, g, factor)


@dataclass
class EstimateResult:
    x: np.ndarray
    bus_voltage: np.ndarray
    residual: np.ndarray
    J: float
    iterations: int = 1
    converged: bool = True


def estimate_linear(measurements: MeasurementSet, bundle: JacobianBundle) -> EstimateResult:
    """One-shot estimate with meter currents as stored (linearized at the slack voltage)."""
    z = measurements.values
    x = bundle.solve(z)
    r = z - bundle.H @ x
    return EstimateResult(x, bundle.state.bus_voltages(x), r, float(r @ (bundle.w * r)))


def objective(measurements: MeasurementSet | np.ndarray, bundle: JacobianBundle):
    """Closed-form weighted residual ``(Kz)^T W (Kz)``."""
    z = measurements.values if isinstance(measurements, MeasurementSet) else measurements
    return bundle.objective(z)


def initial_state(bundle: JacobianBundle, meter_power: np.ndarray) -> np.ndarray:
    """Backward sweep of meter currents taken at the slack voltage."""
    model = bundle.state.model
    rows = bundle.meter_rows
    bp = bundle.layout.busphase[rows]
    inj = np.zeros(3 * len(model.buses), dtype=complex)
    v = model.slack_voltage[bp % 3]
    inj[bp] = np.conj(meter_power / v)
    cur = backward_sweep(model, inj.reshape(-1, 3))
    return bundle.state.pack(model.slack_voltage, cur)


def iterate_batch(bundle: JacobianBundle, Z: np.ndarray, meter_power: np.ndarray,
                  tol: float = 1e-6, max_iter: int = 50):
    """Iterative WLS on a batch of measurement columns ``Z (m, B)`` sharing one bundle.

    Meter rows are re-linearized at the latest forward-sweep voltages each
    iteration. Returns ``(X, Z_final, iterations, converged_mask)``.
    """
    Z = np.array(Z, dtype=float, copy=True)
    if Z.ndim == 1:
        Z = Z[:, None]
    x0 = initial_state(bundle, meter_power)
    X = np.repeat(x0[:, None], Z.shape[1], axis=1)
    rows = bundle.meter_rows
    s = meter_power[:, None]
    active = np.ones(Z.shape[1], dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        dx = bundle.solve(Z[:, active] - bundle.H @ X[:, active])
        X[:, active] += dx
        done = np.max(np.abs(dx), axis=0) < tol
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
        v = bundle.meter_voltage_map @ X[:, active]
        cur = np.conj(s / v)
        sub = Z[:, active]
        sub[rows] = cur.real
        sub[rows + 1] = cur.imag
        Z[:, active] = sub
    return X, Z, it, ~active


def estimate_iterative(model: FeederModel, measurements: MeasurementSet, bundle: JacobianBundle,
                       tol: float = 1e-6, max_iter: int = 50, raise_on_failure: bool = True
                       ) -> EstimateResult:
    """Iterative WLS of the branch-current estimator (backward sweep start, meters re-linearized each pass)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    X, Z, it, ok = iterate_batch(bundle, measurements.values, measurements.meter_power, tol, max_iter)
    x, z = X[:, 0], Z[:, 0]
    if not ok[0] and raise_on_failure:
        raise EstimationError(f"iterative WLS did not converge in {max_iter} iterations")
    r = z - bundle.H @ x
    return EstimateResult(x, bundle.state.bus_voltages(x), r, float(r @ (bundle.w * r)), it, bool(ok[0]))


class Workspace:
    """Per (feeder, placement) cache: state layout, full ``H`` and recently built bundles.

    Bundles are keyed by their row set and the exact variance vector, so a
    factorization is reused across probing and correction calls on the same
    measurement set.
    """

    def __init__(self, model: FeederModel, layout: MeasurementLayout, max_cached: int = 32):
        self.model = model
        self.layout = layout
        self.state = StateLayout(model)
        self.H = jacobian(self.state, layout)
        self._cache: dict = {}
        self._max = max_cached

    def bundle(self, rows, variances) -> JacobianBundle:
        rows = np.asarray(rows)
        var = np.asarray(variances, dtype=float)[rows]
        key = (rows.tobytes(), var.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            sub = self.layout if len(rows) == len(self.layout) else self.layout.subset(rows)
            hit = build_jacobian(self.model, sub, var, self.state, self.H[rows])
            if len(self._cache) >= self._max:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        return hit

    def full_bundle(self, measurements: MeasurementSet) -> JacobianBundle:
        return self.bundle(np.arange(len(self.layout)), measurements.variances)
