"""Measurement placement, layout and synthesis.

The measurement vector is ordered ``z = [z_V; z_I; z_S]``: PMU voltage
phasors (by PMU id, then phase, ``re`` then ``im``), PMU branch currents (by
PMU id, branch id, phase) and smart-meter equivalent injection currents (by
bus id, then phase). Every non-slack bus-phase without a load carries a
zero-injection pseudo-measurement so the branch-current state stays
observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .feeder import PHASES, FeederModel
from .powerflow import TrueState

PMU_VOLTAGE, PMU_CURRENT, METER = 0, 1, 2
KIND_NAMES = ("pmu_voltage", "pmu_current", "meter_equiv_current")

# sigma of zero-injection pseudo-measurements, and the floor applied to every variance
PSEUDO_SIGMA = 3e-5
VARIANCE_FLOOR = PSEUDO_SIGMA ** 2


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class PmuDevice:
    id: int
    bus: int
    branches: tuple[int, ...]


@dataclass(frozen=True)
class Placement:
    pmus: tuple[PmuDevice, ...]
    smart_meter_buses: frozenset[int] | None = None   # None: every load/DG bus

    @property
    def n_pmu(self) -> int:
        return len(self.pmus)

    def pmu(self, i: int) -> PmuDevice:
        return self.pmus[i - 1]


def default_branches(model: FeederModel, k: int) -> tuple[int, ...]:
    if k == model.slack_bus:
        return tuple(br.id for br in model.children[k])
    return (model.branch_into[k].id,)


def make_placement(model: FeederModel, pmu_buses, branches=None, meter_buses=None) -> Placement:
    """Build and validate a placement; PMU 1 must sit at the slack bus.

    ``branches`` optionally maps PMU position (0-based) to branch ids.
    """
    pmu_buses = [int(k) for k in pmu_buses]
    if not pmu_buses or pmu_buses[0] != model.slack_bus:
        raise PlacementError(f"PMU 1 must be located at the slack bus {model.slack_bus}")
    pmus = []
    for n, k in enumerate(pmu_buses):
        if k not in model.bus_index:
            raise PlacementError(f"PMU {n + 1}: unknown bus {k}")
        brs = tuple(branches[n]) if branches and branches[n] is not None else default_branches(model, k)
        if not brs:
            raise PlacementError(f"PMU {n + 1} at bus {k}: must measure at least one branch current")
        for p in brs:
            br = model.branch(int(p))
            if k not in (br.from_bus, br.to_bus):
                raise PlacementError(f"PMU {n + 1}: branch {p} is not incident to bus {k}")
        pmus.append(PmuDevice(n + 1, k, tuple(sorted(int(p) for p in brs))))
    meters = None
    if meter_buses is not None:
        meters = frozenset(int(k) for k in meter_buses)
        for k in meters:
            if k not in model.bus_index:
                raise PlacementError(f"smart meter at unknown bus {k}")
    return Placement(tuple(pmus), meters)


@dataclass(frozen=True)
class NoiseSpec:
    """Maximum measurement errors; each standard deviation is a third of its maximum."""

    pmu_mag_max: float = 0.01
    pmu_angle_max: float = 0.01
    meter_power_max: float = 0.03

    def __post_init__(self):
        if min(self.pmu_mag_max, self.pmu_angle_max, self.meter_power_max) <= 0:
            raise ValueError("noise maxima must be positive")

    @property
    def sigma_mag(self):
        return self.pmu_mag_max / 3

    @property
    def sigma_angle(self):
        return self.pmu_angle_max / 3

    @property
    def sigma_power(self):
        return self.meter_power_max / 3

    def scaled(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(self.pmu_mag_max * factor, self.pmu_angle_max * factor, self.meter_power_max * factor)


@dataclass(frozen=True, eq=False)
class MeasurementLayout:
    """Row metadata for a measurement vector; a pure function of (model, placement)."""

    kind: np.ndarray        # PMU_VOLTAGE / PMU_CURRENT / METER
    pmu: np.ndarray         # PMU id, 0 for meters
    location: np.ndarray    # bus id (voltage, meter) or branch id (current)
    phase: np.ndarray       # 0, 1, 2
    component: np.ndarray   # 0 re, 1 im
    busphase: np.ndarray    # flat bus*3+phase index for voltage/meter rows, -1 otherwise
    rows: np.ndarray = field(default=None)   # row indices into the full layout

    def __len__(self):
        return len(self.kind)

    @cached_property
    def pair_re(self) -> np.ndarray:
        """Rows holding the real part of a PMU phasor (imag part is the next row)."""
        return np.flatnonzero((self.kind != METER) & (self.component == 0))

    @cached_property
    def pair_pmu(self) -> np.ndarray:
        return self.pmu[self.pair_re]

    @cached_property
    def meter_re(self) -> np.ndarray:
        return np.flatnonzero((self.kind == METER) & (self.component == 0))

    def subset(self, rows) -> "MeasurementLayout":
        rows = np.asarray(rows)
        base = self.rows if self.rows is not None else np.arange(len(self))
        return MeasurementLayout(self.kind[rows], self.pmu[rows], self.location[rows], self.phase[rows],
                                 self.component[rows], self.busphase[rows], base[rows])

    def rows_for_pmus(self, pmu_ids) -> np.ndarray:
        """Rows of the given PMUs plus every meter row, in layout order."""
        keep = (self.kind == METER) | np.isin(self.pmu, list(pmu_ids))
        return np.flatnonzero(keep)

    def describe(self, row: int) -> str:
        return (f"{KIND_NAMES[self.kind[row]]} pmu={self.pmu[row]} loc={self.location[row]} "
                f"phase={PHASES[self.phase[row]]} {'re im'.split()[self.component[row]]}")


def meter_records(model: FeederModel, placement: Placement):
    """(bus_index, phase, metered) for every non-slack present bus-phase, sorted by bus id then phase.

    ``metered`` is False for zero-injection pseudo-measurements.
    """
    meters = placement.smart_meter_buses
    out = []
    for bi, bus in enumerate(model.buses):
        if bus.id == model.slack_bus:
            continue
        has_load = any(bus.net_kva != 0)
        for f in range(3):
            if not bus.phases[f]:
                continue
            if has_load:
                if meters is not None and bus.id not in meters:
                    continue
                out.append((bi, f, True))
            else:
                out.append((bi, f, False))
    return out


def build_layout(model: FeederModel, placement: Placement) -> MeasurementLayout:
    rows = []   # kind, pmu, location, phase, component, busphase
    for dev in placement.pmus:
        bi = model.bus_index[dev.bus]
        for f in range(3):
            if model.buses[bi].phases[f]:
                rows += [(PMU_VOLTAGE, dev.id, dev.bus, f, c, bi * 3 + f) for c in (0, 1)]
    for dev in placement.pmus:
        for p in dev.branches:
            for f in range(3):
                if model.branch(p).phases[f]:
                    rows += [(PMU_CURRENT, dev.id, p, f, c, -1) for c in (0, 1)]
    for bi, f, _ in meter_records(model, placement):
        rows += [(METER, 0, model.buses[bi].id, f, c, bi * 3 + f) for c in (0, 1)]
    cols = np.array(rows, dtype=np.int64).T
    return MeasurementLayout(*cols)


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Measurement values and variances plus the raw meter powers.

    Meter rows of ``values`` hold equivalent currents linearized at the slack
    voltage; ``meter_power`` keeps the measured complex powers (one per meter
    re/im pair, in layout order) for later re-linearization.
    """

    layout: MeasurementLayout
    values: np.ndarray
    variances: np.ndarray
    meter_power: np.ndarray      # complex, measured P + jQ per meter pair (p.u.)
    meter_power_var: np.ndarray  # (n_meter, 2): variance of P and Q

    def __len__(self):
        return len(self.values)

    def with_values(self, values) -> "MeasurementSet":
        return replace(self, values=np.asarray(values, dtype=float))

    def subset(self, rows) -> "MeasurementSet":
        rows = np.asarray(rows)
        meter_pairs = np.flatnonzero((self.layout.kind == METER) & (self.layout.component == 0))
        keep = np.isin(meter_pairs, rows)
        return MeasurementSet(self.layout.subset(rows), self.values[rows], self.variances[rows],
                              self.meter_power[keep], self.meter_power_var[keep])

    def phasors(self) -> np.ndarray:
        """Complex PMU phasors, one per PMU (re, im) pair."""
        r = self.layout.pair_re
        return self.values[r] + 1j * self.values[r + 1]


def equivalent_current(p, q, v):
    """Injection current drawn by a load consuming ``p + jq`` at voltage ``v``: ``conj((p + jq) / v)``."""
    v = np.asarray(v, dtype=complex)
    if np.any(np.abs(v) == 0):
        raise ZeroDivisionError("equivalent current needs a non-zero bus voltage")
    return np.conj((np.asarray(p) + 1j * np.asarray(q)) / v)


def equivalent_current_variance(p_var, q_var, v):
    """Variance of each (re, im) equivalent-current component.

    The first-order total variance ``(var_P + var_Q) / |V|^2`` is split evenly
    between the two components. Equal weights on the pair keep the objective
    invariant under a common rotation of every phasor.
    """
    v = np.asarray(v, dtype=complex)
    var = (np.asarray(p_var) + np.asarray(q_var)) / (2 * np.abs(v) ** 2)
    return var, var.copy()


def linearized_equivalents(meter_power, meter_power_var, slack_voltage, phases):
    """Equivalent currents and variances with every bus voltage fixed at the slack voltage of its phase.

    Returns ``(current, var_re, var_im)`` for each meter record.
    """
    v = np.asarray(slack_voltage)[np.asarray(phases)]
    cur = equivalent_current(meter_power.real, meter_power.imag, v)
    var_re, var_im = equivalent_current_variance(meter_power_var[:, 0], meter_power_var[:, 1], v)
    return cur, np.maximum(var_re, VARIANCE_FLOOR), np.maximum(var_im, VARIANCE_FLOOR)


def _polar_variances(ph: np.ndarray, sigma_mag_rel: float, sigma_ang: float):
    # magnitude and angle errors folded into one circular variance per phasor
    var = np.abs(ph) ** 2 * (sigma_mag_rel ** 2 + sigma_ang ** 2) / 2
    var = np.maximum(var, VARIANCE_FLOOR)
    return var, var.copy()


def true_phasors(model: FeederModel, layout: MeasurementLayout, truth: TrueState) -> np.ndarray:
    """True complex value of every PMU (re, im) pair."""
    r = layout.pair_re
    out = np.empty(len(r), dtype=complex)
    volt = layout.kind[r] == PMU_VOLTAGE
    flat_v = truth.bus_voltage.reshape(-1)
    out[volt] = flat_v[layout.busphase[r[volt]]]
    cur = ~volt
    out[cur] = truth.branch_current[layout.location[r[cur]] - 1, layout.phase[r[cur]]]
    return out


def synthesize(model: FeederModel, truth: TrueState, placement: Placement, noise: NoiseSpec,
               rng_seed=None, add_noise: bool = True, layout: MeasurementLayout | None = None
               ) -> MeasurementSet:
    """Noisy PMU and smart-meter measurements of ``truth``.

    PMU phasors are perturbed in polar form (relative magnitude error,
    absolute angle error); meter powers get relative Gaussian errors. With
    ``add_noise=False`` the values are exact but the weights are unchanged.
    """
    layout = layout if layout is not None else build_layout(model, placement)
    rng = np.random.default_rng(rng_seed)
    ph = true_phasors(model, layout, truth)
    records = [(r, layout.busphase[r]) for r in layout.meter_re]
    bp = np.array([b for _, b in records], dtype=np.int64)
    s_true = (model.load_pu().reshape(-1))[bp] if len(bp) else np.zeros(0, complex)
    metered = s_true != 0

    if add_noise:
        mag = np.abs(ph) * (1 + noise.sigma_mag * rng.standard_normal(len(ph)))
        ang = np.angle(ph) + noise.sigma_angle * rng.standard_normal(len(ph))
        ph_meas = mag * np.exp(1j * ang)
        e = rng.standard_normal((len(s_true), 2))
        s_meas = (s_true.real * (1 + noise.sigma_power * e[:, 0])
                  + 1j * s_true.imag * (1 + noise.sigma_power * e[:, 1]))
    else:
        ph_meas = ph.copy()
        s_meas = s_true.copy()

    values = np.empty(len(layout))
    variances = np.empty(len(layout))
    r = layout.pair_re
    values[r], values[r + 1] = ph_meas.real, ph_meas.imag
    variances[r], variances[r + 1] = _polar_variances(ph_meas, noise.sigma_mag, noise.sigma_angle)

    p_var = np.where(metered, (noise.sigma_power * s_meas.real) ** 2, VARIANCE_FLOOR)
    q_var = np.where(metered, (noise.sigma_power * s_meas.imag) ** 2, VARIANCE_FLOOR)
    power_var = np.column_stack([p_var, q_var])
    m = layout.meter_re
    cur, var_re, var_im = linearized_equivalents(s_meas, power_var, model.slack_voltage, layout.phase[m])
    values[m], values[m + 1] = cur.real, cur.imag
    variances[m], variances[m + 1] = var_re, var_im
    return MeasurementSet(layout, values, variances, s_meas, power_var)
