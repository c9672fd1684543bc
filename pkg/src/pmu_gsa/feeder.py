"""Radial three-phase feeder model: parsing, validation and topology queries.

Feeder files are JSON documents with keys ``base_kv``, ``base_kva``,
``slack``, ``line_configs``, ``branches`` and ``loads``. Impedances are
given in ohm/mile and stored on the branch in per-unit of the system base.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

PHASES = "abc"
DG_POWER_FACTOR = 0.95
FEET_PER_MILE = 5280.0


class FeederError(ValueError):
    """Raised for malformed or non-radial feeder data."""


def phase_mask(phases: str) -> tuple[bool, bool, bool]:
    phases = phases.lower()
    if not phases or any(p not in PHASES for p in phases) or len(set(phases)) != len(phases):
        raise FeederError(f"invalid phase string {phases!r}")
    return tuple(p in phases for p in PHASES)


def mask_str(mask) -> str:
    return "".join(p for p, on in zip(PHASES, mask) if on)


@dataclass(frozen=True)
class Bus:
    id: int
    phases: tuple[bool, bool, bool]
    load: tuple[complex, complex, complex] = (0j, 0j, 0j)   # kW + j kvar consumed
    dg: tuple[complex, complex, complex] = (0j, 0j, 0j)     # kW + j kvar injected

    @property
    def net_kva(self) -> np.ndarray:
        return np.asarray(self.load) - np.asarray(self.dg)


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    phases: tuple[bool, bool, bool]
    z: np.ndarray = field(repr=False)        # 3x3 complex, per-unit
    z_ohm: np.ndarray = field(repr=False)    # 3x3 complex, ohms for the segment
    length_ft: float = 0.0
    config: str = ""


@dataclass(frozen=True, eq=False)
class FeederModel:
    """Immutable radial feeder.

    ``buses`` are sorted by id; ``branches`` are in BFS order from the slack
    (ties broken by ascending ``to_bus``) with ids ``1..N``.
    """

    slack_bus: int
    base_kv: float
    base_kva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    slack_voltage: np.ndarray = field(repr=False)
    line_configs: dict = field(default_factory=dict, repr=False)
    name: str = ""

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_into(self) -> dict[int, Branch]:
        """Map bus id -> the branch feeding it."""
        return {br.to_bus: br for br in self.branches}

    @cached_property
    def children(self) -> dict[int, list[Branch]]:
        out = {b.id: [] for b in self.buses}
        for br in self.branches:
            out[br.from_bus].append(br)
        return out

    @property
    def z_base(self) -> float:
        return 1000.0 * self.base_kv ** 2 / self.base_kva

    @property
    def phase_kva_base(self) -> float:
        return self.base_kva / 3.0

    def bus(self, k: int) -> Bus:
        try:
            return self.buses[self.bus_index[k]]
        except KeyError:
            raise KeyError(f"unknown bus {k}") from None

    def branch(self, p: int) -> Branch:
        if not 1 <= p <= len(self.branches):
            raise KeyError(f"unknown branch {p}")
        return self.branches[p - 1]

    def load_pu(self) -> np.ndarray:
        """Net consumed complex power per bus and phase, per-unit (n_bus x 3)."""
        return np.array([b.net_kva for b in self.buses]) / self.phase_kva_base

    def mask_array(self) -> np.ndarray:
        return np.array([b.phases for b in self.buses], dtype=bool)

    def with_loads(self, scale: float) -> "FeederModel":
        buses = tuple(Bus(b.id, b.phases, tuple(np.asarray(b.load) * scale), b.dg) for b in self.buses)
        return FeederModel(self.slack_bus, self.base_kv, self.base_kva, buses, self.branches,
                           self.slack_voltage, self.line_configs, self.name)


def path_to_bus(model: FeederModel, k: int) -> list[int]:
    """Branch ids on the slack -> ``k`` path, slack first."""
    model.bus(k)
    path = []
    while k != model.slack_bus:
        br = model.branch_into[k]
        path.append(br.id)
        k = br.from_bus
    return path[::-1]


def _config_matrix(cfg_id, cfg) -> np.ndarray:
    try:
        r = np.asarray(cfg["r"], dtype=float)
        x = np.asarray(cfg["x"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FeederError(f"line config {cfg_id!r}: needs 3x3 'r' and 'x'") from exc
    if r.shape != (3, 3) or x.shape != (3, 3):
        raise FeederError(f"line config {cfg_id!r}: 'r' and 'x' must be 3x3")
    z = r + 1j * x
    if not np.allclose(z, z.T):
        raise FeederError(f"line config {cfg_id!r}: impedance matrix is not symmetric")
    return z


def build_feeder(doc: dict) -> FeederModel:
    """Validate a decoded feeder document and return a :class:`FeederModel`."""
    for key in ("base_kv", "base_kva", "slack", "line_configs", "branches"):
        if key not in doc:
            raise FeederError(f"feeder file missing key {key!r}")
    base_kv = float(doc["base_kv"])
    base_kva = float(doc["base_kva"])
    if base_kv <= 0 or base_kva <= 0:
        raise FeederError("base_kv and base_kva must be positive")
    slack = int(doc["slack"])
    z_base = 1000.0 * base_kv ** 2 / base_kva
    configs = {str(k): _config_matrix(k, v) for k, v in doc["line_configs"].items()}

    raw = []
    for n, item in enumerate(doc["branches"]):
        try:
            a, b = int(item["from"]), int(item["to"])
            length = float(item["length_ft"])
            cfg = str(item["config"])
            mask = phase_mask(item["phases"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FeederError(f"branch #{n + 1}: malformed entry ({exc})") from exc
        if cfg not in configs:
            raise FeederError(f"branch {a}-{b}: unknown line configuration {cfg!r}")
        if length <= 0:
            raise FeederError(f"branch {a}-{b}: length must be positive")
        if a == b:
            raise FeederError(f"branch {a}-{b}: self loop")
        raw.append((a, b, length, cfg, mask))

    # orient the edges away from the slack by BFS, ties broken by ascending to-bus
    adj: dict[int, list[int]] = {}
    for n, (a, b, *_rest) in enumerate(raw):
        adj.setdefault(a, []).append(n)
        adj.setdefault(b, []).append(n)
    adj.setdefault(slack, [])
    depth = {slack: 0}
    used = set()
    order = []
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        nxt = []
        for n in adj[u]:
            if n in used:
                continue
            a, b = raw[n][:2]
            v = b if a == u else a
            if v in depth or any(v == w for w, _ in nxt):
                raise FeederError(f"cycle detected at branch {a}-{b}")
            nxt.append((v, n))
        for v, n in sorted(nxt):
            used.add(n)
            depth[v] = depth[u] + 1
            order.append((u, v, n))
            queue.append(v)
    missing = sorted(set(adj) - set(depth))
    if missing:
        raise FeederError(f"disconnected bus {missing[0]} (not reachable from slack {slack})")
    if len(order) != len(raw):
        bad = next(n for n in range(len(raw)) if n not in used)
        raise FeederError(f"cycle detected at branch {raw[bad][0]}-{raw[bad][1]}")

    bus_mask = {slack: (True, True, True)}
    branches = []
    for pid, (u, v, n) in enumerate(order, start=1):
        _a, _b, length, cfg, mask = raw[n]
        if any(m and not f for m, f in zip(mask, bus_mask[u])):
            raise FeederError(f"branch {u}-{v}: phases {mask_str(mask)} not present at bus {u} "
                              f"({mask_str(bus_mask[u])})")
        sel = np.outer(mask, mask)
        z_ohm = np.where(sel, configs[cfg] * length / FEET_PER_MILE, 0)
        if np.any(np.real(np.diag(z_ohm))[list(mask)] <= 0):
            raise FeederError(f"branch {u}-{v}: non-positive self resistance")
        bus_mask[v] = mask
        branches.append(Branch(pid, u, v, mask, z_ohm / z_base, z_ohm, length, cfg))

    loads = {k: [0j, 0j, 0j] for k in bus_mask}
    dgs = {k: [0j, 0j, 0j] for k in bus_mask}
    for n, item in enumerate(doc.get("loads", [])):
        try:
            k = int(item["bus"])
            ph = str(item["phase"]).lower()
            s = float(item["kw"]) + 1j * float(item.get("kvar", 0.0))
            kind = item.get("kind", "load")
        except (KeyError, TypeError, ValueError) as exc:
            raise FeederError(f"load #{n + 1}: malformed entry ({exc})") from exc
        if k not in bus_mask:
            raise FeederError(f"load #{n + 1}: unknown bus {k}")
        if len(ph) != 1 or ph not in PHASES:
            raise FeederError(f"load at bus {k}: invalid phase {ph!r}")
        i = PHASES.index(ph)
        if not bus_mask[k][i]:
            raise FeederError(f"load at bus {k}: phase {ph} not present ({mask_str(bus_mask[k])})")
        if kind == "load":
            loads[k][i] += s
        elif kind == "dg":
            expected = s.real * math.tan(math.acos(DG_POWER_FACTOR))
            if abs(s.imag - expected) > 1e-3 * max(1.0, abs(expected)):
                raise FeederError(f"dg at bus {k} phase {ph}: kvar {s.imag} violates pf {DG_POWER_FACTOR}")
            dgs[k][i] += s
        else:
            raise FeederError(f"load at bus {k}: unknown kind {kind!r}")

    buses = tuple(Bus(k, bus_mask[k], tuple(loads[k]), tuple(dgs[k])) for k in sorted(bus_mask))
    vmag = float(doc.get("slack_voltage_pu", 1.0))
    slack_v = vmag * np.exp(1j * np.deg2rad([0.0, -120.0, 120.0]))
    return FeederModel(slack, base_kv, base_kva, buses, tuple(branches), slack_v,
                       dict(doc["line_configs"]), str(doc.get("name", "")))


def parse_feeder(text: str) -> FeederModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederError(f"feeder file is not valid JSON: {exc}") from exc
    return build_feeder(doc)


def load_feeder(name_or_path) -> FeederModel:
    """Load a shipped feeder (``"ieee34"``, ``"ieee34_dg"``, ``"ieee123"``) or a file path."""
    path = Path(name_or_path)
    if path.suffix != ".json" and not path.exists():
        text = resources.files("pmu_gsa").joinpath("data", f"{name_or_path}.json").read_text()
    else:
        text = path.read_text()
    return parse_feeder(text)


def to_document(model: FeederModel) -> dict:
    """Serialize back to the feeder file layout (inverse of :func:`build_feeder`)."""
    loads = []
    for b in model.buses:
        for i, p in enumerate(PHASES):
            if b.load[i] != 0:
                loads.append({"bus": b.id, "phase": p, "kw": b.load[i].real, "kvar": b.load[i].imag,
                              "kind": "load"})
            if b.dg[i] != 0:
                loads.append({"bus": b.id, "phase": p, "kw": b.dg[i].real, "kvar": b.dg[i].imag,
                              "kind": "dg"})
    return {
        "name": model.name,
        "base_kv": model.base_kv,
        "base_kva": model.base_kva,
        "slack": model.slack_bus,
        "slack_voltage_pu": float(abs(model.slack_voltage[0])),
        "line_configs": model.line_configs,
        "branches": [{"from": br.from_bus, "to": br.to_bus, "length_ft": br.length_ft,
                      "config": br.config, "phases": mask_str(br.phases)} for br in model.branches],
        "loads": loads,
    }


def dumps_feeder(model: FeederModel) -> str:
    return json.dumps(to_document(model), indent=1)
