"""Scenario configuration files (JSON).

Example::

    {
      "feeder": "ieee34",
      "placement": {"pmus": [800, 816, 820, 836, 854, 858], "meters": "all"},
      "noise": {"pmu_mag_max": 0.01, "pmu_angle_max": 0.01, "meter_power_max": 0.03},
      "psi": [0, 0, 0.5, 0, 0, 0],
      "delta_theta": 0.2,
      "pso": {"swarm_size": 50, "max_iters": 200},
      "trials": 100,
      "seed": 7,
      "output_dir": "results"
    }

``psi`` is in units of pi. A PMU entry may be a bus id or
``{"bus": 800, "branches": [1]}``. ``feeder`` is a shipped feeder name or a
path relative to the config file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .attack import AttackProfile
from .correct import PsoParams
from .feeder import FeederModel, load_feeder
from .identify import DEFAULT_DELTA_THETA, PHASE_ERROR_MAX
from .measurement import NoiseSpec, Placement, make_placement

KNOWN_KEYS = {"feeder", "placement", "noise", "psi", "delta_theta", "pso", "trials", "seed",
              "output_dir", "linearization", "name"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    feeder: str
    pmu_buses: tuple[int, ...]
    psi: tuple[float, ...]
    pmu_branches: tuple = None
    meter_buses: tuple[int, ...] | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    delta_theta: float = DEFAULT_DELTA_THETA
    pso: PsoParams = field(default_factory=PsoParams)
    trials: int = 100
    seed: int = 0
    output_dir: str = "results"
    linearization: str = "slack"
    name: str = "scenario"

    def model(self) -> FeederModel:
        return load_feeder(self.feeder)

    def placement(self, model: FeederModel) -> Placement:
        return make_placement(model, self.pmu_buses, self.pmu_branches, self.meter_buses)

    def profile(self) -> AttackProfile:
        return AttackProfile.from_psi(self.psi)

    def replace(self, **changes) -> "ScenarioConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ScenarioConfig(**d)

    def to_document(self) -> dict:
        pmus = []
        for n, k in enumerate(self.pmu_buses):
            brs = self.pmu_branches[n] if self.pmu_branches else None
            pmus.append(k if brs is None else {"bus": k, "branches": list(brs)})
        return {
            "name": self.name,
            "feeder": self.feeder,
            "placement": {"pmus": pmus,
                          "meters": "all" if self.meter_buses is None else list(self.meter_buses)},
            "noise": asdict(self.noise),
            "psi": list(self.psi),
            "delta_theta": self.delta_theta,
            "pso": asdict(self.pso),
            "trials": self.trials,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "linearization": self.linearization,
        }


def _number(doc, key, kind=float, minimum=None, strict=False):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
        raise ConfigError(f"{key}: expected {'an integer' if kind is int else 'a number'}, got {v!r}")
    if minimum is not None and (v <= minimum if strict else v < minimum):
        raise ConfigError(f"{key}: must be {'>' if strict else '>='} {minimum}, got {v}")
    return kind(v)


def parse_config(doc: dict, base_dir: Path | None = None) -> ScenarioConfig:
    """Validate a config document; errors name the offending field."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    for key in ("feeder", "placement", "psi"):
        if key not in doc:
            raise ConfigError(f"{key}: required field missing")
    feeder = doc["feeder"]
    if not isinstance(feeder, str) or not feeder:
        raise ConfigError("feeder: expected a feeder name or path")
    if base_dir is not None and (feeder.endswith(".json") or "/" in feeder):
        p = Path(feeder)
        feeder = str(p if p.is_absolute() else base_dir / p)

    pl = doc["placement"]
    if not isinstance(pl, dict) or "pmus" not in pl:
        raise ConfigError("placement.pmus: required field missing")
    if not isinstance(pl["pmus"], list) or not pl["pmus"]:
        raise ConfigError("placement.pmus: expected a non-empty list")
    buses, branches = [], []
    for n, entry in enumerate(pl["pmus"]):
        if isinstance(entry, dict):
            if "bus" not in entry:
                raise ConfigError(f"placement.pmus[{n}].bus: required field missing")
            buses.append(entry["bus"])
            branches.append(tuple(entry["branches"]) if "branches" in entry else None)
        else:
            buses.append(entry)
            branches.append(None)
    for n, k in enumerate(buses):
        if isinstance(k, bool) or not isinstance(k, int):
            raise ConfigError(f"placement.pmus[{n}]: bus id must be an integer, got {k!r}")
    meters = pl.get("meters", "all")
    if meters != "all" and not (isinstance(meters, list) and all(isinstance(k, int) for k in meters)):
        raise ConfigError('placement.meters: expected "all" or a list of bus ids')

    psi = doc["psi"]
    if not isinstance(psi, list) or not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in psi):
        raise ConfigError("psi: expected a list of numbers (units of pi)")
    if len(psi) != len(buses):
        raise ConfigError(f"psi: length {len(psi)} does not match the {len(buses)} PMUs in placement.pmus")
    if psi[0] != 0:
        raise ConfigError("psi[0]: the substation PMU is assumed secure, its angle must be 0")

    kw = {}
    if "delta_theta" in doc:
        kw["delta_theta"] = _number(doc, "delta_theta", minimum=2 * PHASE_ERROR_MAX, strict=True)
    if "trials" in doc:
        kw["trials"] = _number(doc, "trials", int, minimum=1)
    if "seed" in doc:
        kw["seed"] = _number(doc, "seed", int, minimum=0)
    for key in ("output_dir", "name"):
        if key in doc:
            if not isinstance(doc[key], str):
                raise ConfigError(f"{key}: expected a string")
            kw[key] = doc[key]
    if "linearization" in doc:
        if doc["linearization"] not in ("slack", "secure"):
            raise ConfigError('linearization: expected "slack" or "secure"')
        kw["linearization"] = doc["linearization"]
    for key, cls in (("noise", NoiseSpec), ("pso", PsoParams)):
        if key in doc:
            sub = doc[key]
            names = {f.name for f in fields(cls)}
            if not isinstance(sub, dict) or set(sub) - names:
                bad = sorted(set(sub) - names) if isinstance(sub, dict) else sub
                raise ConfigError(f"{key}: unknown or malformed entries {bad}")
            try:
                kw[key] = cls(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return ScenarioConfig(
        feeder=feeder,
        pmu_buses=tuple(buses),
        pmu_branches=tuple(branches) if any(b is not None for b in branches) else None,
        meter_buses=None if meters == "all" else tuple(meters),
        psi=tuple(float(p) for p in psi),
        **kw,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, path.parent)


def check_config(cfg: ScenarioConfig):
    """Load the feeder and placement to catch errors that need the network."""
    model = cfg.model()
    placement = cfg.placement(model)
    return model, placement
