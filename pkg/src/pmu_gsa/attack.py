"""GPS-spoofing phase-shift model and its inverse correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measurement import MeasurementSet


def canonical_angle(theta):
    """Wrap to ``(-pi, pi]``."""
    t = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(t == -np.pi, np.pi, t)[()]


def angle_distance(a, b):
    d = np.abs(canonical_angle(np.asarray(a) - np.asarray(b)))
    return np.minimum(d, 2 * np.pi - d)[()]


def rotation_block(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class AttackProfile:
    """Spoof angle per PMU (rad); index 0 is the secure substation PMU and is always 0."""

    theta: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.theta)
        if not th:
            raise ValueError("empty attack profile")
        object.__setattr__(self, "theta", (0.0,) + th[1:])

    @classmethod
    def from_psi(cls, psi) -> "AttackProfile":
        """Angles given in units of pi, e.g. ``[0, 0, 0.5, 0, 0, 0]``."""
        return cls(tuple(np.pi * float(p) for p in psi))

    @classmethod
    def zeros(cls, n_pmu: int) -> "AttackProfile":
        return cls((0.0,) * n_pmu)

    @property
    def n_pmu(self):
        return len(self.theta)

    def __getitem__(self, pmu_id: int) -> float:
        return self.theta[pmu_id - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.theta)

    def canonical(self) -> np.ndarray:
        return canonical_angle(self.as_array())

    def attacked(self, tol: float = 1e-9) -> np.ndarray:
        """Binary indicator ``a_i`` per PMU."""
        return np.abs(self.canonical()) > tol

    def __add__(self, other: "AttackProfile") -> "AttackProfile":
        return AttackProfile(tuple(self.as_array() + other.as_array()))


def rotate_pairs(z: MeasurementSet, angles_per_pmu) -> MeasurementSet:
    """Rotate every PMU (re, im) pair by the angle of its PMU (``angles_per_pmu[pmu_id - 1]``)."""
    lay = z.layout
    ang = np.asarray(angles_per_pmu, dtype=float)
    if lay.pair_pmu.size and lay.pair_pmu.max() > len(ang):
        raise KeyError(f"attack profile covers {len(ang)} PMUs, measurements reference PMU {lay.pair_pmu.max()}")
    t = ang[lay.pair_pmu - 1]
    r = lay.pair_re
    re, im = z.values[r], z.values[r + 1]
    c, s = np.cos(t), np.sin(t)
    out = z.values.copy()
    out[r] = c * re - s * im
    out[r + 1] = s * re + c * im
    return z.with_values(out)


def apply_gsa(z: MeasurementSet, profile: AttackProfile) -> MeasurementSet:
    """Spoofed measurements: every phasor of PMU ``i`` rotated by ``theta_i``; meters untouched."""
    return rotate_pairs(z, profile.as_array())


def correct_measurements(z_spf: MeasurementSet, theta_hat: AttackProfile) -> MeasurementSet:
    """Undo estimated spoof angles (rotation by ``-theta_hat_i``)."""
    return rotate_pairs(z_spf, -theta_hat.as_array())
