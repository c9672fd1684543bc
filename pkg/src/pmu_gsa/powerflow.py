"""Backward/forward sweep power flow for radial three-phase feeders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import FeederModel


class PowerFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrueState:
    """Ground-truth operating point.

    ``bus_voltage`` is ``(n_bus, 3)`` complex p.u. indexed like
    ``model.buses``; ``branch_current`` is ``(n_branch, 3)`` indexed by
    branch id - 1. Absent phases hold zero.
    """

    bus_voltage: np.ndarray
    branch_current: np.ndarray
    iterations: int = 0
    mismatch: float = 0.0

    def voltage(self, model: FeederModel, k: int) -> np.ndarray:
        return self.bus_voltage[model.bus_index[k]]


def _backward(model: FeederModel, injection: np.ndarray) -> np.ndarray:
    idx = model.bus_index
    current = np.zeros((len(model.branches), 3), dtype=complex)
    for br in reversed(model.branches):
        current[br.id - 1] += injection[idx[br.to_bus]]
        if br.from_bus != model.slack_bus:
            current[model.branch_into[br.from_bus].id - 1] += current[br.id - 1]
    return current


def _forward(model: FeederModel, slack_voltage: np.ndarray, current: np.ndarray) -> np.ndarray:
    idx = model.bus_index
    v = np.zeros((len(model.buses), 3), dtype=complex)
    v[idx[model.slack_bus]] = slack_voltage
    for br in model.branches:
        m = np.asarray(br.phases)
        v[idx[br.to_bus]] = np.where(m, v[idx[br.from_bus]] - br.z @ current[br.id - 1], 0)
    return v


def forward_sweep(model: FeederModel, slack_voltage, current) -> np.ndarray:
    """Bus voltages from a slack voltage and branch currents (KVL walk)."""
    return _forward(model, np.asarray(slack_voltage, dtype=complex), np.asarray(current, dtype=complex))


def backward_sweep(model: FeederModel, injection) -> np.ndarray:
    """Branch currents from per-bus injection currents drawn at each bus (KCL walk)."""
    return _backward(model, np.asarray(injection, dtype=complex))


def solve(model: FeederModel, tol: float = 1e-8, max_iter: int = 100) -> TrueState:
    """Constant-PQ backward/forward sweep.

    DGs enter as negative loads. Stops when the largest bus-voltage change
    between sweeps drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mask = model.mask_array()
    s = model.load_pu()
    v = np.where(mask, np.broadcast_to(model.slack_voltage, mask.shape), 0)
    change = np.inf
    for it in range(1, max_iter + 1):
        inj = np.zeros_like(v)
        np.divide(s, v, out=inj, where=mask)
        current = _backward(model, np.conj(inj))
        v_new = _forward(model, model.slack_voltage, current)
        if np.any(np.abs(v_new[mask]) < 0.5):
            worst = model.buses[int(np.argmin(np.where(mask, np.abs(v_new), np.inf).min(axis=1)))].id
            raise PowerFlowError(f"voltage collapse (|V| < 0.5 p.u. at bus {worst}): infeasible load")
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        if change < tol:
            return TrueState(v, current, it, change)
    raise PowerFlowError(f"backward/forward sweep did not converge in {max_iter} iterations "
                         f"(max voltage change {change:.3e})")
