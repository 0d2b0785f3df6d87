"""Parasitic column model: one resistive ladder per crossbar column.

Device j ties its row driver (v_j) to column node u_j through G_j. A wire
segment of resistance r joins consecutive nodes, and the last node joins
the sense amplifier's virtual ground. Node 0 is the far end of the column.

KCL gives a symmetric tridiagonal system::

    (G_j + c_j / r) u_j - u_{j-1} / r - u_{j+1} / r = G_j v_j

with c_0 = 1 and c_j = 2 otherwise. The sensed current is u_{X-1} / r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ColumnCircuit:
    conductances: np.ndarray  # siemens, length X
    wire_resistance: float  # ohms
    input_voltages: np.ndarray  # volts, length X


def _pivots(G: np.ndarray, g: float) -> np.ndarray:
    """Forward-elimination pivots of the ladder matrix, batched over leading axes."""
    X = G.shape[-1]
    m = np.empty_like(G, dtype=np.float64)
    m[..., 0] = G[..., 0] + g
    for j in range(1, X):
        m[..., j] = G[..., j] + 2.0 * g - g * g / m[..., j - 1]
    return m


def solve_ladder(G: np.ndarray, v: np.ndarray, r: float) -> tuple[np.ndarray, float]:
    """Node voltages and sensed current for one column (Thomas algorithm)."""
    G = np.asarray(G, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if r < 0:
        raise ValueError("wire resistance must be non-negative")
    if r == 0:
        return np.zeros_like(G), float(np.dot(G, v))
    g = 1.0 / r
    X = G.shape[0]
    m = _pivots(G, g)
    d = np.empty(X)
    d[0] = G[0] * v[0] / m[0]
    for j in range(1, X):
        d[j] = (G[j] * v[j] + g * d[j - 1]) / m[j]
    u = np.empty(X)
    u[-1] = d[-1]
    for j in range(X - 2, -1, -1):
        u[j] = d[j] + (g / m[j]) * u[j + 1]
    return u, float(u[-1] * g)


def solve_column(circuit: ColumnCircuit) -> float:
    """Current delivered into the virtual ground, amperes."""
    return solve_ladder(circuit.conductances, circuit.input_voltages, circuit.wire_resistance)[1]


def ladder_transfer(G: np.ndarray, r: float) -> np.ndarray:
    """Fraction of each device's ideal current that reaches the sense node.

    The column current is linear in the drive, I = sum_j tau_j G_j v_j, and
    tau depends only on the conductances, so it can be computed once at
    programming time. ``G`` has the device index on axis -2 (rows) and any
    number of columns on the last axis; tau has the same shape.
    """
    G = np.asarray(G, dtype=np.float64)
    if r == 0:
        return np.ones_like(G)
    g = 1.0 / r
    cols = np.moveaxis(G, -2, -1)  # (..., cols, rows)
    m = _pivots(cols, g)
    ratio = g / m
    # tau_i = (g / m_i) * prod_{l > i} (g / m_l)
    tail = np.cumprod(ratio[..., ::-1], axis=-1)[..., ::-1]
    return np.moveaxis(tail, -1, -2)


def effective_conductances(G: np.ndarray, r: float) -> np.ndarray:
    """Conductance matrix seen from the sense nodes once IR drop is folded in."""
    G = np.asarray(G, dtype=np.float64)
    return ladder_transfer(G, r) * G
