"""Shared numerical oracles for the test suite.

The Riccati oracle here integrates the coefficient ODEs

    da_minus/dt = a_minus^2 - beta(t)      (backward, seeded 1/(1-t) at t -> 1)
    db_minus/dt = a_minus * b_minus
    dc_minus/dt = b_minus^2
    da_plus/dt  = beta(t) - a_plus^2       (forward, seeded 1/t at t -> 0)

with fixed-order RK4 on a piece-aligned mesh that is geometrically graded near
the singular endpoints.  It shares no code with the closed-form evaluation in
``adapid.schedule``; agreement between the two validates both.
"""

from __future__ import annotations

import numpy as np

from adapid.schedule import Schedule

# Offset of the asymptotic 1/(1-t), 1/t seeds from the singular endpoints.
# The first-order seeds carry a frozen O(beta*eps/3) error in c_minus, so the
# offset must sit well below tol/beta to certify 1e-6 relative accuracy.
_EPS = 1e-8
_GRADE = 0.015    # geometric step ratio inside the graded region
_GRADED_GAP = 0.01   # graded until exactly this far from the singular endpoint
_H_MAX = 2e-4     # uniform step in the regular region


def _graded(start_gap: float, until_gap: float) -> np.ndarray:
    """Gaps from the singular endpoint, growing geometrically to until_gap."""
    gaps = [start_gap]
    while gaps[-1] < until_gap:
        gaps.append(min(gaps[-1] * (1.0 + _GRADE), until_gap))
    return np.asarray(gaps)


def _mesh_from(start: float, stop: float, anchors) -> np.ndarray:
    """Monotone mesh from ``start`` to ``stop`` hitting every anchor exactly."""
    sign = 1.0 if stop >= start else -1.0
    pts = sorted({float(a) for a in anchors
                  if min(start, stop) < a < max(start, stop)} | {float(stop)},
                 reverse=sign < 0)
    nodes = [start]
    t = start
    for bp in pts:
        gap = abs(bp - t)
        n = max(1, int(np.ceil(gap / _H_MAX)))
        seg = t + sign * gap * np.arange(1, n + 1) / n
        seg[-1] = bp
        nodes.extend(seg.tolist())
        t = bp
    return np.asarray(nodes)


def _rk4_sweep(mesh: np.ndarray, y0: np.ndarray, rhs, beta_of_mid) -> np.ndarray:
    """Integrate along ``mesh`` (first axis of output), state batch y0 (S, k)."""
    out = np.empty((len(mesh),) + y0.shape)
    out[0] = y0
    y = y0
    for i in range(len(mesh) - 1):
        t0, t1 = mesh[i], mesh[i + 1]
        h = t1 - t0
        beta = beta_of_mid(0.5 * (t0 + t1))
        k1 = rhs(y, beta)
        k2 = rhs(y + 0.5 * h * k1, beta)
        k3 = rhs(y + 0.5 * h * k2, beta)
        k4 = rhs(y + h * k3, beta)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = y
    return out


def rk4_oracle_batch(edges: np.ndarray, values_batch: np.ndarray, times) -> dict:
    """RK4 coefficients for a batch of schedules sharing the same piece edges.

    Returns arrays of shape (S, len(times)) for a_plus/a_minus/b_minus/c_minus
    and K, plus a_plus_1 of shape (S,).  Query times must lie in
    [0.01, 0.99]; they are inserted into the mesh so no interpolation occurs.
    """
    edges = np.asarray(edges, dtype=float)
    values_batch = np.atleast_2d(np.asarray(values_batch, dtype=float))
    times = np.asarray(times, dtype=float)
    if times.min() < 0.01 or times.max() > 0.99:
        raise ValueError("oracle query times must lie in [0.01, 0.99]")
    if edges[1:-1].size and (edges[1:-1].max() > 0.98 or edges[1:-1].min() < 0.02):
        raise ValueError("oracle assumes interior junctions inside (0.02, 0.98)")

    def beta_of_mid(t):
        p = np.searchsorted(edges, t, side="right") - 1
        return values_batch[:, min(p, values_batch.shape[1] - 1)]

    anchors = np.concatenate([edges[1:-1], times])

    # Backward sweep for (a_minus, b_minus, c_minus).
    gaps = _graded(_EPS, _GRADED_GAP)
    mesh_b = np.concatenate([1.0 - gaps, _mesh_from(1.0 - gaps[-1], 0.01, anchors)[1:]])
    seed = 1.0 / (1.0 - mesh_b[0])
    y0 = np.full((values_batch.shape[0], 3), seed)

    def rhs_back(y, beta):
        a, b, c = y[:, 0], y[:, 1], y[:, 2]
        return np.stack([a * a - beta, a * b, b * b], axis=1)

    traj_b = _rk4_sweep(mesh_b, y0, rhs_back, beta_of_mid)

    # Forward sweep for a_plus, continued to t = 1 for the precision offset.
    mesh_f = np.concatenate([gaps, _mesh_from(gaps[-1], 1.0, anchors)[1:]])
    y0f = np.full((values_batch.shape[0], 1), 1.0 / mesh_f[0])

    def rhs_fwd(y, beta):
        a = y[:, 0]
        return (beta - a * a)[:, None]

    traj_f = _rk4_sweep(mesh_f, y0f, rhs_fwd, beta_of_mid)
    a_plus_1 = traj_f[-1, :, 0]

    idx_b = {t: i for i, t in enumerate(mesh_b)}
    idx_f = {t: i for i, t in enumerate(mesh_f)}
    sel_b = np.array([idx_b[t] for t in times])
    sel_f = np.array([idx_f[t] for t in times])
    a_minus = traj_b[sel_b, :, 0].T
    b_minus = traj_b[sel_b, :, 1].T
    c_minus = traj_b[sel_b, :, 2].T
    a_plus = traj_f[sel_f, :, 0].T
    return {"a_plus": a_plus, "a_minus": a_minus, "b_minus": b_minus,
            "c_minus": c_minus, "K": c_minus - a_plus_1[:, None],
            "a_plus_1": a_plus_1}


def rk4_oracle(schedule: Schedule, times) -> dict:
    """Single-schedule convenience wrapper; arrays of shape (len(times),)."""
    edges, values = schedule.edges_values()
    out = rk4_oracle_batch(edges, values[None, :], times)
    return {k: v[0] for k, v in out.items()}


def random_pwc_schedules(n: int, seed: int, pieces=(1, 2, 4, 8),
                         beta_max: float = 20.0) -> list[Schedule]:
    """Reproducible random PWC schedules with values in [0, beta_max]."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        K = int(rng.choice(pieces))
        vals = rng.uniform(0.0, beta_max, size=K)
        if rng.random() < 0.2:
            vals[rng.integers(0, K)] = 0.0
        out.append(Schedule.pwc(vals, label=f"rand-pwc-{i}"))
    return out
