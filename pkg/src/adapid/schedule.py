"""Stiffness schedules and closed-form Green's-function coefficients.

A schedule assigns a stiffness value ``beta(t)`` to every ``t`` in (0, 1).
Three protocols are supported: constant, piecewise-constant on K uniform
intervals, and a three-piece "negative window" (``-B`` on ``|t-1/2| < delta``,
zero outside).  For any of these the backward coefficients
``(a_minus, b_minus, c_minus)`` and the forward coefficient ``a_plus`` obey a
Riccati system that is solvable in closed form piece by piece:

    da_minus/dt = a_minus^2 - beta      a_minus, b_minus, c_minus -> 1/(1-t)
    db_minus/dt = a_minus * b_minus                                as t -> 1
    dc_minus/dt = b_minus^2
    da_plus/dt  = beta - a_plus^2       a_plus -> 1/t  as t -> 0

Within a piece of constant beta the flow is a Moebius map.  We evaluate it in
the uniformly stable form built from ``cosh(sqrt(beta) tau)`` and
``sinh(sqrt(beta) tau)/sqrt(beta)``, which continues analytically through
``beta = 0`` (rational forms) and ``beta < 0`` (trigonometric forms), so a
single code path covers all admissible protocols with no 0/0 branches.

The derived precision ``K_t = c_minus(t) - a_plus(1)`` is the inverse variance
of the reweighting Gaussian; it must be positive for every interior ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Schedule",
    "GreensCoeffs",
    "JDiagnostics",
    "ScheduleError",
    "TimeDomainError",
    "WellPosednessError",
    "guard_negative_window",
    "coeffs",
    "coeffs_grid",
    "coeffs_const",
    "coeffs_pwc",
    "coeffs_negative_window",
    "j_identity",
]

# Backward coefficients diverge at t = 1; queries are clamped below this.
_T_MAX = 1.0 - 1e-9


class ScheduleError(ValueError):
    """Invalid schedule parameters (rejected at construction)."""


class TimeDomainError(ValueError):
    """Coefficient query outside the open interval (0, 1)."""


class WellPosednessError(RuntimeError):
    """Coefficient evaluation produced a non-finite value or K_t <= 0."""


# ---------------------------------------------------------------------------
# Schedule type


@dataclass(frozen=True)
class Schedule:
    """A stiffness protocol beta(t) on [0, 1].

    Use the factory classmethods; the raw constructor validates but does not
    derive defaults.  Instances are immutable and hashable, which lets the
    coefficient engine cache per-schedule junction values.
    """

    kind: str  # "const" | "pwc" | "negwin"
    label: str = ""
    beta: float | None = None
    values: tuple[float, ...] | None = None
    B: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.kind == "const":
            if self.beta is None or not math.isfinite(self.beta) or self.beta < 0:
                raise ScheduleError(f"constant schedule needs finite beta >= 0, got {self.beta}")
        elif self.kind == "pwc":
            if not self.values:
                raise ScheduleError("pwc schedule needs at least one piece value")
            vals = tuple(float(v) for v in self.values)
            if any(not math.isfinite(v) or v < 0 for v in vals):
                raise ScheduleError(f"pwc values must be finite and >= 0, got {vals}")
            object.__setattr__(self, "values", vals)
        elif self.kind == "negwin":
            if self.B is None or self.delta is None:
                raise ScheduleError("negative-window schedule needs B and delta")
            ok, reason = guard_negative_window(self.B, self.delta)
            if not ok:
                raise ScheduleError(f"negative window rejected: {reason}")
        else:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")

    # -- factories ----------------------------------------------------------

    @classmethod
    def constant(cls, beta: float, label: str = "") -> "Schedule":
        return cls(kind="const", label=label or f"const-{beta:g}", beta=float(beta))

    @classmethod
    def pwc(cls, values, label: str = "") -> "Schedule":
        """Piecewise-constant beta on len(values) uniform intervals k/K."""
        vals = tuple(float(v) for v in values)
        return cls(kind="pwc", label=label or f"pwc-{len(vals)}", values=vals)

    @classmethod
    def negative_window(cls, B: float, delta: float, label: str = "") -> "Schedule":
        """beta = -B on |t - 1/2| < delta, 0 outside (guard-checked)."""
        return cls(kind="negwin", label=label or f"negwin-B{B:g}-d{delta:g}",
                   B=float(B), delta=float(delta))

    # -- schedule function --------------------------------------------------

    @property
    def n_pieces(self) -> int:
        if self.kind == "const":
            return 1
        if self.kind == "pwc":
            return len(self.values)
        return 3

    def edges_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Piece edges (len P+1, from 0 to 1) and piece values (len P)."""
        if self.kind == "const":
            return np.array([0.0, 1.0]), np.array([self.beta])
        if self.kind == "pwc":
            K = len(self.values)
            return np.linspace(0.0, 1.0, K + 1), np.asarray(self.values, dtype=float)
        t_l = (1.0 - self.delta) / 2.0
        t_r = (1.0 + self.delta) / 2.0
        return np.array([0.0, t_l, t_r, 1.0]), np.array([0.0, -self.B, 0.0])

    def beta_at(self, t) -> np.ndarray:
        """beta(t), right-continuous at interior junctions."""
        t = np.asarray(t, dtype=float)
        edges, values = self.edges_values()
        idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(values) - 1)
        return values[idx]

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        out = {"kind": self.kind, "label": self.label}
        if self.kind == "const":
            out["beta"] = self.beta
        elif self.kind == "pwc":
            out["values"] = list(self.values)
        else:
            out["B"] = self.B
            out["delta"] = self.delta
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Schedule":
        kind = obj.get("kind")
        label = obj.get("label", "")
        if kind == "const":
            return cls(kind="const", label=label, beta=obj["beta"])
        if kind == "pwc":
            return cls(kind="pwc", label=label, values=tuple(obj["values"]))
        if kind == "negwin":
            return cls(kind="negwin", label=label, B=obj["B"], delta=obj["delta"])
        raise ScheduleError(f"unknown schedule kind {kind!r}")


def guard_negative_window(B: float, delta: float) -> tuple[bool, str]:
    """Well-posedness verdict for the negative-window profile.

    Admissible iff (1-delta)/2 * sqrt(B) * tan(delta*sqrt(B)) < 1 and
    delta*sqrt(B) < pi/2 (no tangent singularity inside the window).
    Returns (admissible, reason); reason is "" when admissible.
    """
    if not (B > 0 and math.isfinite(B)):
        return False, f"window magnitude B must be positive and finite, got {B}"
    if not (0.0 < delta < 0.5):
        return False, f"window half-width delta must lie in (0, 1/2), got {delta}"
    s = delta * math.sqrt(B)
    if s >= math.pi / 2:
        return False, f"tangent singularity inside window: delta*sqrt(B) = {s:.6g} >= pi/2"
    lhs = 0.5 * (1.0 - delta) * math.sqrt(B) * math.tan(s)
    if lhs >= 1.0:
        return False, f"forward coefficient loses positivity: guard value {lhs:.6g} >= 1"
    return True, ""


# ---------------------------------------------------------------------------
# Coefficient results


@dataclass(frozen=True)
class GreensCoeffs:
    """Green's-function coefficients at one query time (inverse-time units)."""

    a_plus: float
    a_minus: float
    b_minus: float
    c_minus: float
    K: float  # precision c_minus(t) - a_plus(1)


@dataclass(frozen=True)
class JDiagnostics:
    """Derived scalars J = a_minus^2 - b_minus^2 and Delta = a_minus - c_minus."""

    J: float
    Delta: float


# ---------------------------------------------------------------------------
# Stable elementary pieces
#
# With x = beta * tau^2 define
#   C(x)  = cosh(sqrt(x))            (= cos(sqrt(-x)) for x < 0)
#   S(x)  = tau * sinh(sqrt(x))/sqrt(x)   (= tau for x = 0, trig for x < 0)
# so that the per-piece Moebius update reads
#   D = C + a_edge * S
#   a = (a_edge * C + beta * S) / D,  b = b_edge / D,  c = c_edge - b_edge^2 S / D
# and the singular terminal/initial pieces are a = C/S, b = 1/S.


def _coshx(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = np.cosh(np.sqrt(x[pos]))
    out[~pos] = np.cos(np.sqrt(-x[~pos]))
    return out


def _sincx(x: np.ndarray) -> np.ndarray:
    """sinh(sqrt(x))/sqrt(x), continued through 0 and to x < 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    pos = x > 0
    neg = x < 0
    rp = np.sqrt(x[pos])
    out[pos] = np.sinh(rp) / rp
    rn = np.sqrt(-x[neg])
    out[neg] = np.sin(rn) / rn
    return out


def _piece_CS(beta: float, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = beta * tau * tau
    return _coshx(x), tau * _sincx(x)


def _edge_piece(beta: float, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(a, b, c) on a piece touching the singular boundary, tau = distance to it."""
    C, S = _piece_CS(beta, tau)
    a = C / S
    return a, 1.0 / S, a


def _interior_piece(beta: float, tau: np.ndarray, a_e: float, b_e: float,
                    c_e: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backward update across tau from edge values; returns (a, b, c, D)."""
    C, S = _piece_CS(beta, tau)
    D = C + a_e * S
    a = (a_e * C + beta * S) / D
    b = b_e / D
    c = c_e - b_e * b_e * S / D
    return a, b, c, D


def _forward_update(beta: float, sigma: np.ndarray, a_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward update of a_plus across sigma from its left-edge value."""
    C, S = _piece_CS(beta, sigma)
    D = C + a_s * S
    return (a_s * C + beta * S) / D, D


# ---------------------------------------------------------------------------
# Per-schedule junction cache


@dataclass(frozen=True)
class _Junctions:
    edges: np.ndarray        # canonical piece edges, adjacent equal values merged
    values: np.ndarray
    back: np.ndarray         # (P-1, 3): (a_minus, b_minus, c_minus) at edges 1..P-1
    fwd: np.ndarray          # (P-1,): a_plus at edges 1..P-1
    a_plus_1: float


def _canonical_pieces(schedule: Schedule) -> tuple[np.ndarray, np.ndarray]:
    """Merge adjacent equal-value pieces so equivalent schedule functions
    (e.g. a PWC refinement that duplicates its parent values) evaluate
    identically, bit for bit."""
    edges, values = schedule.edges_values()
    keep_e = [edges[0]]
    keep_v = [values[0]]
    for k in range(1, len(values)):
        if values[k] == keep_v[-1]:
            continue
        keep_e.append(edges[k])
        keep_v.append(values[k])
    keep_e.append(edges[-1])
    return np.asarray(keep_e), np.asarray(keep_v)


@lru_cache(maxsize=256)
def _junctions(schedule: Schedule) -> _Junctions:
    edges, values = _canonical_pieces(schedule)
    P = len(values)

    back = np.empty((max(P - 1, 0), 3))
    if P > 1:
        tau = np.array([1.0 - edges[P - 1]])
        a, b, c = _edge_piece(values[P - 1], tau)
        back[P - 2] = (a[0], b[0], c[0])
        for p in range(P - 1, 1, -1):  # piece p covers [edges[p-1], edges[p]]
            a_e, b_e, c_e = back[p - 1]
            tau = np.array([edges[p] - edges[p - 1]])
            a, b, c, D = _interior_piece(values[p - 1], tau, a_e, b_e, c_e)
            if D[0] <= 0 or not np.isfinite([a[0], b[0], c[0]]).all():
                raise WellPosednessError(
                    f"backward coefficients blow up inside piece {p} "
                    f"(beta={values[p - 1]:g}) of schedule {schedule.label!r}")
            back[p - 2] = (a[0], b[0], c[0])

    fwd = np.empty(max(P - 1, 0))
    sigma = np.array([edges[1] - edges[0]])
    ap = _edge_piece(values[0], sigma)[0]
    if P > 1:
        fwd[0] = ap[0]
        for p in range(2, P):
            sigma = np.array([edges[p] - edges[p - 1]])
            ap, D = _forward_update(values[p - 1], sigma, fwd[p - 2])
            if D[0] <= 0 or not np.isfinite(ap[0]):
                raise WellPosednessError(
                    f"forward coefficient blows up inside piece {p} "
                    f"(beta={values[p - 1]:g}) of schedule {schedule.label!r}")
            fwd[p - 1] = ap[0]
        sigma = np.array([edges[P] - edges[P - 1]])
        ap, D = _forward_update(values[P - 1], sigma, fwd[P - 2])
        if D[0] <= 0 or not np.isfinite(ap[0]):
            raise WellPosednessError(
                f"forward coefficient blows up inside piece {P} of schedule {schedule.label!r}")
    a_plus_1 = float(ap[0])

    back.setflags(write=False)
    fwd.setflags(write=False)
    edges.setflags(write=False)
    values.setflags(write=False)
    return _Junctions(edges=edges, values=values, back=back, fwd=fwd, a_plus_1=a_plus_1)


# ---------------------------------------------------------------------------
# Evaluation


def _check_times(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        bad = t[(t <= 0.0) | (t >= 1.0)][0]
        raise TimeDomainError(f"query time must lie strictly inside (0, 1), got {bad}")
    return np.minimum(t, _T_MAX)


def coeffs_grid(schedule: Schedule, times) -> dict[str, np.ndarray]:
    """Vectorized coefficients at many query times.

    Returns arrays ``a_plus, a_minus, b_minus, c_minus, K`` aligned with
    ``times``.  Per-query cost is O(1) after the per-schedule O(P) junction
    sweep (cached on the schedule).
    """
    t = _check_times(times)
    jn = _junctions(schedule)
    edges, values = jn.edges, jn.values
    P = len(values)

    piece = np.clip(np.searchsorted(edges, t, side="left"), 1, P)
    a_minus = np.empty_like(t)
    b_minus = np.empty_like(t)
    c_minus = np.empty_like(t)
    a_plus = np.empty_like(t)

    for p in range(1, P + 1):
        sel = piece == p
        if not sel.any():
            continue
        tp = t[sel]
        beta_p = values[p - 1]
        if p == P:
            a, b, c = _edge_piece(beta_p, 1.0 - tp)
        else:
            a_e, b_e, c_e = jn.back[p - 1]
            a, b, c, D = _interior_piece(beta_p, edges[p] - tp, a_e, b_e, c_e)
            if np.any(D <= 0):
                raise WellPosednessError(
                    f"backward coefficients blow up inside piece {p} of "
                    f"schedule {schedule.label!r}")
        a_minus[sel], b_minus[sel], c_minus[sel] = a, b, c
        if p == 1:
            ap = _edge_piece(beta_p, tp)[0]
        else:
            ap, Df = _forward_update(beta_p, tp - edges[p - 1], jn.fwd[p - 2])
            if np.any(Df <= 0):
                raise WellPosednessError(
                    f"forward coefficient blows up inside piece {p} of "
                    f"schedule {schedule.label!r}")
        a_plus[sel] = ap

    K = c_minus - jn.a_plus_1
    finite = (np.isfinite(a_minus) & np.isfinite(b_minus)
              & np.isfinite(c_minus) & np.isfinite(a_plus))
    if not finite.all():
        p_bad = int(piece[~finite][0])
        raise WellPosednessError(
            f"non-finite coefficient inside piece {p_bad} of schedule {schedule.label!r}")
    if np.any(K <= 0):
        t_bad = float(t[K <= 0][0])
        raise WellPosednessError(
            f"precision K_t <= 0 at t={t_bad:.6g} for schedule {schedule.label!r}")
    return {"a_plus": a_plus, "a_minus": a_minus, "b_minus": b_minus,
            "c_minus": c_minus, "K": K}


def coeffs(schedule: Schedule, t: float) -> GreensCoeffs:
    """Green's-function coefficients of ``schedule`` at a single time."""
    g = coeffs_grid(schedule, [t])
    return GreensCoeffs(a_plus=float(g["a_plus"][0]), a_minus=float(g["a_minus"][0]),
                        b_minus=float(g["b_minus"][0]), c_minus=float(g["c_minus"][0]),
                        K=float(g["K"][0]))


def coeffs_const(beta: float, t: float) -> GreensCoeffs:
    """Constant-stiffness coefficients (hyperbolic closed forms)."""
    return coeffs(Schedule.constant(beta), t)


def coeffs_pwc(schedule: Schedule, t: float) -> GreensCoeffs:
    if schedule.kind != "pwc":
        raise ScheduleError(f"expected a pwc schedule, got kind {schedule.kind!r}")
    return coeffs(schedule, t)


def coeffs_negative_window(schedule: Schedule, t: float) -> GreensCoeffs:
    if schedule.kind != "negwin":
        raise ScheduleError(f"expected a negative-window schedule, got kind {schedule.kind!r}")
    return coeffs(schedule, t)


def j_identity(schedule: Schedule, t: float) -> JDiagnostics:
    """J = a_minus^2 - b_minus^2 and Delta = a_minus - c_minus at time t."""
    g = coeffs(schedule, t)
    return JDiagnostics(J=g.a_minus ** 2 - g.b_minus ** 2, Delta=g.a_minus - g.c_minus)
