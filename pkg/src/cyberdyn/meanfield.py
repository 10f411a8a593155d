"""Deterministic mean-field dynamics of per-node blue probabilities.

Each node's blue probability follows dB_v/dt = f_RB(y_v) - B_v, where y_v is
the arithmetic mean of B over v's neighbors. Integration is synchronous
forward Euler with a fixed step (0.01 by default): every update reads the
previous snapshot, which keeps the scheme identical to the discrete-time
stochastic simulator up to the randomness.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .combat import CombatFunction, TypeICombat, TypeIICombat
from .graphgen import Graph

__all__ = [
    "MeanFieldTrajectory",
    "EquilibriumVerdict",
    "EquilibriumKind",
    "IntegratorInstabilityError",
    "MonotonicityReport",
    "neighbor_fractions",
    "neighbor_mean",
    "integrate",
    "classify_equilibrium",
    "predicted_convergence_rate",
    "empirical_convergence_rate",
    "monotonicity_probe",
    "save_trajectory_csv",
]

_BOX_SLACK = 1e-12


class IntegratorInstabilityError(RuntimeError):
    """State escaped [0, 1] by more than the clamp tolerance."""


def neighbor_fractions(g: Graph, values: np.ndarray) -> np.ndarray:
    """Per-node arithmetic mean of ``values`` over each node's neighbors."""
    return (g.csr @ np.asarray(values, dtype=np.float64)) * g.inv_degrees


def neighbor_mean(g: Graph, B: np.ndarray, v: int) -> float:
    """Mean of B over the neighbors of node v."""
    nbrs = g.neighbors(v)
    return float(np.asarray(B, dtype=np.float64)[nbrs].mean())


@dataclass(frozen=True, eq=False)
class MeanFieldTrajectory:
    """Euler trajectory with full-resolution scalar series and strided
    per-node snapshots.

    ``times``/``mean_blue``/``min_B``/``max_B`` cover every step;
    ``sample_times``/``states`` hold the stored snapshots (always including
    the initial and final states).
    """

    times: np.ndarray
    mean_blue: np.ndarray
    min_B: np.ndarray
    max_B: np.ndarray
    sample_times: np.ndarray
    states: np.ndarray
    dt: float

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def state(self, i: int) -> tuple[float, np.ndarray]:
        return float(self.sample_times[i]), self.states[i]


def integrate(
    g: Graph,
    f: CombatFunction,
    B0: np.ndarray,
    horizon: float,
    dt: float = 0.01,
    sample_every: int = 10,
) -> MeanFieldTrajectory:
    """Integrate the master equation by synchronous forward Euler.

    Raises IntegratorInstabilityError (naming the first offending node and
    the time) if the state leaves [-1e-12, 1+1e-12]; rounding inside that
    band is clamped.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    B = np.asarray(B0, dtype=np.float64).copy()
    if B.shape != (g.n,):
        raise ValueError("B0 must have one entry per node")
    if B.min() < 0 or B.max() > 1:
        raise ValueError("B0 entries must lie in [0, 1]")

    steps = int(round(horizon / dt))
    times = np.arange(steps + 1) * dt
    mean_blue = np.empty(steps + 1)
    min_B = np.empty(steps + 1)
    max_B = np.empty(steps + 1)
    snap_idx = sorted(set(range(0, steps + 1, sample_every)) | {steps})
    states = np.empty((len(snap_idx), g.n))
    snap_pos = {s: j for j, s in enumerate(snap_idx)}

    for step in range(steps + 1):
        mean_blue[step] = B.mean()
        min_B[step] = B.min()
        max_B[step] = B.max()
        if step in snap_pos:
            states[snap_pos[step]] = B
        if step == steps:
            break
        theta = np.asarray(f.eval_rb(neighbor_fractions(g, B)))
        B = B + (theta - B) * dt
        lo, hi = B.min(), B.max()
        if lo < -_BOX_SLACK or hi > 1.0 + _BOX_SLACK:
            v = int(np.argmin(B) if lo < -_BOX_SLACK else np.argmax(B))
            raise IntegratorInstabilityError(
                f"state escaped [0, 1] at node {v}, t={times[step + 1]:.4f} "
                f"(value {B[v]!r})"
            )
        np.clip(B, 0.0, 1.0, out=B)

    return MeanFieldTrajectory(
        times=times,
        mean_blue=mean_blue,
        min_B=min_B,
        max_B=max_B,
        sample_times=times[snap_idx],
        states=states,
        dt=dt,
    )


# ---------------------------------------------------------------------------
# Equilibria


class EquilibriumKind(Enum):
    STABLE_EXPONENTIAL = "StableExponential"
    UNSTABLE = "Unstable"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class EquilibriumVerdict:
    kind: EquilibriumKind
    rate: Optional[float] = None
    detail: str = ""


def predicted_convergence_rate(f: CombatFunction, z: float) -> float:
    """Linearized convergence exponent at the uniform equilibrium z in {0, 1}.

    The exponent is f'(z) - 1 (the row-normalized adjacency has top
    eigenvalue 1). The hard-threshold family is flat away from its jump, so
    its exponent is -1.
    """
    if z not in (0.0, 1.0, 0, 1):
        raise ValueError("z must be 0 or 1")
    if isinstance(f, TypeICombat):
        return -1.0
    deriv = f.derivative_rb(float(z))
    if deriv is None:
        raise ValueError(f"combat function not differentiable at z={z}")
    return deriv - 1.0


def classify_equilibrium(
    g: Graph,
    f: CombatFunction,
    Bstar: np.ndarray,
    residual_tol: float = 1e-9,
) -> EquilibriumVerdict:
    """Classify an equilibrium's stability per family.

    The input must actually be an equilibrium: f_RB(neighbor mean) must equal
    B* at every node within ``residual_tol``.
    """
    B = np.asarray(Bstar, dtype=np.float64)
    if B.shape != (g.n,):
        raise ValueError("Bstar must have one entry per node")
    y = neighbor_fractions(g, B)
    residual = np.abs(np.asarray(f.eval_rb(y)) - B)
    worst = int(np.argmax(residual))
    if residual[worst] > residual_tol:
        raise ValueError(
            f"not an equilibrium: node {worst} has residual {residual[worst]:.3e}"
        )

    all_ones = bool(np.all(B >= 1.0 - residual_tol))
    all_zeros = bool(np.all(B <= residual_tol))

    if isinstance(f, TypeICombat):
        eps = f.boundary_tolerance
        if np.any(np.abs(B - f.sigma) <= eps):
            return EquilibriumVerdict(
                EquilibriumKind.UNSTABLE, detail="a node sits at the threshold value"
            )
        margin_ok = np.all((y > f.sigma + eps) | (y < f.sigma - eps))
        consistent = np.all(
            np.where(y > f.sigma, np.abs(B - 1.0), np.abs(B)) <= residual_tol
        )
        if margin_ok and consistent:
            return EquilibriumVerdict(
                EquilibriumKind.STABLE_EXPONENTIAL,
                rate=-1.0,
                detail="neighbor means bounded away from the threshold",
            )
        return EquilibriumVerdict(EquilibriumKind.UNDETERMINED)

    if isinstance(f, TypeIICombat):
        if np.any(np.abs(B - f.tau) <= residual_tol):
            return EquilibriumVerdict(
                EquilibriumKind.UNSTABLE, detail="a node sits at the threshold value"
            )
        if all_ones or all_zeros:
            z = 1.0 if all_ones else 0.0
            return EquilibriumVerdict(
                EquilibriumKind.STABLE_EXPONENTIAL,
                rate=predicted_convergence_rate(f, z),
            )
        return EquilibriumVerdict(
            EquilibriumKind.UNDETERMINED, detail="mixed equilibrium not classified"
        )

    if f.family == "type3":
        if all_ones:
            return EquilibriumVerdict(
                EquilibriumKind.STABLE_EXPONENTIAL,
                rate=predicted_convergence_rate(f, 1.0),
            )
        if all_zeros:
            return EquilibriumVerdict(EquilibriumKind.UNSTABLE)
        return EquilibriumVerdict(EquilibriumKind.UNDETERMINED)

    if f.family == "type4":
        if all_zeros:
            return EquilibriumVerdict(
                EquilibriumKind.STABLE_EXPONENTIAL,
                rate=predicted_convergence_rate(f, 0.0),
            )
        if all_ones:
            return EquilibriumVerdict(EquilibriumKind.UNSTABLE)
        return EquilibriumVerdict(EquilibriumKind.UNDETERMINED)

    return EquilibriumVerdict(EquilibriumKind.UNDETERMINED)


def empirical_convergence_rate(
    traj: MeanFieldTrajectory, target: float, tail_fraction: float = 0.3
) -> float:
    """Least-squares slope of log ||B(t) - target||_inf over the tail window.

    The trajectory must have converged (final sup-distance below 1e-3).
    Points within 1e-14 of the target are dropped before taking logs.
    """
    if target not in (0.0, 1.0, 0, 1):
        raise ValueError("target must be 0 or 1")
    if not (0 < tail_fraction <= 1):
        raise ValueError("tail_fraction must be in (0, 1]")
    dist = 1.0 - traj.min_B if target == 1.0 else traj.max_B
    if dist[-1] >= 1e-3:
        raise ValueError(
            f"trajectory did not converge to {target}: final distance {dist[-1]:.3e}"
        )
    start = int(len(dist) * (1.0 - tail_fraction))
    t = traj.times[start:]
    d = dist[start:]
    keep = d > 1e-14
    if keep.sum() < 2:
        raise ValueError("tail window too short after dropping converged points")
    slope = np.polyfit(t[keep], np.log(d[keep]), 1)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# Monotonicity probe


@dataclass(frozen=True)
class MonotonicityReport:
    ok: bool
    strict: bool
    mode: str
    threshold: float
    first_violation: Optional[tuple[float, float]] = None  # (time, drop)


def monotonicity_probe(
    g: Graph,
    traj: MeanFieldTrajectory,
    threshold: float,
    mode: str,
) -> MonotonicityReport:
    """Check the monotone-envelope property along a trajectory.

    mode "above": requires every node's neighbor mean to start above the
    threshold, then asserts min_v B_v(t) never decreases (up to dt * 1e-6
    Euler tolerance). mode "below" is the mirrored statement for max_v B_v.
    """
    if mode not in ("above", "below"):
        raise ValueError("mode must be 'above' or 'below'")
    y0 = neighbor_fractions(g, traj.states[0])
    tol = traj.dt * 1e-6
    if mode == "above":
        if not np.all(y0 > threshold):
            raise ValueError("hypothesis fails at t=0: some neighbor mean <= threshold")
        series = traj.min_B
        deltas = np.diff(series)
    else:
        if not np.all(y0 < threshold):
            raise ValueError("hypothesis fails at t=0: some neighbor mean >= threshold")
        series = traj.max_B
        deltas = -np.diff(series)

    bad = np.flatnonzero(deltas < -tol)
    if bad.size:
        i = int(bad[0])
        return MonotonicityReport(
            ok=False,
            strict=False,
            mode=mode,
            threshold=threshold,
            first_violation=(float(traj.times[i + 1]), float(deltas[i])),
        )
    strict = bool(np.all(deltas > tol)) if len(deltas) else False
    return MonotonicityReport(ok=True, strict=strict, mode=mode, threshold=threshold)


# ---------------------------------------------------------------------------
# Persistence


def save_trajectory_csv(traj: MeanFieldTrajectory, path, full_state: bool = False) -> None:
    """Write `t, mean_blue, min_B, max_B`; with ``full_state``, append the
    per-node dump `t, v, B_v` for every stored snapshot."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t,mean_blue,min_B,max_B\n")
        for i, t in enumerate(traj.times):
            fh.write(
                f"{float(t)!r},{float(traj.mean_blue[i])!r},"
                f"{float(traj.min_B[i])!r},{float(traj.max_B[i])!r}\n"
            )
        if full_state:
            fh.write("t,v,B_v\n")
            for i, t in enumerate(traj.sample_times):
                for v in range(traj.states.shape[1]):
                    fh.write(f"{float(t)!r},{v},{float(traj.states[i, v])!r}\n")
