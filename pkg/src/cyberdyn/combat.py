"""The four combat-power function families and the attacker/defender duality.

A combat function maps the fraction of blue neighbors of a red node to its
recovery rate f_RB(x) in [0, 1]. The dual blue-to-red rate is always derived
as f_BR(x) = 1 - f_RB(1 - x), so every family satisfies the rate-sum identity
f_RB(x) + f_BR(1 - x) = 1 exactly.

Families:
    type1   hard threshold sigma: 0 below, 1 above, 1/2 at the boundary
    type2   sigmoid with threshold tau: x^2/tau below, 1-(1-x)^2/(1-tau) above
    type3   concave superiority curve x^a with a in (0, 1)
    type4   convex inferiority curve x^b with b > 1 (dual to type3)
    tabulated   user samples with linear interpolation
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "CombatFunction",
    "TypeICombat",
    "TypeIICombat",
    "TypeIIICombat",
    "TypeIVCombat",
    "TabulatedCombat",
    "from_params",
    "load_tabulated",
    "validate_shape",
    "ShapeReport",
    "ShapeViolation",
]

_DOMAIN_SLACK = 1e-12


def _check_unit_interval(x):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < -_DOMAIN_SLACK) or np.any(arr > 1.0 + _DOMAIN_SLACK):
        raise ValueError("combat-function argument outside [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def _like(x, value):
    """Return a scalar when the input was scalar, else the array."""
    return float(value) if np.isscalar(x) or np.ndim(x) == 0 else value


class CombatFunction:
    """Base class; subclasses implement eval_rb and derivative_rb."""

    family: str = ""

    @property
    def threshold(self) -> Optional[float]:
        return None

    def eval_rb(self, x):
        raise NotImplementedError

    def eval_br(self, x):
        """Blue-to-red rate from the red-neighbor fraction x (the dual)."""
        x = _check_unit_interval(x)
        return _like(x, 1.0 - self.eval_rb(1.0 - x))

    def derivative_rb(self, x) -> Optional[float]:
        """Analytic derivative at a point, or None where it is undefined."""
        raise NotImplementedError


@dataclass(frozen=True)
class TypeICombat(CombatFunction):
    sigma: float
    boundary_tolerance: float = 1e-12
    family = "type1"

    def __post_init__(self):
        if not (0 < self.sigma < 1):
            raise ValueError("sigma must be in (0, 1)")
        if self.boundary_tolerance < 0:
            raise ValueError("boundary tolerance must be nonnegative")

    @property
    def threshold(self) -> float:
        return self.sigma

    def eval_rb(self, x):
        x = _check_unit_interval(x)
        eps = self.boundary_tolerance
        out = np.where(
            x > self.sigma + eps, 1.0, np.where(x < self.sigma - eps, 0.0, 0.5)
        )
        return _like(x, out)

    def derivative_rb(self, x) -> Optional[float]:
        return None


@dataclass(frozen=True)
class TypeIICombat(CombatFunction):
    """Sigmoid through (tau, tau): convex below the threshold, concave above.

    At tau = 0.5 this is exactly 2x^2 on [0, 1/2] and -2x^2 + 4x - 1 above.
    """

    tau: float = 0.5
    family = "type2"

    def __post_init__(self):
        if not (0 < self.tau < 1):
            raise ValueError("tau must be in (0, 1)")

    @property
    def threshold(self) -> float:
        return self.tau

    def eval_rb(self, x):
        x = _check_unit_interval(x)
        below = x * x / self.tau
        above = 1.0 - (1.0 - x) ** 2 / (1.0 - self.tau)
        return _like(x, np.where(x < self.tau, below, above))

    def derivative_rb(self, x) -> Optional[float]:
        x = float(_check_unit_interval(x))
        if x < self.tau:
            return 2.0 * x / self.tau
        # Left and right slopes agree at tau (both equal 2).
        return 2.0 * (1.0 - x) / (1.0 - self.tau)


@dataclass(frozen=True)
class TypeIIICombat(CombatFunction):
    """Concave power curve x^a, a in (0, 1): f(x) > x on (0, 1)."""

    exponent: float = 0.5
    family = "type3"

    def __post_init__(self):
        if not (0 < self.exponent < 1):
            raise ValueError("type3 exponent must be in (0, 1)")

    def eval_rb(self, x):
        x = _check_unit_interval(x)
        return _like(x, x**self.exponent)

    def derivative_rb(self, x) -> Optional[float]:
        x = float(_check_unit_interval(x))
        if x == 0.0:
            return None  # slope diverges
        return self.exponent * x ** (self.exponent - 1.0)


@dataclass(frozen=True)
class TypeIVCombat(CombatFunction):
    """Convex power curve x^b, b > 1: f(x) < x on (0, 1)."""

    exponent: float = 2.0
    family = "type4"

    def __post_init__(self):
        if self.exponent <= 1:
            raise ValueError("type4 exponent must exceed 1")

    def eval_rb(self, x):
        x = _check_unit_interval(x)
        return _like(x, x**self.exponent)

    def derivative_rb(self, x) -> Optional[float]:
        x = float(_check_unit_interval(x))
        return self.exponent * x ** (self.exponent - 1.0)


@dataclass(frozen=True)
class TabulatedCombat(CombatFunction):
    """User-supplied samples (x_i, f(x_i)), evaluated by linear interpolation.

    x must increase strictly from 0 to 1. The derivative is the segment slope
    strictly inside a segment and undefined (None) at the knots.
    """

    xs: np.ndarray
    ys: np.ndarray
    family = "tabulated"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
            raise ValueError("need matching 1-d sample arrays with >= 2 points")
        if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
            raise ValueError("x samples must increase strictly from 0 to 1")

    def eval_rb(self, x):
        x = _check_unit_interval(x)
        return _like(x, np.interp(x, self.xs, self.ys))

    def derivative_rb(self, x) -> Optional[float]:
        x = float(_check_unit_interval(x))
        if np.any(np.abs(self.xs - x) < 1e-12):
            return None  # knot: one-sided slopes generally disagree
        j = int(np.searchsorted(self.xs, x)) - 1
        return float(
            (self.ys[j + 1] - self.ys[j]) / (self.xs[j + 1] - self.xs[j])
        )


def from_params(family: str, **params) -> CombatFunction:
    """Build a combat function from a family name and keyword parameters."""
    family = family.lower()
    if family in ("type1", "i", "1"):
        return TypeICombat(**params)
    if family in ("type2", "ii", "2"):
        return TypeIICombat(**params)
    if family in ("type3", "iii", "3"):
        return TypeIIICombat(**params)
    if family in ("type4", "iv", "4"):
        return TypeIVCombat(**params)
    raise ValueError(f"unknown combat family {family!r}")


def load_tabulated(path) -> TabulatedCombat:
    """Read a two-column text file `x f(x)` with x strictly increasing."""
    xs, ys = [], []
    with open(path) as fh:
        for idx, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {idx}: expected two columns")
            try:
                xs.append(float(parts[0]))
                ys.append(float(parts[1]))
            except ValueError:
                raise ValueError(f"line {idx}: non-numeric sample") from None
    return TabulatedCombat(np.array(xs), np.array(ys))


# ---------------------------------------------------------------------------
# Shape validation


@dataclass(frozen=True)
class ShapeViolation:
    kind: str
    x: float
    detail: str


@dataclass
class ShapeReport:
    violations: list = field(default_factory=list)
    matches: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _second_differences(y: np.ndarray) -> np.ndarray:
    return y[2:] - 2.0 * y[1:-1] + y[:-2]


def validate_shape(f: CombatFunction, samples: int = 10001, tol: float = 1e-9) -> ShapeReport:
    """Grid-check endpoints, monotonicity, and the family's curvature pattern.

    Returns a report listing violations; an empty list means the function
    satisfies its family's defining shape on the grid. For tabulated
    functions the report also lists which family patterns the samples match.
    """
    report = ShapeReport()
    xs = np.linspace(0.0, 1.0, samples)
    ys = np.asarray(f.eval_rb(xs), dtype=np.float64)

    if abs(ys[0]) > 1e-12:
        report.violations.append(ShapeViolation("endpoint", 0.0, f"f(0) = {ys[0]!r}"))
    if abs(ys[-1] - 1.0) > 1e-12:
        report.violations.append(ShapeViolation("endpoint", 1.0, f"f(1) = {ys[-1]!r}"))

    drops = np.flatnonzero(np.diff(ys) < -tol)
    if drops.size:
        i = int(drops[0])
        report.violations.append(
            ShapeViolation("monotonicity", float(xs[i]), f"f decreases past x={xs[i]:.6f}")
        )

    def check_pattern(family: str) -> list:
        """Violations of one family's sign pattern on the sampled grid."""
        out = []
        interior = slice(1, -1)
        sd = _second_differences(ys)
        if family == "type1":
            bad = ~np.isin(np.round(ys * 2), (0.0, 1.0, 2.0))
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                out.append(ShapeViolation("range", float(xs[i]), "value not in {0, 1/2, 1}"))
        elif family == "type2":
            thr = f.threshold if f.threshold is not None else 0.5
            conv = xs[1:-1] < thr - tol
            conc = xs[1:-1] > thr + tol
            if np.any(sd[conv] < -tol):
                i = int(np.flatnonzero(sd[conv] < -tol)[0])
                out.append(ShapeViolation("curvature", float(xs[1:-1][conv][i]), "not convex below threshold"))
            if np.any(sd[conc] > tol):
                i = int(np.flatnonzero(sd[conc] > tol)[0])
                out.append(ShapeViolation("curvature", float(xs[1:-1][conc][i]), "not concave above threshold"))
            below = (xs > tol) & (xs < thr - tol)
            above = (xs > thr + tol) & (xs < 1 - tol)
            if np.any(ys[below] >= xs[below]):
                out.append(ShapeViolation("ordering", thr, "f >= x below threshold"))
            if np.any(ys[above] <= xs[above]):
                out.append(ShapeViolation("ordering", thr, "f <= x above threshold"))
        elif family == "type3":
            if np.any(sd > tol):
                i = int(np.flatnonzero(sd > tol)[0])
                out.append(ShapeViolation("curvature", float(xs[interior][i]), "not concave"))
            inside = (xs > tol) & (xs < 1 - tol)
            if np.any(ys[inside] < xs[inside]):
                out.append(ShapeViolation("ordering", 0.5, "f < x inside (0, 1)"))
        elif family == "type4":
            if np.any(sd < -tol):
                i = int(np.flatnonzero(sd < -tol)[0])
                out.append(ShapeViolation("curvature", float(xs[interior][i]), "not convex"))
            inside = (xs > tol) & (xs < 1 - tol)
            if np.any(ys[inside] > xs[inside]):
                out.append(ShapeViolation("ordering", 0.5, "f > x inside (0, 1)"))
        return out

    if f.family in ("type1", "type2", "type3", "type4"):
        report.violations.extend(check_pattern(f.family))
    else:
        # Tabulated samples: classify against every pattern.
        for fam in ("type1", "type2", "type3", "type4"):
            if not check_pattern(fam):
                report.matches.append(fam)
    return report
