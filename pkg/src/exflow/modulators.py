"""Modulating functions Psi on (0, inf) and sampled checks of their sign conditions."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .names import UnknownNameError, format_name, parse_name

EQ_TOL = 1e-12
DEFAULT_GRID = (1e-3, 1e3, 200)

# integer codes shared with the compiled kernels in ``kernels``
FAMILY_CODES = {
    "identity": 0,
    "sqrt_shift": 1,
    "softplus": 2,
    "logcosh_shift": 3,
    "neg_power": 4,
    "neg_log_recip": 5,
    "neg_log_ratio": 6,
    "neg_arctan_recip": 7,
    "shifted_exp": 8,
}

CONVEX_THEOREM_FAMILIES = ("identity", "sqrt_shift", "softplus", "logcosh_shift")
INVERSE_CONCAVE_THEOREM_FAMILIES = (
    "neg_power",
    "neg_log_recip",
    "neg_log_ratio",
    "neg_arctan_recip",
    "shifted_exp",
)

# log(1+s)/s = sum_j (-1)^j s^j / (j+1); used below this threshold to avoid cancellation
_SERIES_CUTOFF = 1e-2
_SERIES_TERMS = 10


class DomainError(ValueError):
    pass


def _log_ratio_series(s, order):
    """order-th derivative of log(1+s)/s from its power series."""
    out = np.zeros_like(s)
    for j in range(order, _SERIES_TERMS + order):
        coeff = (-1.0) ** j / (j + 1)
        for m in range(order):
            coeff *= j - m
        out = out + coeff * s ** (j - order)
    return out


@dataclass(frozen=True)
class Modulator:
    family: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILY_CODES:
            raise UnknownNameError(f"unknown modulator {self.family!r}")
        if self.family == "neg_power" and not self.alpha > 0:
            raise ValueError("neg_power needs alpha > 0")

    @property
    def code(self):
        return FAMILY_CODES[self.family]

    @property
    def name(self):
        if self.family == "neg_power":
            return format_name("neg_power", {"alpha": self.alpha})
        return self.family

    def _arg(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(~(s > 0)):
            raise DomainError(f"{self.name} is defined on (0, inf); got min {np.min(s)!r}")
        return s

    def psi(self, s):
        s = self._arg(s)
        fam, a = self.family, self.alpha
        if fam == "identity":
            return s.copy()
        if fam == "sqrt_shift":
            return np.hypot(s, 1.0)
        if fam == "softplus":
            return np.logaddexp(0.0, s)
        if fam == "logcosh_shift":
            return np.logaddexp(s, -s)
        if fam == "neg_power":
            return -(s ** -a)
        if fam == "neg_log_recip":
            return -np.log1p(1.0 / s)
        if fam == "neg_log_ratio":
            small = s < _SERIES_CUTOFF
            safe = np.where(small, 1.0, s)
            return -np.where(small, _log_ratio_series(s, 0), np.log1p(safe) / safe)
        if fam == "neg_arctan_recip":
            return -np.arctan(1.0 / s)
        return s - np.exp(-s)

    def dpsi(self, s):
        s = self._arg(s)
        fam, a = self.family, self.alpha
        if fam == "identity":
            return np.ones_like(s)
        if fam == "sqrt_shift":
            return s / np.hypot(s, 1.0)
        if fam == "softplus":
            return expit(s)
        if fam == "logcosh_shift":
            return np.tanh(s)
        if fam == "neg_power":
            return a * s ** (-a - 1.0)
        if fam == "neg_log_recip":
            return 1.0 / (s * (s + 1.0))
        if fam == "neg_log_ratio":
            small = s < _SERIES_CUTOFF
            t = np.where(small, 1.0, s)
            exact = np.log1p(t) / t**2 - 1.0 / (t * (1.0 + t))
            return -np.where(small, _log_ratio_series(s, 1), -exact)
        if fam == "neg_arctan_recip":
            return 1.0 / (s * s + 1.0)
        return 1.0 + np.exp(-s)

    def ddpsi(self, s):
        s = self._arg(s)
        fam, a = self.family, self.alpha
        if fam == "identity":
            return np.zeros_like(s)
        if fam == "sqrt_shift":
            return (s * s + 1.0) ** -1.5
        if fam == "softplus":
            e = expit(s)
            return e * (1.0 - e)
        if fam == "logcosh_shift":
            return 1.0 / np.cosh(np.minimum(s, 350.0)) ** 2
        if fam == "neg_power":
            return -a * (a + 1.0) * s ** (-a - 2.0)
        if fam == "neg_log_recip":
            return -(2.0 * s + 1.0) / (s * (s + 1.0)) ** 2
        if fam == "neg_log_ratio":
            small = s < _SERIES_CUTOFF
            t = np.where(small, 1.0, s)
            exact = (
                1.0 / ((1.0 + t) * t**2)
                - 2.0 * np.log1p(t) / t**3
                + (1.0 + 2.0 * t) / (t**2 * (1.0 + t) ** 2)
            )
            return np.where(small, -_log_ratio_series(s, 2), exact)
        if fam == "neg_arctan_recip":
            return -2.0 * s / (s * s + 1.0) ** 2
        return -np.exp(-s)

    def __call__(self, s):
        return self.psi(s)


def psi(m, s):
    return m.psi(s)


def dpsi(m, s):
    return m.dpsi(s)


def ddpsi(m, s):
    return m.ddpsi(s)


def make_modulator(name):
    family, params = parse_name(name)
    if family not in FAMILY_CODES:
        raise UnknownNameError(f"unknown modulator {name!r}")
    if family == "neg_power":
        if "alpha" not in params:
            raise UnknownNameError(f"{name!r} needs alpha, e.g. neg_power:alpha=0.5")
        return Modulator("neg_power", float(params["alpha"]))
    if params:
        raise UnknownNameError(f"{family} takes no parameters, got {name!r}")
    return Modulator(family)


def log_grid(lo=DEFAULT_GRID[0], hi=DEFAULT_GRID[1], num=DEFAULT_GRID[2]):
    return np.geomspace(lo, hi, int(num))


CONDITIONS = ("i", "iia", "iib", "iiia", "iiib", "iv")


@dataclass(frozen=True)
class ConditionFlag:
    holds: bool
    witness_s: float = None
    value: float = None

    def to_dict(self):
        if self.holds:
            return {"status": "holds-on-grid"}
        return {"status": "violated", "witness_s": self.witness_s, "value": self.value}


@dataclass(frozen=True)
class ConditionReport:
    modulator: str
    flags: dict
    grid: dict = field(default_factory=dict)

    def holds(self, *names):
        return all(self.flags[n].holds for n in names)

    def to_dict(self):
        return {
            "modulator": self.modulator,
            "grid": self.grid,
            "conditions": {k: self.flags[k].to_dict() for k in CONDITIONS},
        }


def condition_values(m, s):
    """Signed quantities whose sign decides each condition, plus their magnitudes.

    A value >= 0 means the condition holds at that point.  The magnitude is
    the sum of absolute values of the summands; equality tests are scaled by
    it so exact-equality families (Psi(s) = s, -1/s) are not flagged by
    roundoff where the summands are large.
    """
    p, dp, ddp = m.psi(s), m.dpsi(s), m.ddpsi(s)
    one = np.ones_like(s)
    return {
        "i": (dp, one),
        "iia": (-(dp * s - p), np.abs(dp * s) + np.abs(p)),
        "iib": (dp * s - p, np.abs(dp * s) + np.abs(p)),
        "iiia": (ddp, np.abs(ddp) + np.abs(dp) / s),
        "iiib": (-ddp, np.abs(ddp) + np.abs(dp) / s),
        "iv": (ddp * s + 2.0 * dp, np.abs(ddp * s) + 2.0 * np.abs(dp)),
    }


def check_conditions(m, grid=None, tol=EQ_TOL):
    """Evaluate every condition pointwise; the witness is the smallest violating s.

    Condition (i) is strict (Psi' > 0).  The others are non-strict and accept
    values down to ``-tol * max(1, magnitude)``.
    """
    s = log_grid() if grid is None else np.asarray(grid, dtype=float)
    if s.size == 0 or np.any(~(s > 0)):
        raise DomainError("condition grid must be nonempty and positive")
    s = np.sort(s)
    values = condition_values(m, s)
    flags = {}
    for name in CONDITIONS:
        v, mag = values[name]
        bad = v <= 0.0 if name == "i" else v < -tol * np.maximum(1.0, mag)
        if np.any(bad):
            j = int(np.argmax(bad))
            flags[name] = ConditionFlag(False, float(s[j]), float(v[j]))
        else:
            flags[name] = ConditionFlag(True)
    desc = {"points": int(s.size), "min": float(s[0]), "max": float(s[-1]), "spacing": "log"}
    return ConditionReport(m.name, flags, desc)


CONVEX_REGIME = "convex-theorem-applies"
INVERSE_CONCAVE_REGIME = "inverse-concave-theorem-applies"
BOTH_REGIMES = "both"
NO_REGIME = "neither"


def classify_regime(m, f_is_convex, f_is_inverse_concave, report=None):
    report = check_conditions(m) if report is None else report
    convex = f_is_convex and report.holds("i", "iia", "iiia")
    inv = f_is_inverse_concave and report.holds("i", "iib", "iiib", "iv")
    if convex and inv:
        return BOTH_REGIMES
    if convex:
        return CONVEX_REGIME
    if inv:
        return INVERSE_CONCAVE_REGIME
    return NO_REGIME


def regime_tracks(regime):
    """(track Z sign, track u monotonicity) for a regime tag."""
    return (
        regime in (CONVEX_REGIME, BOTH_REGIMES),
        regime in (INVERSE_CONCAVE_REGIME, BOTH_REGIMES),
    )
