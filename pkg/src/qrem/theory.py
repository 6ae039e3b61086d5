"""Closed-form predictions for the quantum random energy model.

Energies are per spin (intensive) unless a function takes ``n`` and says
otherwise.  Conventions:

* classical REM: s(e) = ln 2 - e**2, ground density e0 = -sqrt(ln 2),
  freezing temperature T_c = 1 / (2 sqrt(ln 2)) from 1/T_c = s'(e0).
  (The value 1/sqrt(ln 2) is sometimes quoted for T_c; it does not satisfy
  1/T_c = s'(e0) and is not used here.)
* quantum paramagnet: f_para = -T ln(2 cosh(gamma / T)), -gamma at T = 0.
* the two-level crossing model treats the paramagnet level as the
  extensive energy -gamma * n.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LN2 = math.log(2.0)
SQRT_LN2 = math.sqrt(LN2)

FROZEN = "frozen-classical"
UNFROZEN = "unfrozen-classical"
QUANTUM = "quantum-paramagnet"
PHASES = (FROZEN, UNFROZEN, QUANTUM)


def entropy_density(e, strict=False):
    """Microcanonical entropy per spin of the classical REM, ln 2 - e**2.

    Outside ``|e| <= sqrt(ln 2)`` the typical sample has no configurations;
    the analytic value is returned with a warning, or ValidationError is
    raised when ``strict``.
    """
    e = np.asarray(e, dtype=float)
    outside = np.abs(e) > SQRT_LN2 * (1 + 1e-15)
    if np.any(outside):
        msg = "energy density outside [-sqrt(ln2), sqrt(ln2)]: zero-measure region"
        if strict:
            raise ValidationError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    s = LN2 - e * e
    return float(s) if s.ndim == 0 else s


def critical_temperature():
    return 1.0 / (2.0 * SQRT_LN2)


def free_energy_rem(T):
    """Free energy per spin of the classical REM (frozen below T_c)."""
    if T < 0:
        raise ValidationError(f"temperature must be >= 0, got {T}")
    if T <= critical_temperature():
        return -SQRT_LN2
    return -1.0 / (4.0 * T) - T * LN2


def free_energy_para(T, gamma):
    """Free energy per spin of n free spins in a transverse field."""
    if T < 0 or gamma < 0:
        raise ValidationError("T and gamma must be >= 0")
    if T == 0:
        return -float(gamma)
    x = gamma / T
    # ln(2 cosh x) = x + log1p(exp(-2x)) for x >= 0
    return -T * (x + math.log1p(math.exp(-2.0 * x)))


def transition_gamma(T, bracket=(0.0, 10.0), tol=1e-10):
    """Field at which the paramagnet and the REM free energies are equal.

    Bisection on ``bracket`` followed by secant polishing.
    """
    if T < 0:
        raise ValidationError(f"temperature must be >= 0, got {T}")
    if T == 0:
        return SQRT_LN2
    f_rem = free_energy_rem(T)

    def g(gamma):
        return free_energy_para(T, gamma) - f_rem

    lo, hi = bracket
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0:
        return lo
    if g_lo * g_hi > 0:
        raise ValidationError(
            f"no phase boundary in gamma bracket {bracket} at T={T}: "
            f"f_para - f_REM = {g_lo:.3g}, {g_hi:.3g} at the ends"
        )
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    # secant polish, kept inside the bracket
    x0, x1, g0, g1 = lo, hi, g_lo, g_hi
    for _ in range(50):
        if g1 == g0:
            break
        x2 = x1 - g1 * (x1 - x0) / (g1 - g0)
        if not lo <= x2 <= hi:
            x2 = 0.5 * (lo + hi)
        x0, g0, x1, g1 = x1, g1, x2, g(x2)
        if abs(x1 - x0) < tol or g1 == 0:
            break
    return x1


@dataclass(frozen=True)
class PhasePoint:
    temperature: float
    gamma: float
    phase: str
    free_energy_density: float


def phase_point(T, gamma) -> PhasePoint:
    """Equilibrium phase: the lower of the REM and paramagnet free energies."""
    f_rem = free_energy_rem(T)
    f_para = free_energy_para(T, gamma)
    if f_para < f_rem:
        return PhasePoint(T, gamma, QUANTUM, f_para)
    label = FROZEN if T <= critical_temperature() else UNFROZEN
    return PhasePoint(T, gamma, label, f_rem)


def phase_grid(temperatures, gammas):
    """PhasePoints for every (T, gamma) pair, rows indexed by temperature."""
    return [[phase_point(float(T), float(g)) for g in gammas] for T in temperatures]


def perturbed_energy_classical(eps, gamma, n):
    """Second-order shift of an extensive classical level: eps + gamma**2 / (n eps)."""
    if eps == 0:
        raise ValidationError("eps = 0 is not an extensive level; expansion is singular")
    return eps + gamma * gamma / (n * eps)


def perturbed_energy_quantum(gamma, n):
    """Large-field expansion of the ground energy per spin: -gamma - 1/(2 n gamma)."""
    if gamma <= 0:
        raise ValidationError("the large-field expansion needs gamma > 0")
    return -gamma - 1.0 / (2.0 * n * gamma)


@dataclass(frozen=True)
class CrossingModel:
    """Spin-glass vacuum at ``e_classical`` against the paramagnet at -gamma*n."""

    e_classical: float
    n: int
    overlap_sq: float | None = None

    def __post_init__(self):
        if not self.e_classical < 0:
            raise ValidationError("e_classical must be negative")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.overlap_sq is None:
            object.__setattr__(self, "overlap_sq", 2.0 ** (-self.n))
        if not 0.0 <= self.overlap_sq <= 1.0:
            raise ValidationError("overlap_sq must lie in [0, 1]")


def two_level_gap(model: CrossingModel, gamma):
    """Gap of E0 |SG><SG| - gamma n |QP><QP| restricted to span{SG, QP}."""
    e0 = model.e_classical
    x = gamma * model.n
    radicand = (x + e0) ** 2 - 4.0 * e0 * x * model.overlap_sq
    return math.sqrt(max(radicand, 0.0))


def two_level_gap_argmin(model: CrossingModel):
    """Field minimising two_level_gap: gamma * n = |E0| (1 - 2 overlap_sq)."""
    return abs(model.e_classical) * (1.0 - 2.0 * model.overlap_sq) / model.n


def min_gap_prediction(e_classical, n):
    """(2 |E0| 2**(-n/2), |E0| / n): minimal gap and where it sits."""
    if not e_classical < 0:
        raise ValidationError("e_classical must be negative")
    return 2.0 * abs(e_classical) * 2.0 ** (-n / 2.0), abs(e_classical) / n


def annealing_time_estimate(min_gap, c=1.0):
    """tau = c / gap**2; only ratios between sizes are meaningful."""
    if not min_gap > 0:
        raise ValidationError(f"gap must be positive, got {min_gap}")
    return c / (min_gap * min_gap)


def typical_ground_energy(n):
    """Leading-order ground energy -n sqrt(ln 2)."""
    return -n * SQRT_LN2


def prediction_table(sizes):
    """Rows of leading-order predictions for a list of spin counts."""
    rows = []
    for n in sizes:
        e0 = typical_ground_energy(n)
        gap, gamma = min_gap_prediction(e0, n)
        rows.append(
            {
                "n": int(n),
                "e_classical": e0,
                "min_gap": gap,
                "gamma_star": gamma,
                "tau_estimate": annealing_time_estimate(gap),
            }
        )
    return rows
