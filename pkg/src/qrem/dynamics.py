"""Closed-system quantum annealing of a QREM sample.

The state starts in the ground state of H(gamma_max) and is propagated
under a piecewise-constant Hamiltonian: on each step the field is frozen
at its midpoint value and exp(-i dt H) is applied to the current state
through a Lanczos (Krylov) projection.  Steps satisfy
``||H||_est * dt <= dt_control`` and are subdivided near the predicted
crossing so the field moves by at most a tenth of the predicted crossing
width per step.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from . import theory
from .errors import ConvergenceError, NormDriftError, ValidationError
from .model import EnergyTable, ground_state_energy
from .spectral import HamiltonianView, lowest_eigenpairs

DEFAULT_GAMMA_MAX = 3.0 * theory.SQRT_LN2
DYNAMICS_MAX_N = 14
NORM_TOL = 1e-8

_PROFILES = {
    "linear": lambda s: 1.0 - s,
    "quadratic": lambda s: (1.0 - s) ** 2,
    "constant": lambda s: 1.0,
}


@dataclass(frozen=True)
class Schedule:
    """Field profile gamma(t) = gamma_max * shape(t / total_time).

    ``profile`` names a built-in shape or is a callable on [0, 1].  Annealing
    shapes must start at 1 and end at 0; "constant" freezes the field and
    is meant for stationarity checks.
    """

    total_time: float
    gamma_max: float = DEFAULT_GAMMA_MAX
    profile: object = "linear"

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValidationError(f"total time must be positive, got {self.total_time}")
        if not self.gamma_max >= 0:
            raise ValidationError("gamma_max must be >= 0")
        if isinstance(self.profile, str) and self.profile not in _PROFILES:
            raise ValidationError(f"unknown schedule profile {self.profile!r}")
        if not self.frozen:
            if abs(self.shape(0.0) - 1.0) > 1e-12 or abs(self.shape(1.0)) > 1e-12:
                raise ValidationError("annealing profile must satisfy shape(0)=1, shape(1)=0")

    @property
    def frozen(self):
        return self.profile == "constant"

    def shape(self, s):
        fn = _PROFILES[self.profile] if isinstance(self.profile, str) else self.profile
        return fn(s)

    def gamma(self, s):
        """Field at fractional time s in [0, 1]."""
        return self.gamma_max * self.shape(s)

    def gamma_at_time(self, t):
        return self.gamma(np.asarray(t) / self.total_time)


@dataclass
class AnnealOutcome:
    tau: float
    success_probability: float
    norm_error: float
    steps: int
    initial_success: float
    energy_initial: float
    energy_final: float
    max_step_error: float
    mean_krylov_dim: float

    def to_dict(self):
        return asdict(self)


@numba.njit(cache=True)
def _propagate(energies, n, gammas, dts, psi, tol, m_max):
    dim = psi.size
    V = np.empty((m_max + 1, dim), dtype=np.complex128)
    w = np.empty(dim, dtype=np.complex128)
    alpha = np.empty(m_max)
    beta = np.empty(m_max)
    max_err = 0.0
    krylov_total = 0
    for s in range(gammas.size):
        g = gammas[s]
        dt = dts[s]
        beta0 = np.sqrt(np.sum(psi.real ** 2 + psi.imag ** 2))
        for a in range(dim):
            V[0, a] = psi[a] / beta0
        m = 0
        err = 0.0
        coef = np.zeros(1, dtype=np.complex128)
        for j in range(m_max):
            for a in range(dim):
                acc = 0j
                for b in range(n):
                    acc += V[j, a ^ (1 << b)]
                w[a] = energies[a] * V[j, a] + g * acc
            for i in range(j + 1):
                c = np.vdot(V[i], w)
                for a in range(dim):
                    w[a] -= c * V[i, a]
                if i == j:
                    alpha[j] = c.real
            # local second pass; the basis stays short, so drift elsewhere is negligible
            for i in range(max(0, j - 1), j + 1):
                c = np.vdot(V[i], w)
                for a in range(dim):
                    w[a] -= c * V[i, a]
            bnorm = np.sqrt(np.sum(w.real ** 2 + w.imag ** 2))
            beta[j] = bnorm
            m = j + 1
            small = bnorm <= 1e-13 * (abs(alpha[j]) + 1.0)
            if m < 4 and not small and m < dim and m < m_max:
                for a in range(dim):
                    V[j + 1, a] = w[a] / bnorm
                continue
            T = np.zeros((m, m))
            for i in range(m):
                T[i, i] = alpha[i]
                if i + 1 < m:
                    T[i, i + 1] = beta[i]
                    T[i + 1, i] = beta[i]
            evals, evecs = np.linalg.eigh(T)
            phase = np.exp(-1j * dt * evals)
            coef = np.zeros(m, dtype=np.complex128)
            for i in range(m):
                for q in range(m):
                    coef[i] += evecs[i, q] * phase[q] * evecs[0, q]
            err = beta0 * bnorm * abs(coef[m - 1])
            if err <= tol or small or m == dim:
                break
            if j + 1 < m_max:
                for a in range(dim):
                    V[j + 1, a] = w[a] / bnorm
        if err > tol:
            return -(s + 1), err, krylov_total
        max_err = max(max_err, err)
        krylov_total += m
        for a in range(dim):
            acc = 0j
            for i in range(m):
                acc += coef[i] * V[i, a]
            psi[a] = beta0 * acc
    return 0, max_err, krylov_total


def _field(schedule, times):
    s = np.asarray(times, dtype=float) / schedule.total_time
    try:
        shape = np.asarray(schedule.shape(s), dtype=float)
    except (TypeError, ValueError):
        shape = np.array([schedule.shape(float(x)) for x in s])
    return schedule.gamma_max * np.broadcast_to(shape, s.shape).astype(float)


def step_grid(table: EnergyTable, schedule: Schedule, dt_control=0.5):
    """Step midpoint fields and step lengths covering [0, total_time]."""
    if not dt_control > 0:
        raise ValidationError(f"dt control must be positive, got {dt_control}")
    tau = schedule.total_time
    norm_est = float(np.max(np.abs(table.energies))) + schedule.gamma_max * table.n
    dt_base = dt_control / max(norm_est, 1e-300)
    coarse = max(1, math.ceil(tau / dt_base))
    edges = np.linspace(0.0, tau, coarse + 1)
    g_edges = _field(schedule, edges)

    sub = np.ones(coarse, dtype=np.int64)
    _, e0 = ground_state_energy(table)
    if e0 < 0 and not schedule.frozen:
        pred_gap, gamma_c = theory.min_gap_prediction(e0, table.n)
        dgamma_max = 0.1 * pred_gap / table.n
        near = np.minimum(np.abs(g_edges[:-1] - gamma_c), np.abs(g_edges[1:] - gamma_c)) <= 0.25 * gamma_c
        crosses = (g_edges[:-1] - gamma_c) * (g_edges[1:] - gamma_c) <= 0
        window = near | crosses
        moves = np.abs(np.diff(g_edges))
        sub[window] = np.maximum(1, np.ceil(moves[window] / dgamma_max)).astype(np.int64)

    starts = np.repeat(edges[:-1], sub)
    lengths = np.repeat(np.diff(edges) / sub, sub)
    offsets = np.concatenate([np.arange(k) for k in sub]) if sub.max() > 1 else np.zeros(coarse)
    t0 = starts + offsets * lengths
    mids = t0 + 0.5 * lengths
    gammas = _field(schedule, mids)
    return gammas, lengths


def initial_state(table: EnergyTable, gamma, tol=1e-12):
    """Ground state of H(gamma) as a complex unit vector."""
    res = lowest_eigenpairs(HamiltonianView(table, gamma), 2, tol, seed=table.seed, return_vectors=True)
    return res.eigenvectors[0].astype(np.complex128)


def evolve(
    table: EnergyTable,
    schedule: Schedule,
    dt_control=0.5,
    *,
    krylov_tol=1e-12,
    max_krylov=40,
    norm_tol=NORM_TOL,
    psi0=None,
    return_state=False,
):
    """Anneal from the ground state of H(gamma_max) and measure success.

    Success is |<a0|psi(tau)>|**2 for the classical ground configuration a0.
    Raises NormDriftError if the final norm differs from 1 by more than
    ``norm_tol`` and ConvergenceError if a step's Krylov error estimate
    exceeds ``krylov_tol`` with ``max_krylov`` vectors.
    """
    if table.n > DYNAMICS_MAX_N:
        raise ValidationError(f"dynamics limited to n <= {DYNAMICS_MAX_N}, got n={table.n}")
    ground, _ = ground_state_energy(table)
    if psi0 is None:
        psi0 = initial_state(table, schedule.gamma(0.0))
    psi = np.array(psi0, dtype=np.complex128)
    gammas, dts = step_grid(table, schedule, dt_control)

    h0 = HamiltonianView(table, schedule.gamma(0.0))
    e_init = float(np.vdot(psi, h0.matvec(psi)).real)
    p_init = float(abs(psi[ground.index]) ** 2)

    status, max_err, krylov_total = _propagate(
        table.energies, table.n, gammas, dts, psi, krylov_tol, max_krylov
    )
    if status != 0:
        step = -status - 1
        raise ConvergenceError(
            f"step {step} (gamma={gammas[step]:.6g}, dt={dts[step]:.3g}): Krylov error "
            f"{max_err:.3g} exceeds {krylov_tol:g}; lower dt_control"
        )
    norm_error = abs(float(np.linalg.norm(psi)) - 1.0)
    if norm_error > norm_tol:
        raise NormDriftError(
            f"norm drifted by {norm_error:.3g} over {len(dts)} steps",
            {"norm_error": norm_error, "steps": len(dts), "tau": schedule.total_time},
        )
    h1 = HamiltonianView(table, schedule.gamma(1.0))
    outcome = AnnealOutcome(
        tau=float(schedule.total_time),
        success_probability=float(abs(psi[ground.index]) ** 2),
        norm_error=norm_error,
        steps=int(len(dts)),
        initial_success=p_init,
        energy_initial=e_init,
        energy_final=float(np.vdot(psi, h1.matvec(psi)).real),
        max_step_error=float(max_err),
        mean_krylov_dim=krylov_total / max(1, len(dts)),
    )
    if return_state:
        return outcome, psi
    return outcome


@dataclass
class SuccessCurve:
    outcomes: list
    tau_half: float

    def to_dict(self):
        return {"tau_half": self.tau_half, "outcomes": [o.to_dict() for o in self.outcomes]}


def crossover_time(taus, probs, level=0.5):
    """First tau where success exceeds ``level``, interpolated linearly in log tau."""
    taus = np.asarray(taus, dtype=float)
    probs = np.asarray(probs, dtype=float)
    above = np.nonzero(probs > level)[0]
    if above.size == 0:
        return math.inf
    i = int(above[0])
    if i == 0:
        return float(taus[0])
    t0, t1 = math.log(taus[i - 1]), math.log(taus[i])
    p0, p1 = probs[i - 1], probs[i]
    frac = (level - p0) / (p1 - p0) if p1 != p0 else 1.0
    return float(math.exp(t0 + frac * (t1 - t0)))


def success_curve(
    table: EnergyTable,
    taus,
    gamma_max=DEFAULT_GAMMA_MAX,
    profile="linear",
    dt_control=0.5,
    **kwargs,
) -> SuccessCurve:
    """Independent annealing runs for each tau in a sorted list."""
    taus = [float(t) for t in taus]
    if not taus or any(t <= 0 for t in taus):
        raise ValidationError("tau list must be nonempty and positive")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValidationError("tau list must be sorted")
    psi0 = initial_state(table, Schedule(taus[0], gamma_max, profile).gamma(0.0))
    outcomes = [
        evolve(table, Schedule(t, gamma_max, profile), dt_control, psi0=psi0, **kwargs)
        for t in taus
    ]
    return SuccessCurve(outcomes, crossover_time(taus, [o.success_probability for o in outcomes]))
