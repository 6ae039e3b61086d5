"""Matrix-free QREM Hamiltonian and its lowest eigenpairs.

H = diag(E) + gamma * sum_b sigma^x_b, i.e. H[a, a] = E[a] and H[a, a ^ (1 << b)] = +gamma.

The eigensolver is a thick-restart Lanczos iteration with full (two-pass
Gram-Schmidt) reorthogonalization against every retained basis vector.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg

from .errors import CapacityError, ConvergenceError, ValidationError
from .model import EnergyTable

DEFAULT_TOL = 1e-10
DEFAULT_MAX_BASIS = 40
DEFAULT_BASIS_BYTES = 1024**3
DENSE_MAX_N = 14
_DGKS = 1 / np.sqrt(2.0)


@numba.njit(nogil=True, cache=True)
def _apply_block(energies, gamma, n, x, y, start, stop):
    # per-element fixed summation order: results do not depend on the block split
    for a in range(start, stop):
        acc = x[a] * 0
        for b in range(n):
            acc += x[a ^ (1 << b)]
        y[a] = energies[a] * x[a] + gamma * acc


@dataclass(frozen=True, eq=False)
class HamiltonianView:
    """Lazy QREM operator for one energy table at one transverse field."""

    table: EnergyTable
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValidationError(f"gamma must be finite and >= 0, got {self.gamma}")
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self):
        return self.table.n

    @property
    def dim(self):
        return self.table.dim

    @property
    def norm_estimate(self):
        """Gershgorin bound max|E| + gamma * n."""
        return float(np.max(np.abs(self.table.energies))) + self.gamma * self.n

    def matvec(self, x, out=None, threads=1):
        return apply_hamiltonian(self, x, out=out, threads=threads)


def apply_hamiltonian(h: HamiltonianView, x, out=None, threads=1):
    """Return H @ x without forming H.

    With ``threads`` > 1 the output is split into contiguous index blocks
    filled concurrently; ``x`` is only read, and each output block is
    written by exactly one worker.
    """
    x = np.asarray(x)
    if x.shape != (h.dim,):
        raise ValidationError(f"state has shape {x.shape}, operator dimension is {h.dim}")
    dtype = np.result_type(x.dtype, np.float64)
    if x.dtype != dtype or not x.flags.c_contiguous:
        x = np.ascontiguousarray(x, dtype=dtype)
    if out is None:
        out = np.empty(h.dim, dtype=dtype)
    elif out.shape != (h.dim,) or out.dtype != dtype or out is x:
        raise ValidationError("out must be a distinct array matching the state")
    energies = h.table.energies
    if threads <= 1 or h.dim < 4096:
        _apply_block(energies, h.gamma, h.n, x, out, 0, h.dim)
        return out
    edges = np.linspace(0, h.dim, threads + 1).astype(np.int64)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_apply_block, energies, h.gamma, h.n, x, out, int(a), int(b))
            for a, b in zip(edges[:-1], edges[1:])
        ]
        for f in futures:
            f.result()
    return out


def dense_matrix(h: HamiltonianView, max_n=DENSE_MAX_N):
    if h.n > max_n:
        raise CapacityError(f"dense matrix refused for n={h.n} (cap {max_n})")
    dim = h.dim
    m = np.diag(np.array(h.table.energies))
    idx = np.arange(dim)
    for b in range(h.n):
        m[idx, idx ^ (1 << b)] = h.gamma
    return m


def dense_spectrum(h: HamiltonianView, max_n=DENSE_MAX_N):
    """All eigenvalues, ascending, from the explicitly built matrix (small n only)."""
    return scipy.linalg.eigvalsh(dense_matrix(h, max_n), check_finite=False)


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    iterations: int
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    restarts: int = 0
    converged: bool = True
    norm_estimate: float = 0.0
    tol: float = DEFAULT_TOL
    clusters: list = field(default_factory=list)

    @property
    def gap(self):
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    def to_dict(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residual_norms": [float(v) for v in self.residual_norms],
            "iterations": int(self.iterations),
            "restarts": int(self.restarts),
            "converged": bool(self.converged),
            "norm_estimate": float(self.norm_estimate),
            "tol": float(self.tol),
            "clusters": [list(map(int, c)) for c in self.clusters],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(
            eigenvalues=np.array(d["eigenvalues"], dtype=float),
            residual_norms=np.array(d["residual_norms"], dtype=float),
            iterations=int(d["iterations"]),
            restarts=int(d.get("restarts", 0)),
            converged=bool(d.get("converged", True)),
            norm_estimate=float(d.get("norm_estimate", 0.0)),
            tol=float(d.get("tol", DEFAULT_TOL)),
            clusters=[list(c) for c in d.get("clusters", [])],
        )

    def save_vectors(self, path):
        """Binary sidecar: raw little-endian float64 array of shape (k, dim)."""
        if self.eigenvectors is None:
            raise ValidationError("no eigenvectors to save")
        np.save(path, np.ascontiguousarray(self.eigenvectors, dtype="<f8"))


def start_vector(dim, seed, gamma):
    """Deterministic pseudo-random unit vector keyed on (seed, gamma)."""
    key = [int(seed) % 2**64, int(np.float64(gamma).view(np.uint64))]
    rng = np.random.Generator(np.random.Philox(key=key))
    v = rng.uniform(-1.0, 1.0, dim)
    return v / np.linalg.norm(v)


def degenerate_clusters(values, width):
    clusters = []
    current = [0]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] < width:
            current.append(i)
        else:
            if len(current) > 1:
                clusters.append(current)
            current = [i]
    if len(current) > 1:
        clusters.append(current)
    return clusters


def _orthogonalize(basis, w):
    """Project ``w`` off the rows of ``basis``; return the coefficients.

    The two newest vectors are removed first (the three-term part), then one
    full classical Gram-Schmidt pass, repeated only if it cancelled most of
    ``w`` (DGKS criterion).
    """
    m = basis.shape[0]
    h = np.zeros(m)
    for i in range(max(0, m - 2), m):
        c = basis[i] @ w
        w -= c * basis[i]
        h[i] += c
    before = np.linalg.norm(w)
    for _ in range(2):
        c = basis @ w
        w -= c @ basis
        h += c
        after = np.linalg.norm(w)
        if after > _DGKS * before:
            break
        before = after
    return h


def _diagonal_pairs(h, k, tol, norm_est, return_vectors):
    """Exact answer for gamma = 0: the k smallest energies and their basis states."""
    order = np.argsort(h.table.energies, kind="stable")[:k]
    values = np.array(h.table.energies[order])
    vectors = None
    if return_vectors:
        vectors = np.zeros((k, h.dim))
        vectors[np.arange(k), order] = 1.0
    return SpectrumResult(
        eigenvalues=values,
        residual_norms=np.zeros(k),
        iterations=0,
        eigenvectors=vectors,
        norm_estimate=norm_est,
        tol=tol,
        clusters=degenerate_clusters(values, 10 * tol * norm_est),
    )


def lowest_eigenpairs(
    h: HamiltonianView,
    k: int = 2,
    tol: float = DEFAULT_TOL,
    *,
    v0=None,
    seed: int = 0,
    return_vectors: bool = False,
    max_basis: int | None = None,
    basis_bytes: int = DEFAULT_BASIS_BYTES,
    max_restarts: int = 200,
    threads: int = 1,
) -> SpectrumResult:
    """The ``k`` smallest eigenpairs of ``h`` by thick-restart Lanczos.

    Convergence requires ``||H u - theta u|| <= tol * (|theta| + ||H||_est)``
    for each wanted Ritz pair.  ``v0`` seeds the Krylov space (warm start);
    otherwise a vector keyed on ``(seed, gamma)`` is used.  The basis holds
    at most ``max_basis`` vectors (default max(40, 2k + 10)) and at most
    ``basis_bytes`` of memory; beyond that the solver restarts.  Raises
    ConvergenceError carrying the best partial result when ``max_restarts``
    cycles do not suffice.
    """
    dim = h.dim
    if not 1 <= k <= dim:
        raise ValidationError(f"need 1 <= k <= 2**n = {dim}, got k={k}")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    norm_est = max(h.norm_estimate, np.finfo(float).tiny)
    if h.gamma == 0.0:
        return _diagonal_pairs(h, k, tol, norm_est, return_vectors)

    budget = basis_bytes // (8 * dim)
    if budget < min(dim, k + 2):
        raise CapacityError(
            f"basis budget of {basis_bytes} bytes allows only {budget} vectors of length {dim}"
        )
    wanted = max(DEFAULT_MAX_BASIS, 2 * k + 10) if max_basis is None else max(max_basis, k + 2)
    m_max = min(dim, budget, wanted)
    keep = min(m_max - 1, k + max(2, (m_max - k) // 3))

    V = np.empty((m_max, dim))
    T = np.zeros((m_max, m_max))
    if v0 is None:
        v = start_vector(dim, seed, h.gamma)
    else:
        v = np.array(v0, dtype=float).reshape(dim)
    nv = np.linalg.norm(v)
    if not np.isfinite(nv) or nv == 0:
        raise ValidationError("start vector must be finite and nonzero")
    V[0] = v / nv

    breakdown = 64 * np.finfo(float).eps * norm_est
    refill = np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, 0x5EED]))
    w = np.empty(dim)
    size = 1  # basis vectors currently held
    iterations = 0
    restarts = 0
    theta = S = None
    beta = 0.0
    done = False

    def ritz(j):
        vals, vecs = np.linalg.eigh(T[:j, :j])
        return vals, vecs

    while True:
        j = size - 1
        while True:
            apply_hamiltonian(h, V[j], out=w, threads=threads)
            iterations += 1
            hcol = _orthogonalize(V[: j + 1], w)
            T[: j + 1, j] = hcol
            T[j, : j + 1] = hcol
            beta = float(np.linalg.norm(w))
            m = j + 1
            exhausted = m == dim
            check = exhausted or m == m_max or m >= k and (m < 40 or m % 4 == 0)
            if check:
                theta, S = ritz(m)
                res = beta * np.abs(S[m - 1, :k])
                # at a breakdown the Ritz values are exact but may miss multiplicities
                if exhausted or (
                    beta > breakdown and np.all(res <= tol * (np.abs(theta[:k]) + norm_est))
                ):
                    done = True
                    break
            if m == m_max:
                break
            if beta <= breakdown:
                # invariant subspace: continue with a fresh direction orthogonal to the basis
                r = refill.uniform(-1.0, 1.0, dim)
                for _ in range(2):
                    r -= (V[:m] @ r) @ V[:m]
                V[m] = r / np.linalg.norm(r)
                beta = 0.0
            else:
                V[m] = w / beta
            j = m
        if done:
            break
        if restarts >= max_restarts:
            break
        restarts += 1
        # thick restart: keep the lowest Ritz vectors plus the residual direction
        p = keep
        V[:p] = S[:, :p].T @ V[:m]
        T[:] = 0.0
        T[np.arange(p), np.arange(p)] = theta[:p]
        if beta <= breakdown:
            r = refill.uniform(-1.0, 1.0, dim)
            for _ in range(2):
                r -= (V[:p] @ r) @ V[:p]
            V[p] = r / np.linalg.norm(r)
        else:
            V[p] = w / beta
            coupling = beta * S[m - 1, :p]
            T[p, :p] = coupling
            T[:p, p] = coupling
        size = p + 1

    U = S[:, :k].T @ V[:m]
    U /= np.linalg.norm(U, axis=1)[:, None]
    residuals = np.empty(k)
    for i in range(k):
        apply_hamiltonian(h, U[i], out=w, threads=threads)
        w -= theta[i] * U[i]
        residuals[i] = np.linalg.norm(w)
    width = 10 * tol * norm_est
    result = SpectrumResult(
        eigenvalues=np.array(theta[:k]),
        residual_norms=residuals,
        iterations=iterations,
        eigenvectors=U if return_vectors else None,
        restarts=restarts,
        converged=done,
        norm_estimate=norm_est,
        tol=tol,
        clusters=degenerate_clusters(theta[:k], width),
    )
    if not done:
        raise ConvergenceError(
            f"Lanczos did not converge for k={k} at gamma={h.gamma} after "
            f"{iterations} matvecs; residuals {residuals.tolist()}",
            result,
        )
    return result
