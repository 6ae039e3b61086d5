"""Quenched random energy landscape over the n-bit hypercube.

Configurations are integers in ``[0, 2**n)``; bit ``b`` set to 0 means
spin ``b`` points up (sigma^z = +1), set to 1 means down.

Energies are i.i.d. Gaussian with mean 0 and variance n/2 (extensive
convention, E = n * e).  They come from a counter-based generator
(Philox4x64) keyed on ``(seed, n)``: the value at configuration ``a`` is a
function of ``(seed, n, a)`` alone, so any block of the table can be
regenerated independently and the result does not depend on how the
index range is partitioned.  Gaussians are produced by the inverse normal
CDF applied to one 64-bit word per configuration.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import CapacityError, ValidationError

MAX_SPINS = 30
DEFAULT_MAX_BYTES = 2 * 1024**3

# counter-based generator emits 4 words per counter increment
_WORDS_PER_BLOCK = 4
_GEN_CHUNK = 1 << 20

TABLE_MAGIC = b"QREMTBL\x00"
TABLE_VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


def _check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2**64:
        raise ValidationError(f"seed must fit in 64 unsigned bits, got {seed}")


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValidationError(f"n must be an integer, got {n!r}")
    if not 1 <= int(n) <= MAX_SPINS:
        raise ValidationError(f"n must be in [1, {MAX_SPINS}], got {n}")


@dataclass(frozen=True)
class ModelParams:
    n: int
    seed: int = 0
    gamma: float = 0.0

    def __post_init__(self):
        _check_n(self.n)
        _check_seed(self.seed)
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValidationError(f"gamma must be finite and >= 0, got {self.gamma}")

    @property
    def dim(self) -> int:
        return 1 << self.n


@dataclass(frozen=True, eq=False)
class EnergyTable:
    """The 2**n classical energies of one sample (read-only)."""

    n: int
    seed: int
    energies: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_n(self.n)
        _check_seed(self.seed)
        e = np.ascontiguousarray(self.energies, dtype=np.float64)
        if e.shape != (1 << self.n,):
            raise ValidationError(
                f"energy table for n={self.n} needs {1 << self.n} entries, got shape {e.shape}"
            )
        if e is self.energies:
            e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "energies", e)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        if not isinstance(other, EnergyTable):
            return NotImplemented
        return (
            self.n == other.n
            and self.seed == other.seed
            and np.array_equal(self.energies, other.energies)
        )

    __hash__ = None


@dataclass(frozen=True)
class Configuration:
    index: int
    n: int

    def __post_init__(self):
        _check_n(self.n)
        if not 0 <= self.index < (1 << self.n):
            raise ValidationError(f"index {self.index} out of range for n={self.n}")

    @property
    def spins(self) -> np.ndarray:
        """sigma^z values, +1 for a clear bit and -1 for a set bit."""
        bits = (self.index >> np.arange(self.n)) & 1
        return 1 - 2 * bits


def check_capacity(n, max_bytes=DEFAULT_MAX_BYTES, itemsize=8):
    need = (1 << n) * itemsize
    if need > max_bytes:
        raise CapacityError(
            f"n={n} needs {need} bytes per vector, above the budget of {max_bytes} bytes"
        )


def _uniform_to_gaussian(words, scale):
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return scale * ndtri(u)


def energy_block(n, seed, start, stop):
    """Energies of configurations ``start..stop-1`` without building the table."""
    _check_n(n)
    _check_seed(seed)
    dim = 1 << n
    if not 0 <= start <= stop <= dim:
        raise ValidationError(f"block [{start}, {stop}) outside [0, {dim})")
    if start == stop:
        return np.empty(0)
    bg = np.random.Philox(key=[int(seed), int(n)])
    first_block, skip = divmod(start, _WORDS_PER_BLOCK)
    bg.advance(first_block)
    words = bg.random_raw(skip + stop - start)[skip:]
    return _uniform_to_gaussian(words, np.sqrt(n / 2.0))


def energy_at(n, seed, index):
    return float(energy_block(n, seed, index, index + 1)[0])


def sample_energies(params: ModelParams, *, max_bytes=DEFAULT_MAX_BYTES, workers=1) -> EnergyTable:
    """Draw the energy table for ``(params.n, params.seed)``.

    ``workers`` > 1 fills contiguous index blocks concurrently; the table is
    identical for any worker count.
    """
    n, seed = params.n, params.seed
    check_capacity(n, max_bytes)
    dim = 1 << n
    out = np.empty(dim)
    bounds = list(range(0, dim, _GEN_CHUNK)) + [dim]
    blocks = list(zip(bounds[:-1], bounds[1:]))

    def fill(block):
        a, b = block
        out[a:b] = energy_block(n, seed, a, b)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, blocks))
    else:
        for block in blocks:
            fill(block)
    return EnergyTable(n, seed, out)


def neighbor(config: Configuration, bit: int) -> Configuration:
    """Configuration reached by flipping spin ``bit``."""
    if not 0 <= bit < config.n:
        raise ValidationError(f"bit {bit} out of range for n={config.n}")
    return Configuration(config.index ^ (1 << bit), config.n)


def ground_state_energy(table: EnergyTable) -> tuple[Configuration, float]:
    """Classical ground configuration and its energy (lowest index wins ties)."""
    idx = int(np.argmin(table.energies))
    return Configuration(idx, table.n), float(table.energies[idx])


def save_table(table: EnergyTable, path) -> None:
    """Write the flat binary format: 24-byte header, then little-endian float64 payload."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(TABLE_MAGIC, TABLE_VERSION, table.n, table.seed))
        fh.write(table.energies.astype("<f8").tobytes())
    tmp.replace(path)


def load_table(path) -> EnergyTable:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValidationError(f"{path}: truncated header")
        magic, version, n, seed = _HEADER.unpack(head)
        if magic != TABLE_MAGIC:
            raise ValidationError(f"{path}: not an energy table (bad magic)")
        if version != TABLE_VERSION:
            raise ValidationError(f"{path}: unsupported table version {version}")
        _check_n(n)
        payload = fh.read()
    if len(payload) != 8 * (1 << n):
        raise ValidationError(f"{path}: payload has {len(payload)} bytes, expected {8 << n}")
    return EnergyTable(n, seed, np.frombuffer(payload, dtype="<f8").astype(np.float64))
