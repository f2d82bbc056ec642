"""Grids, fields and norms on the periodic cube [-L, L)^3.

Positions are x = -L + h*j (j = 0..n-1) per axis, h = 2L/n, so the origin
is the grid point j = n/2. Arrays are indexed ``[ix, iy, iz, component]``;
the on-disk DZM1 layout (x fastest, component fastest within a point) is
produced by transposing at write time.

The discrete Fourier transform is scaled to approximate the unitary
transform (2 pi)^(-3/2) int exp(-i x.xi) u(x) dx on the dual lattice
xi in (pi/L) * {-n/2, ..., n/2 - 1}^3, with volume element (pi/L)^3 on the
frequency side and h^3 on the position side.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.special import erfc

from dzm._config import thread_cap
from dzm.errors import ConstraintError, FieldFormatError, UnresolvedBallError

MAGIC = b"DZM1"
_HEADER = struct.Struct("<4s3IdI")


@dataclass(frozen=True)
class Grid:
    n: int
    L: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ConstraintError(f"grid size n must be an even integer >= 8, got {self.n!r}")
        if not self.L > 0:
            raise ConstraintError(f"box half-width L must be positive, got {self.L!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def dual_volume(self) -> float:
        return (np.pi / self.L) ** 3

    @property
    def origin_index(self) -> tuple:
        c = self.n // 2
        return (c, c, c)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """1D dual lattice in FFT order."""
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)

    @cached_property
    def positions(self) -> np.ndarray:
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.positions**2, axis=-1))

    @cached_property
    def wavevectors(self) -> np.ndarray:
        k = self.frequencies
        return np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1)

    @cached_property
    def wavenumber_sq(self) -> np.ndarray:
        return np.sum(self.wavevectors**2, axis=-1)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes with any axis at the unpaired index n/2."""
        idx = np.arange(self.n) == self.n // 2
        return idx[:, None, None] | idx[None, :, None] | idx[None, None, :]

    @cached_property
    def dc_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, 0, 0] = True
        return m

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i L xi) = (-1)^m accounts for the grid starting at -L
        s = (-1.0) ** np.arange(self.n)
        return s[:, None, None] * s[None, :, None] * s[None, None, :]

    def bracket(self, s: float = 1.0) -> np.ndarray:
        """<x>^s sampled on the grid."""
        return (1.0 + self.radius**2) ** (0.5 * s)


class _Field:
    ncomp: int

    def __init__(self, grid: Grid, values, space: str = "position"):
        values = np.array(values, dtype=complex)
        expected = grid.shape + self._trailing
        if values.shape != expected:
            raise ConstraintError(f"expected values of shape {expected}, got {values.shape}")
        if space not in ("position", "frequency"):
            raise ConstraintError(f"unknown space {space!r}")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.space = space

    _trailing: tuple = ()

    def _like(self, values):
        return type(self)(self.grid, values, self.space)

    def _other(self, other):
        if isinstance(other, _Field):
            if other.grid != self.grid or other.space != self.space:
                raise ConstraintError("fields live on different grids or spaces")
            return other.values
        return other

    def __add__(self, other):
        return self._like(self.values + self._other(other))

    def __sub__(self, other):
        return self._like(self.values - self._other(other))

    def __mul__(self, c):
        return self._like(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def pointwise_abs(self) -> np.ndarray:
        v = self.values
        if v.ndim == 3:
            return np.abs(v)
        return np.sqrt(np.sum(np.abs(v) ** 2, axis=-1))

    def norm(self) -> float:
        """L^2 norm with the volume element of the field's side."""
        dv = self.grid.cell_volume if self.space == "position" else self.grid.dual_volume
        return float(np.sqrt(dv * np.sum(np.abs(self.values) ** 2)))

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=(0, 1, 2))

    def mean_free(self):
        return self._like(self.values - self.mean())


class SpinorField(_Field):
    """Four complex components per grid point."""

    ncomp = 4
    _trailing = (4,)

    @classmethod
    def from_function(cls, grid: Grid, func):
        return cls(grid, func(grid.positions))


class ScalarField(_Field):
    ncomp = 1
    _trailing = ()

    @classmethod
    def from_function(cls, grid: Grid, func):
        return cls(grid, func(grid.positions))


@dataclass(frozen=True)
class WeightSpec:
    s: float


@dataclass
class MatrixPotential:
    """4x4 Hermitian matrix per grid point with declared decay C <x>^-rho."""

    grid: Grid
    values: np.ndarray
    rho: float | None = None
    C: float | None = None
    meta: dict = field(default_factory=dict)

    HERMITIAN_TOL = 1e-12

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape + (4, 4):
            raise ConstraintError(f"potential must have shape {self.grid.shape + (4, 4)}")
        dev = np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))) if v.size else 0.0
        if dev > self.HERMITIAN_TOL:
            raise ConstraintError(f"potential is not Hermitian (max deviation {dev:.3e})")
        v.setflags(write=False)
        self.values = v

    @classmethod
    def zero(cls, grid: Grid):
        return cls(grid, np.zeros(grid.shape + (4, 4), dtype=complex), rho=np.inf, C=0.0)

    def apply(self, f: SpinorField) -> SpinorField:
        if f.grid != self.grid:
            raise ConstraintError("field and potential live on different grids")
        return SpinorField(self.grid, np.einsum("...ij,...j->...i", self.values, f.values))

    def scaled(self, c: float) -> "MatrixPotential":
        C = None if self.C is None else abs(c) * self.C
        return MatrixPotential(self.grid, c * self.values, rho=self.rho, C=C, meta=dict(self.meta))

    def decay_violation(self, sample: int = 2000, seed: int = 0) -> float:
        """Largest ratio |q_jk(x)| / (C <x>^-rho) over a random point sample."""
        if self.rho is None or self.C is None:
            raise ConstraintError("potential carries no declared decay (rho, C)")
        rng = np.random.default_rng(seed)
        flat = self.values.reshape(-1, 4, 4)
        idx = rng.choice(flat.shape[0], size=min(sample, flat.shape[0]), replace=False)
        r = self.grid.radius.reshape(-1)[idx]
        bound = self.C * (1.0 + r**2) ** (-0.5 * self.rho)
        return float(np.max(np.max(np.abs(flat[idx]), axis=(1, 2)) / bound))


def _fft(values):
    return sfft.fftn(values, axes=(0, 1, 2), workers=thread_cap())


def _ifft(values):
    return sfft.ifftn(values, axes=(0, 1, 2), workers=thread_cap())


def forward_transform(f):
    """Unitary-scaled transform of a position-space field onto the dual lattice."""
    if f.space != "position":
        raise ConstraintError("forward_transform expects a position-space field")
    g = f.grid
    scale = g.cell_volume / (2.0 * np.pi) ** 1.5
    phase = g._phase if f.values.ndim == 3 else g._phase[..., None]
    return type(f)(g, scale * phase * _fft(f.values), space="frequency")


def inverse_transform(fhat):
    if fhat.space != "frequency":
        raise ConstraintError("inverse_transform expects a frequency-space field")
    g = fhat.grid
    scale = g.cell_volume / (2.0 * np.pi) ** 1.5
    phase = g._phase if fhat.values.ndim == 3 else g._phase[..., None]
    return type(fhat)(g, _ifft(phase * fhat.values) / scale, space="position")


def _as_exponent(s) -> float:
    return float(s.s) if isinstance(s, WeightSpec) else float(s)


def weighted_norm(f, s=0.0) -> float:
    """|| <x>^s f ||_2."""
    s = _as_exponent(s)
    if s == 0.0:
        return f.norm()
    w = f.grid.bracket(2.0 * s)
    dens = f.pointwise_abs() ** 2
    return float(np.sqrt(f.grid.cell_volume * np.sum(w * dens)))


def lp_norm(f, p: float) -> float:
    a = f.pointwise_abs()
    if np.isinf(p):
        return float(a.max())
    return float((f.grid.cell_volume * np.sum(a**p)) ** (1.0 / p))


def _spectral_density(f) -> np.ndarray:
    fh = _fft(f.values)
    dens = np.abs(fh) ** 2
    if dens.ndim == 4:
        dens = dens.sum(axis=-1)
    # Parseval: h^3 sum |f|^2 == h^3 / N sum |F f|^2
    return dens * (f.grid.cell_volume / f.grid.n**3)


def gradient_norm(f) -> float:
    """|| grad f ||_2 from the symbol |xi|^2 (Nyquist modes included)."""
    dens = _spectral_density(f)
    return float(np.sqrt(np.sum(f.grid.wavenumber_sq * dens)))


def sobolev_h1_norm(f) -> float:
    """|| <D> f ||_2 via the multiplier (1 + |xi|^2)^(1/2)."""
    dens = _spectral_density(f)
    return float(np.sqrt(np.sum((1.0 + f.grid.wavenumber_sq) * dens)))


def gradient(u: ScalarField) -> SpinorField | np.ndarray:
    """Spectral gradient of a scalar field, shape (n, n, n, 3), Nyquist zeroed."""
    g = u.grid
    uh = _fft(u.values)
    uh = np.where(g.nyquist_mask, 0.0, uh)
    return np.stack([_ifft(1j * g.wavevectors[..., j] * uh) for j in range(3)], axis=-1)


def lq_ul_norm(u, q: float) -> float:
    """sup over grid centres of the discrete L^q norm on closed unit balls.

    Distances are periodic. Requires h <= 1/2.
    """
    if q < 1:
        raise ConstraintError(f"q must be >= 1, got {q}")
    g = u.grid
    if g.h > 0.5:
        raise UnresolvedBallError(f"grid spacing h = {g.h} > 1/2 does not resolve unit balls")
    a = u.pointwise_abs() ** q
    j = np.arange(g.n)
    d = g.h * np.minimum(j, g.n - j)
    dist2 = d[:, None, None] ** 2 + d[None, :, None] ** 2 + d[None, None, :] ** 2
    ball = (dist2 <= 1.0 + 1e-12).astype(float)
    conv = np.real(_ifft(_fft(a) * _fft(ball)))
    peak = max(float(conv.max()), 0.0) * g.cell_volume
    return peak ** (1.0 / q)


def _epstein_z2(terms: int = 6) -> float:
    """Analytically continued sum' |n|^-2 over the cubic lattice Z^3 (Ewald split)."""
    r = np.arange(-terms, terms + 1)
    n = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    n2 = np.sum(n**2, axis=1)
    x = np.pi * n2[n2 > 0]
    s = np.sum(np.exp(-x) / x + np.sqrt(np.pi) * erfc(np.sqrt(x)) / np.sqrt(x))
    return float(np.pi * (s - 3.0))


EPSTEIN_Z2 = _epstein_z2()


def inverse_radius_norm(u) -> float:
    """|| u / |x| ||_2 on the grid.

    The origin is dropped from the sum and the punctured lattice sum is
    corrected for the |x|^-2 singularity: h Z(2) g(0) - h^3 lap g(0) / 6
    with g = |u|^2 and Z the cubic-lattice Epstein zeta (Z(0) = -1).
    """
    g = u.grid
    dens = u.pointwise_abs() ** 2
    r2 = g.radius**2
    inv = np.zeros_like(r2)
    nz = r2 > 0
    inv[nz] = 1.0 / r2[nz]
    raw = g.cell_volume * np.sum(dens * inv)
    o = g.origin_index
    lap = np.real(_ifft(-g.wavenumber_sq * _fft(dens)))[o]
    corrected = raw - g.h * EPSTEIN_Z2 * dens[o] + g.h**3 * lap / 6.0
    return float(np.sqrt(max(corrected, 0.0)))


def hardy_sides(u) -> tuple:
    """(|| u/|x| ||_2, 2 || grad u ||_2) for the Hardy inequality check."""
    return inverse_radius_norm(u), 2.0 * gradient_norm(u)


# -- DZM1 file format --------------------------------------------------------


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def write_field(path, grid: Grid, values, meta: dict | None = None) -> None:
    """Write ``values`` (shape grid.shape + (ncomp,) or + (4, 4)) as DZM1."""
    path = Path(path)
    v = np.asarray(values, dtype="<c16")
    if v.shape == grid.shape:
        v = v[..., None]
    elif v.shape == grid.shape + (4, 4):
        v = v.reshape(grid.shape + (16,))
    ncomp = v.shape[-1]
    if v.shape[:3] != grid.shape or ncomp not in (1, 4, 16):
        raise ConstraintError(f"cannot store array of shape {v.shape} on grid {grid}")
    header = _HEADER.pack(MAGIC, grid.n, grid.n, grid.n, float(grid.L), ncomp)
    body = np.ascontiguousarray(v.transpose(2, 1, 0, 3)).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)
    if meta is not None:
        _meta_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_field(path):
    """Return (grid, values, meta) from a DZM1 file; values are (n,n,n,ncomp)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, nx, ny, nz, L, ncomp = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if not nx == ny == nz:
        raise FieldFormatError(f"{path}: only cubic grids are supported ({nx}, {ny}, {nz})")
    if ncomp not in (1, 4, 16):
        raise FieldFormatError(f"{path}: unsupported component count {ncomp}")
    count = nx * ny * nz * ncomp
    body = raw[_HEADER.size:]
    if len(body) != 16 * count:
        raise FieldFormatError(f"{path}: expected {16 * count} data bytes, found {len(body)}")
    try:
        grid = Grid(int(nx), float(L))
    except ConstraintError as exc:
        raise FieldFormatError(f"{path}: {exc}") from exc
    v = np.frombuffer(body, dtype="<c16").reshape(nz, ny, nx, ncomp).transpose(2, 1, 0, 3)
    v = np.array(v, dtype=complex)
    meta_file = _meta_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else None
    return grid, v, meta


def load_spinor(path) -> tuple:
    grid, v, meta = read_field(path)
    if v.shape[-1] != 4:
        raise FieldFormatError(f"{path}: expected 4 components, found {v.shape[-1]}")
    return SpinorField(grid, v), meta


def load_potential(path) -> MatrixPotential:
    grid, v, meta = read_field(path)
    if v.shape[-1] != 16:
        raise FieldFormatError(f"{path}: expected 16 components, found {v.shape[-1]}")
    meta = meta or {}
    return MatrixPotential(grid, v.reshape(grid.shape + (4, 4)), rho=meta.get("rho"),
                           C=meta.get("C"), meta=meta)
