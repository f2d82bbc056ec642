"""Fourier-multiplier realizations of H0, A, I1, Gamma0(z) and R0(z).

Conventions on the dual lattice:

* singular symbols (|xi|^-1, |xi|^-2, alpha.xi/|xi|^2) are zero at xi = 0,
  so identities such as A H0 f = f hold on mean-free fields;
* odd symbols (anything carrying alpha.xi) are zero on Nyquist modes;
* boundary values on the rims lambda +- i0 (lambda > 0) are the principal
  value of the real symbol, refused when a lattice point sits on the shell
  |xi|^2 = lambda.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from dzm.algebra import alpha_dot
from dzm.errors import ConstraintError, ResonantShellError
from dzm.fields import Grid, ScalarField, SpinorField, _fft, _ifft

RIMS = ("interior", "plus", "minus")
SHELL_TOL = 1e-9


@dataclass(frozen=True)
class SheetPoint:
    """A point of the cut plane together with the two rims of (0, inf)."""

    z: complex
    rim: str = "interior"

    def __post_init__(self):
        if self.rim not in RIMS:
            raise ConstraintError(f"rim must be one of {RIMS}, got {self.rim!r}")
        z = complex(self.z)
        if self.rim == "interior":
            if z.imag == 0.0 and z.real >= 0.0 and not z == 0:
                raise ConstraintError(
                    f"interior point z = {z} lies on the cut [0, inf); use rim 'plus' or 'minus'"
                )
        else:
            if z.imag != 0.0 or z.real < 0.0:
                raise ConstraintError(f"rim points need real z >= 0, got {z}")
        object.__setattr__(self, "z", z)

    @classmethod
    def plus(cls, lam: float) -> "SheetPoint":
        return cls(complex(lam), "plus")

    @classmethod
    def minus(cls, lam: float) -> "SheetPoint":
        return cls(complex(lam), "minus")

    @property
    def lam(self) -> float:
        return self.z.real

    def sqrt(self) -> complex:
        """Branch of sqrt(z) with Im >= 0; +-sqrt(lambda) on the rims."""
        if self.rim == "plus":
            return complex(math.sqrt(self.lam))
        if self.rim == "minus":
            return complex(-math.sqrt(self.lam))
        w = cmath.sqrt(self.z)
        return -w if w.imag < 0 else w

    def dirac_sign(self) -> int:
        """+1 on the closed upper half plane side, -1 on the lower."""
        if self.rim == "plus":
            return 1
        if self.rim == "minus":
            return -1
        return 1 if self.z.imag >= 0 else -1


def as_sheet_point(z) -> SheetPoint:
    if isinstance(z, SheetPoint):
        return z
    return SheetPoint(complex(z))


def _apply(f, symbol, *, odd: bool = False, dc=None):
    """Multiply the transform of ``f`` by a scalar symbol on the lattice."""
    g = f.grid
    fh = _fft(f.values)
    sym = np.array(symbol, dtype=complex, copy=True)
    if odd:
        sym[g.nyquist_mask] = 0.0
    if dc is not None:
        sym[0, 0, 0] = dc
    if fh.ndim == 4:
        sym = sym[..., None]
    return type(f)(g, _ifft(sym * fh))


def _inverse_power(grid: Grid, p: float) -> np.ndarray:
    k2 = grid.wavenumber_sq.copy()
    k2[0, 0, 0] = 1.0
    out = k2 ** (-0.5 * p)
    out[0, 0, 0] = 0.0
    return out


def _alpha_xi(f: SpinorField, scale=None) -> SpinorField:
    """(alpha . xi) * scale(xi) applied on the frequency side, Nyquist zeroed."""
    g = f.grid
    fh = _fft(f.values)
    if scale is not None:
        fh = fh * scale[..., None]
    out = alpha_dot(g.wavevectors, fh)
    out[g.nyquist_mask] = 0.0
    return SpinorField(g, _ifft(out))


def apply_h0(f: SpinorField) -> SpinorField:
    """Free massless Dirac operator alpha . D."""
    return _alpha_xi(f)


def apply_neg_laplacian(f):
    return _apply(f, f.grid.wavenumber_sq)


def apply_bracket_d_sq(f):
    """<D>^2 = 1 - Delta."""
    return _apply(f, 1.0 + f.grid.wavenumber_sq)


def apply_A(f: SpinorField) -> SpinorField:
    """Singular integral operator with symbol alpha.xi / |xi|^2 (zero at xi = 0)."""
    return _alpha_xi(f, _inverse_power(f.grid, 2.0))


def apply_riesz1(u):
    """Riesz potential I1, symbol |xi|^-1, kernel 1 / (2 pi^2 |x - y|^2)."""
    return _apply(u, _inverse_power(u.grid, 1.0))


def _check_shell(grid: Grid, lam: float) -> None:
    gap = float(np.min(np.abs(grid.wavenumber_sq - lam)))
    if gap < SHELL_TOL:
        raise ResonantShellError(
            f"lattice frequency on the shell |xi|^2 = {lam} (gap {gap:.2e}); "
            "choose another (n, L) or use kernels for boundary values"
        )


def _gamma0_symbol(grid: Grid, p: SheetPoint) -> np.ndarray:
    k2 = grid.wavenumber_sq
    if p.z == 0:
        return _inverse_power(grid, 2.0)
    if p.rim != "interior":
        _check_shell(grid, p.lam)
    return 1.0 / (k2 - p.z)


def apply_gamma0(z, u):
    """Resolvent of -Delta, (|xi|^2 - z)^-1, extended to the rims of (0, inf)."""
    p = as_sheet_point(z)
    return _apply(u, _gamma0_symbol(u.grid, p))


def apply_r0(z, f: SpinorField) -> SpinorField:
    """Free Dirac resolvent (H0 - z)^-1 = (H0 + z) Gamma0(z^2).

    Interior points need Im z != 0; rim points are real z = lambda >= 0 and
    use Gamma0^{+-}(lambda^2). At z = 0 this is ``apply_A``.
    """
    p = as_sheet_point(z)
    if p.rim == "interior":
        if p.z.imag == 0.0 and p.z != 0:
            raise ConstraintError(f"interior Dirac parameter needs Im z != 0, got {p.z}")
        sq = SheetPoint(p.z * p.z) if p.z != 0 else SheetPoint(0j)
    else:
        sq = SheetPoint(complex(p.lam**2), p.rim)
    sym = _gamma0_symbol(f.grid, sq)
    gf = _apply(f, sym)
    out = apply_h0(gf)
    if p.z != 0:
        out = out + p.z * gf
    return out


def apply_h0_after_A(g: SpinorField) -> SpinorField:
    return apply_h0(apply_A(g))


def plane_wave(grid: Grid, k, u0=None):
    """exp(i k.x) u0 on the grid; scalar when ``u0`` is None."""
    k = np.asarray(k, dtype=float)
    phase = np.exp(1j * grid.positions @ k)
    if u0 is None:
        return ScalarField(grid, phase)
    return SpinorField(grid, phase[..., None] * np.asarray(u0, dtype=complex))


def lattice_wavevector(grid: Grid, m) -> np.ndarray:
    """Integer mode numbers m -> wavevector (pi/L) m."""
    return (np.pi / grid.L) * np.asarray(m, dtype=float)
