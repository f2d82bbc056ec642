import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dzm.algebra import pauli, sigma_dot
from dzm.errors import ConstraintError, ConvergenceError
from dzm.fields import Grid, MatrixPotential, SpinorField
from dzm.spectral import apply_h0, lattice_wavevector, plane_wave
from dzm.zeromode import (
    ZeroModeFixture,
    bootstrap_trace,
    bs_solver,
    decay_fit,
    fixed_point_defect,
    loss_yau_fixture,
    loss_yau_psi,
    loss_yau_vector_potential,
    nearest,
    resonance_check,
    residual,
    spectrum_report,
    spin_up,
    subspace_cosine,
    sup_weighted,
)


def free_fixture(f):
    return ZeroModeFixture(f, MatrixPotential.zero(f.grid), rho=np.inf, C_q=0.0, C_f=0.0, tag="free")


@pytest.mark.parametrize("w", [(0, 0, 1), (1, 0, 0), (0.6, 0, 0.8), (0, -1, 0)])
def test_spin_up_eigenvector(w):
    phi = spin_up(w)
    sw = sum(w[j] * pauli(j + 1) for j in range(3))
    assert np.allclose(sw @ phi, phi, atol=1e-14) and math.isclose(np.linalg.norm(phi), 1.0)


def test_psi_closed_forms(rng):
    x = rng.uniform(-5, 5, (200, 3))
    for w in [(0, 0, 1), (0.6, 0.0, 0.8)]:
        psi = loss_yau_psi(x, w)
        r2 = np.sum(x * x, axis=1)
        # |(I + i sigma.x) phi|^2 = 1 + |x|^2 by direct 2x2 algebra
        assert np.max(np.abs(np.sum(np.abs(psi) ** 2, axis=1) - (1 + r2) ** -2)) < 1e-12
        assert np.allclose(loss_yau_psi(np.zeros(3), w), spin_up(w), atol=0)
        # |a(x)| = 3 / (1 + |x|^2)
        a = loss_yau_vector_potential(x, w)
        assert np.max(np.abs(np.linalg.norm(a, axis=1) - 3 / (1 + r2))) < 1e-12
        # sigma.a psi = 3 (1+|x|^2)^-1 psi pointwise
        assert np.max(np.abs(sigma_dot(a, psi) - 3 / (1 + r2)[:, None] * psi)) < 1e-12


def test_fixture_on_grid(grid32):
    fix = loss_yau_fixture(grid32)
    psi = fix.f.values[..., 2:]
    assert np.max(np.abs(np.sum(np.abs(psi) ** 2, axis=-1) - (1 + grid32.radius**2) ** -2)) < 1e-12
    assert np.array_equal(fix.f.values[grid32.origin_index], [1, 0, 1, 0])
    assert fix.Q.decay_violation() <= 1.0 + 1e-12
    assert math.isclose(sup_weighted(fix.f), math.sqrt(2), rel_tol=1e-12)


def test_sigma_d_psi_spectral():
    # sigma.D psi = 3 (1+|x|^2)^-1 psi at interior points; the spectrum of psi decays
    # like exp(-|xi|), so h = 1/4 is needed near the origin
    g = Grid(64, 8.0)
    fix = loss_yau_fixture(g, embedding="lower")
    d = apply_h0(fix.f).values[..., :2]
    psi = fix.f.values[..., 2:]
    inner = g.radius < 3.0
    err = np.abs(d - 3 / (1 + g.radius**2)[..., None] * psi)[inner]
    assert err.max() < 5e-3


@pytest.mark.parametrize("embedding", ["both", "lower"])
@pytest.mark.parametrize("w", [(0, 0, 1), (1, 0, 0), (0.6, 0, 0.8)])
def test_fixture_residual_independent_of_axis(embedding, w):
    r = residual(loss_yau_fixture(Grid(32, 8.0), w=w, embedding=embedding))
    assert r < 0.3


def test_fixture_residual_decreases():
    res = [residual(loss_yau_fixture(Grid(n, L))) for n, L in [(32, 8.0), (48, 12.0), (64, 16.0)]]
    assert res[0] > res[1] > res[2]


def test_fixture_errors(grid32):
    with pytest.raises(ConstraintError):
        loss_yau_fixture(grid32, w=(1, 1, 0))
    with pytest.raises(ConstraintError):
        loss_yau_fixture(grid32, embedding="upper")
    with pytest.raises(ConvergenceError):
        loss_yau_fixture(Grid(16, 4.0))


def test_wrong_sign_fails_gate(grid32):
    fix = loss_yau_fixture(grid32)
    flipped = ZeroModeFixture(fix.f, fix.Q.scaled(-1.0), 2.0, 3.0, fix.C_f, "flipped")
    assert residual(flipped) > 1.0


def test_residual_trivial_cases(grid32):
    k = lattice_wavevector(grid32, (2, 1, -1))
    f = plane_wave(grid32, k, np.array([1, 0, 0, 1j]))
    assert math.isclose(residual(free_fixture(f)), np.linalg.norm(k), rel_tol=1e-12)
    const = SpinorField(grid32, np.ones(grid32.shape + (4,)))
    assert residual(free_fixture(const)) < 1e-14
    zero = SpinorField(grid32, np.zeros(grid32.shape + (4,)))
    with pytest.raises(ConstraintError):
        residual(free_fixture(zero))
    with pytest.raises(ConstraintError):
        fixed_point_defect(free_fixture(zero))
    with pytest.raises(ConstraintError):
        fixed_point_defect(free_fixture(const))


def test_defect_without_potential_is_one(grid32):
    k = lattice_wavevector(grid32, (1, 2, 3))
    f = plane_wave(grid32, k, np.array([1, 0, 0, 0]))
    assert math.isclose(fixed_point_defect(free_fixture(f)), 1.0, rel_tol=1e-12)


def test_defect_tracks_residual():
    d = [fixed_point_defect(loss_yau_fixture(Grid(n, L))) for n, L in [(32, 8.0), (48, 12.0)]]
    assert d[1] < d[0] < 0.25


def test_decay_fit_synthetic():
    g = Grid(64, 16.0)
    f = SpinorField(g, np.zeros(g.shape + (4,)) + g.bracket(-3.0)[..., None] * np.array([1, 0, 0, 0]))
    fit = decay_fit(f, 16 / 3, 8.0)
    assert abs(fit.exponent + 3.0) < 0.05 and fit.window == (16 / 3, 8.0)
    c = SpinorField(g, np.ones(g.shape + (4,)))
    assert abs(decay_fit(c, 16 / 3, 8.0).exponent) < 0.01


def test_decay_fit_fixture_and_errors():
    g = Grid(64, 16.0)
    fix = loss_yau_fixture(g)
    fit = decay_fit(fix.f, 16 / 3, 8.0)
    assert abs(fit.exponent + 2.0) < 0.15
    assert np.all(np.diff(fit.radii) > 0)
    with pytest.raises(ConstraintError):
        decay_fit(fix.f, 4.0, 9.0)
    with pytest.raises(ConstraintError):
        decay_fit(fix.f, 5.0, 5.0)
    with pytest.raises(ConstraintError):
        decay_fit(fix.f, 0.01, 0.02)


def test_bootstrap_examples():
    assert bootstrap_trace(3.5).steps == [(1, 2.0, "saturated")] and bootstrap_trace(3.5).N_star == 1
    t = bootstrap_trace(2)
    assert t.steps == [(1, 1.0, "power"), (2, 2.0, "log"), (3, 2.0, "saturated")] and t.N_star == 3
    t = bootstrap_trace(1.5)
    assert [s[1] for s in t.steps] == [0.5, 1.0, 1.5, 2.0, 2.0]
    assert [s[2] for s in t.steps][-2:] == ["log", "saturated"] and t.N_star == 5
    assert bootstrap_trace(3).steps == [(1, 2.0, "log"), (2, 2.0, "saturated")]
    for bad in (1, 0.5, -2):
        with pytest.raises(ConstraintError):
            bootstrap_trace(bad)


def brute_force(rho):
    """Feed the exponent through the weight-integral branch rule until it saturates."""
    q = Fraction(repr(float(rho)))
    e, k, out = Fraction(0), 0, []
    while True:
        k += 1
        raw = q + e - 1
        label = "power" if raw < 2 else ("log" if raw == 2 else "saturated")
        e = min(raw, Fraction(2))
        out.append((k, float(e), label))
        if label == "saturated":
            return out


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1.0, max_value=4.0, exclude_min=True))
def test_bootstrap_matches_recursion(rho):
    if rho - 1 < 1e-3:
        return  # keeps traces short
    tr = bootstrap_trace(rho)
    assert tr.steps == brute_force(rho)
    n = tr.N_star
    assert 1 + 2 / Fraction(n) < Fraction(repr(rho)) and (n == 1 or 1 + 2 / Fraction(n - 1) >= Fraction(repr(rho)))


def test_resonance_check_fixture():
    fix = loss_yau_fixture(Grid(32, 8.0))
    rep = resonance_check(fix, 0.5)
    assert rep["all_finite"] and rep["zero_mode_candidate"] and rep["hypothesis_rho_gt_3_2"]
    assert set(rep["norms"]) == {"f_weighted", "Qf_weighted", "AQf", "h1"}
    # the kernel-consistent constant 2 always holds
    assert rep["norms"]["AQf"] <= 2 * rep["x_Qf"]
    for s in (0.0, 1.01, -0.5):
        with pytest.raises(ConstraintError):
            resonance_check(fix, s)


def test_resonance_check_flags_non_candidate(grid32):
    f = SpinorField(grid32, grid32.bracket(-1.0)[..., None] * np.array([1, 0, 0, 0]))
    fix = ZeroModeFixture(f, MatrixPotential.zero(grid32), rho=2.0, C_q=0.0, C_f=0.0, tag="synthetic")
    rep = resonance_check(fix, 0.5)
    assert not rep["zero_mode_candidate"]


def test_resonance_h1_ladder_stable():
    ladder = [loss_yau_fixture(Grid(n, L)) for n, L in [(32, 8.0), (48, 12.0)]]
    rep = resonance_check(loss_yau_fixture(Grid(64, 16.0)), 0.5, ladder=ladder)
    assert len(rep["h1_ladder"]) == 3 and rep["in_h1"]


def test_bs_solver_zero_potential(grid32):
    assert bs_solver(MatrixPotential.zero(grid32)) == []
    with pytest.raises(ConstraintError):
        bs_solver(MatrixPotential.zero(grid32), k=0)


def test_bs_solver_small_grid_and_scaling():
    g = Grid(16, 8.0)
    pot = -loss_yau_fixture(Grid(32, 8.0)).Q.values[::2, ::2, ::2]
    Q = MatrixPotential(g, -pot, rho=2.0, C=3.0)
    pairs = bs_solver(Q, k=4, seed=1)
    scaled = bs_solver(Q.scaled(2.5), k=4, seed=1)
    mus = sorted(p.mu.real for p in pairs)
    assert np.allclose(sorted(p.mu.real for p in scaled), [2.5 * m for m in mus], rtol=1e-6)
    for p in pairs:
        assert p.defect < 1e-6
        assert math.isclose(p.field.norm(), 1.0, rel_tol=1e-10)
        assert abs(p.coupling * p.mu + 1) < 1e-12
    rep = spectrum_report(pairs, 1, g)
    assert rep["grid"] == {"n": 16, "L": 8.0} and len(rep["eigenvalues"]) == 4


def test_bs_solver_finds_fixture_mode():
    fix = loss_yau_fixture(Grid(32, 8.0))
    pairs = bs_solver(fix.Q, k=6)
    best = nearest(pairs, -1.0)
    assert abs(best.mu + 1) < 3e-2
    assert subspace_cosine(pairs, fix.f, best.mu) > 0.98
    assert subspace_cosine(pairs, fix.f, 5.0) == 0.0
    # the spectrum of A Q is symmetric about zero for this potential
    assert abs(nearest(pairs, 1.0).mu - 1) < 3e-2
