import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pentropy.errors import InvalidMeasureError
from pentropy.spectra import (
    CERTIFIED_AC,
    NAMED_MEASURES,
    NOT_L2,
    RieszProduct,
    SpectralMeasure,
    ac_diagnostic,
    atom_pair,
    convolution_power_coeffs,
    convolve_atoms,
    dirac,
    fourier,
    fourier_at,
    lebesgue,
    mixture,
    named_measure,
    power_decay_coeffs,
    riesz_product,
    wiener_continuity_test,
)


def fft_coefficients(density, n_max, grid=2 ** 14):
    """Oracle: Fourier coefficients of a smooth density from an FFT grid."""
    x = np.arange(grid) / grid
    c = np.fft.rfft(density(x)) / grid
    return c.real[: n_max + 1]


def test_fourier_trivial_examples():
    assert np.array_equal(fourier(dirac(0), 20), np.ones(21))
    r = fourier(lebesgue(), 20)
    assert r[0] == 1.0 and np.abs(r[1:]).max() < 1e-15


def test_riesz_coefficients_examples():
    freqs = [1, 3, 9, 27]
    r = fourier(riesz_product(freqs, 1.0), 60)
    for n in freqs:
        assert r[n] == 0.5
    for a in freqs:
        for b in freqs:
            if a < b:
                assert r[a + b] == 0.25 and r[b - a] == 0.25
    # balanced ternary reaches every |m| <= 40 and nothing beyond
    assert r[5] == 0.125 and r[41] == 0.0
    gappy = fourier(riesz_product([1, 4, 16, 64], 1.0), 90)
    assert gappy[2] == 0.0 and gappy[6] == 0.0 and gappy[85] == 0.0625


@pytest.mark.parametrize("freqs, coeffs", [
    ([1, 3, 9, 27], [1.0] * 4),
    ([2, 7, 25, 80], [0.3, -0.8, 1.0, 0.5]),
    ([1, 4, 13], [-1.0, 0.6, 0.9]),
])
def test_riesz_matches_fft_oracle(freqs, coeffs):
    rp = RieszProduct(tuple(freqs), tuple(coeffs))
    oracle = fft_coefficients(rp.density, 200)
    assert np.abs(rp.coefficients(200) - oracle).max() < 1e-12
    for m in (0, 1, freqs[-1], sum(freqs), sum(freqs) + 1):
        assert rp.coefficient(m) == pytest.approx(oracle[m], abs=1e-12)


def test_riesz_validation():
    with pytest.raises(InvalidMeasureError):
        RieszProduct((1, 2), (1.0, 1.0))
    with pytest.raises(InvalidMeasureError):
        RieszProduct((1,), (1.5,))
    assert len(riesz_product([3 ** k for k in range(20)]).riesz.freqs) == 12


def test_density_quadrature_matches_oracle():
    sigma = named_measure("even_zero_density")
    r = fourier(sigma, 40)
    assert r[0] == pytest.approx(1.0, abs=1e-15)
    # direct integration: r(n) = sin(pi n / 2) / (pi n) for odd n, 0 for even n > 0
    for n in range(1, 41):
        expected = 0.0 if n % 2 == 0 else math.sin(math.pi * n / 2) / (math.pi * n)
        assert r[n] == pytest.approx(expected, abs=1e-14)


def test_atom_pair_coefficients():
    r = fourier(atom_pair(Fraction(1, 5)), 30)
    n = np.arange(31)
    assert np.abs(r - np.cos(2 * np.pi * n / 5)).max() < 1e-14


def test_convolution_power_examples():
    sigma = atom_pair(Fraction(2, 7))
    r = fourier(sigma, 50)
    assert np.array_equal(convolution_power_coeffs(sigma, 1, 50), r)
    sq = convolution_power_coeffs(sigma, 2, 50)
    n = np.arange(51)
    assert np.abs(sq - (1 + np.cos(2 * np.pi * ((4 * n) % 7) / 7)) / 2).max() < 1e-14
    for m in (1, 2, 5):
        assert convolution_power_coeffs(named_measure("riesz_demo"), m, 5)[0] == 1.0
    with pytest.raises(ValueError):
        convolution_power_coeffs(sigma, 0, 5)


def test_explicit_atom_convolution_matches_square():
    theta = Fraction(3, 11)
    sigma = atom_pair(theta)
    conv = convolve_atoms(sigma.atoms, sigma.atoms)
    assert sum(m for _, m in conv) == pytest.approx(1.0)
    # four atoms, two of which meet at 0
    assert {x for x, _ in conv} == {Fraction(0), 2 * theta, 1 - 2 * theta}
    conv_measure = SpectralMeasure(atoms=conv)
    assert np.abs(fourier(conv_measure, 40) - fourier(sigma, 40) ** 2).max() < 1e-14


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(NAMED_MEASURES), st.integers(1, 4), st.integers(1, 4))
def test_convolution_powers_multiply(name, m1, m2):
    sigma = named_measure(name)
    a = convolution_power_coeffs(sigma, m1, 80)
    b = convolution_power_coeffs(sigma, m2, 80)
    assert np.allclose(convolution_power_coeffs(sigma, m1 + m2, 80), a * b, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(NAMED_MEASURES), st.lists(st.integers(0, 10 ** 5), min_size=1, max_size=20))
def test_coefficients_bounded(name, ns):
    sigma = named_measure(name)
    r = fourier_at(sigma, np.array(ns))
    assert np.all(np.abs(r) <= 1 + 1e-12)
    assert fourier_at(sigma, np.array([0]))[0] == pytest.approx(1.0, abs=1e-12)


def test_wiener_examples():
    N = 2 ** 12
    assert wiener_continuity_test(fourier(dirac(0), N), N).mean_square == 1.0
    assert wiener_continuity_test(fourier(lebesgue(), N), N).mean_square < 1e-28
    mix = named_measure("half_atom_half_uniform")
    rep = wiener_continuity_test(fourier(mix, 2 ** 16), 2 ** 16)
    assert rep.mean_square == pytest.approx(0.25, rel=0.05)
    assert mix.atom_mass_squared == 0.25
    assert [k for k, _ in rep.trend][:3] == [1, 2, 4]
    with pytest.raises(ValueError):
        wiener_continuity_test([1.0, 0.5], 4)


def test_wiener_trend_on_continuous_measure_decreases():
    N = 2 ** 14
    rep = wiener_continuity_test(fourier(named_measure("even_zero_density"), N), N)
    vals = [v for k, v in rep.trend if k >= 2]
    assert all(b <= a * 1.1 for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3


def test_ac_diagnostic_examples():
    N = 2 ** 14
    uni = ac_diagnostic(fourier(lebesgue(), N), 1, N)
    assert uni.verdict == "converging" and uni.interpretation == CERTIFIED_AC
    atom = ac_diagnostic(fourier(dirac(0), N), 3, N)
    assert atom.verdict == "diverging" and atom.interpretation == NOT_L2
    assert atom.l2_partial_sums[-1] == (N, float(N))
    env = power_decay_coeffs(0.4, 2 ** 16)
    d1 = ac_diagnostic(env, 1, 2 ** 16)
    d2 = ac_diagnostic(env, 2, 2 ** 16)
    assert d1.verdict == "diverging" and d2.verdict == "converging"
    assert all(r < 0.75 for r in d2.increment_ratios[-3:])
    # the partial sums themselves agree with direct summation
    n = np.arange(1, 2 ** 16 + 1, dtype=float)
    assert d2.l2_partial_sums[-1][1] == pytest.approx(math.fsum(n ** -1.6), rel=1e-12)


def test_riesz_decay_l2_sums_match_product_formula():
    sigma = named_measure("riesz_decay")
    a = np.array(sigma.riesz.coeffs)
    top = sum(sigma.riesz.freqs)
    r = fourier(sigma, top)
    # unique signed expansions: sum over all n of r(n)^(2m) factors over the terms
    for m in (1, 2):
        _, dyadic = ac_diagnostic(r, m, top).l2_partial_sums[-1]
        total = math.prod(1 + 2 * (a / 2) ** (2 * m))
        assert 1 + 2 * math.fsum(r[1:] ** (2 * m)) == pytest.approx(total, rel=1e-12)
        assert dyadic <= (total - 1) / 2 + 1e-12
    assert ac_diagnostic(r, 1, 2 ** 15).verdict != "converging"


def test_measure_validation():
    with pytest.raises(InvalidMeasureError):
        SpectralMeasure(atoms=((Fraction(1, 3), 1.0),))  # not symmetric
    with pytest.raises(InvalidMeasureError):
        SpectralMeasure(density_breaks=(0, 1), density_values=(0.5,))
    with pytest.raises(InvalidMeasureError):
        SpectralMeasure(atoms=((1, 1.0),))
    with pytest.raises(KeyError):
        named_measure("nope")


@pytest.mark.parametrize("name", NAMED_MEASURES)
def test_serialization_roundtrip(name):
    sigma = named_measure(name)
    back = SpectralMeasure.from_json(sigma.to_json())
    assert back == sigma
    assert np.array_equal(fourier(back, 100), fourier(sigma, 100))


def test_mixture_masses():
    m = mixture((0.25, dirac(0)), (0.75, named_measure("even_zero_density")))
    assert m.total_mass == pytest.approx(1.0)
    assert m.coefficient(2) == pytest.approx(0.25)
