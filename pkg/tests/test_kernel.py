import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_grid
from htcp.errors import GridError
from htcp.families import CounterexampleG, Exponential, ParetoLomax, Uniform
from htcp.kernel import (AtomPlusDensity, GridDensity, conv_power, convolve, convolve_at, crop_positive,
                         discretize, embed, interval_mass, restrict_positive)


# -- GridDensity ------------------------------------------------------------------


def test_rejects_bad_grids():
    with pytest.raises(GridError):
        GridDensity(0.0, 0.0, np.ones(3))
    with pytest.raises(GridError):
        GridDensity(0.0, 0.1, np.array([1.0, -1.0]))
    with pytest.raises(GridError):
        GridDensity(0.0, 0.1, np.array([1.0, np.nan]))
    with pytest.raises(GridError):
        GridDensity(0.0, 0.1, np.ones(3), defect=-0.1)


def test_values_read_only():
    d = GridDensity(0.0, 0.5, np.ones(2))
    with pytest.raises(ValueError):
        d.values[0] = 3.0


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    d = random_grid(rng)
    path = tmp_path / "d.csv"
    d.to_csv(path)
    back = GridDensity.from_csv(path)
    assert back.origin == d.origin and back.step == d.step and back.defect == d.defect
    assert np.array_equal(back.values, d.values)
    assert GridDensity.from_csv(d.to_csv()).values.tolist() == d.values.tolist()


def test_csv_layout():
    text = GridDensity(0.0, 0.5, np.array([1.0, 1.0])).to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# origin=0.0 step=0.5 defect=0.0")
    assert lines[1] == "x_left,value"
    assert lines[2] == "0.0,1.0"


# -- discretize ----------------------------------------------------------------------


def test_discretize_uniform():
    d = discretize(Uniform(0.0, 1.0), 0.0, 0.25, 4)
    assert np.allclose(d.values, 1.0, atol=1e-15)
    assert d.defect == pytest.approx(0.0, abs=1e-15)


def test_discretize_exponential_first_cell():
    h = 0.01
    d = discretize(Exponential(1.0), 0.0, h, 10)
    assert d.values[0] == pytest.approx(-math.expm1(-h) / h, rel=1e-14)


def test_discretize_counterexample_cell_matches_antiderivative_and_quadrature():
    from scipy import integrate
    a, b = 0.05, 0.1
    g = CounterexampleG()
    # g(x) = h(x - 1) / 2 where h(u) = 1/(|u| ln(1/|u|)^2)
    mass = g.cell_mass(1 + a, 1 + b)
    exact = 0.5 * (1 / math.log(1 / b) - 1 / math.log(1 / a))
    quad, _ = integrate.quad(lambda u: 0.5 / (u * math.log(u) ** 2), a, b, epsabs=0, epsrel=1e-12)
    assert mass == pytest.approx(exact, rel=1e-13)
    assert mass == pytest.approx(quad, rel=1e-10)


def test_discretize_callable_pdf_uses_quadrature():
    d = discretize(lambda x: math.exp(-x) if x >= 0 else 0.0, 0.0, 0.5, 20)
    ref = discretize(Exponential(1.0), 0.0, 0.5, 20)
    assert np.allclose(d.values, ref.values, rtol=1e-9)
    assert d.defect == pytest.approx(ref.defect, abs=1e-9)


def test_discretize_unbounded_density_stays_finite():
    d = discretize(CounterexampleG(), 0.0, 1e-3, 3000)
    assert np.all(np.isfinite(d.values))
    assert d.total_mass == pytest.approx(1.0, abs=1e-12)


def test_discretize_rejects_negative_cells():
    with pytest.raises(GridError):
        discretize(lambda x: -1.0 if 0 <= x <= 2 else 0.0, 0.0, 0.5, 4)


# -- convolution -------------------------------------------------------------------------


def test_uniform_convolution_is_triangle():
    u = discretize(Uniform(0.0, 1.0), 0.0, 0.01, 100)
    t = convolve(u, u)
    assert t.origin == 0.0 and t.n_cells == 200
    x = t.x_left + 0.005
    tri = np.where(x < 1, x, 2 - x)
    # piecewise-constant inputs give cell averages of the piecewise-linear triangle
    assert np.max(np.abs(t.values - tri)) < 1e-12 + 0.01
    assert t.value_at(0.999) == pytest.approx(0.995, abs=1e-12)
    assert t.mass == pytest.approx(1.0, abs=1e-12)


def test_exponential_convolution_matches_erlang():
    h = 0.01
    e = discretize(Exponential(1.0), 0.0, h, 3000)
    e2 = convolve(e, e, x_max=30.0)
    x = np.array([0.5, 1.0, 3.0, 8.0])
    assert np.allclose(e2.value_at(x), x * np.exp(-x), atol=2 * h)


def test_near_delta_shifts():
    f = discretize(Exponential(1.0), 0.0, 0.01, 1000)
    delta = GridDensity(2.0, 0.01, np.array([100.0]))
    g = convolve(f, delta)
    xs = np.array([2.5, 3.0, 5.0])
    # a one-cell kernel smooths by one cell
    assert np.allclose(g.value_at(xs), f.value_at(xs - 2.0), rtol=0.02)


def test_conv_power_matches_erlang():
    h = 0.01
    e = discretize(Exponential(1.0), 0.0, h, 4000)
    for n in (2, 3, 5):
        p = conv_power(e, n, x_max=40.0)
        x = np.array([1.0, 4.0, 10.0])
        ref = x ** (n - 1) * np.exp(-x) / math.factorial(n - 1)
        assert np.allclose(p.value_at(x), ref, atol=3 * h)


def test_conv_power_identity_and_square():
    u = discretize(Uniform(0.0, 1.0), 0.0, 0.01, 100)
    assert conv_power(u, 1) is u or np.array_equal(conv_power(u, 1).values, u.values)
    assert np.allclose(conv_power(u, 2).values, convolve(u, u).values, atol=1e-13)
    with pytest.raises(GridError):
        conv_power(u, 0)


def test_mismatched_steps_rejected():
    a = GridDensity(0.0, 0.1, np.ones(10))
    b = GridDensity(0.0, 0.2, np.ones(5))
    with pytest.raises(GridError):
        convolve(a, b)


def test_support_cap_goes_to_defect():
    f = discretize(ParetoLomax(2.5, 1.0), 0.0, 0.1, 1000)
    full = convolve(f, f)
    cut = convolve(f, f, x_max=50.0)
    assert cut.right == pytest.approx(50.0)
    assert cut.mass + cut.defect == pytest.approx(full.mass + full.defect, abs=1e-12)
    assert cut.defect > full.defect


def test_convolve_at_matches_convolve():
    rng = np.random.default_rng(3)
    a = random_grid(rng, origin=0.0, step=0.1)
    b = random_grid(rng, origin=0.5, step=0.1)
    full = convolve(a, b)
    xs = np.array([0.55, 1.0, 3.3, 7.01, 12.5])
    assert np.allclose(convolve_at(a, b, xs), full.value_at(xs), atol=1e-12)


def test_clamping_logs_only_above_threshold(caplog):
    f = discretize(ParetoLomax(2.5, 1.0), 0.0, 0.05, 4000)
    with caplog.at_level(logging.WARNING, logger="htcp.kernel"):
        out = convolve(f, f)
    assert np.all(out.values >= 0)
    assert not caplog.records


# -- grid surgery ----------------------------------------------------------------------


def test_embed_accounts_for_lost_mass():
    d = GridDensity(-1.0, 0.5, np.full(4, 0.5))
    g, lost_l, lost_r = embed(d, 0.0, 1)
    assert lost_l == pytest.approx(0.5) and lost_r == pytest.approx(0.25)
    assert g.mass + g.defect == pytest.approx(1.0)


def test_restrict_positive_triangle():
    u = discretize(Uniform(-0.5, 0.5), -0.5, 0.01, 100)
    tri = convolve(u, u)
    pos = restrict_positive(tri)
    assert pos.mass == pytest.approx(0.5, abs=1e-12)


def test_restrict_positive_negative_support():
    d = discretize(Uniform(-2.0, 0.0), -2.0, 0.01, 200)
    assert restrict_positive(d).mass == 0.0


def test_restrict_positive_shifted_exponential():
    c = 1.5
    d = discretize(Exponential(2.0), -3.0, 0.01, 1000, loc=-c)
    pos = restrict_positive(d)
    assert pos.mass + d.defect == pytest.approx(math.exp(-2.0 * c), rel=1e-12)


def test_crop_positive():
    d = GridDensity(-1.0, 0.5, np.arange(6.0))
    c = crop_positive(d)
    assert c.origin == 0.0 and c.values.tolist() == [2.0, 3.0, 4.0, 5.0]


# -- interval_mass and atoms -------------------------------------------------------------


def test_interval_mass_uniform():
    u = discretize(Uniform(0.0, 1.0), 0.0, 0.25, 4)
    assert interval_mass(u, 0.25, 0.5) == pytest.approx(0.5)


def test_interval_mass_with_atom():
    e = discretize(Exponential(1.0), 0.0, 1e-3, 20000)
    rho = AtomPlusDensity(0.3, e.scaled(0.7))
    ref = 0.3 + 0.7 * -math.expm1(-0.5)
    assert interval_mass(rho, -0.5, 1.0) == pytest.approx(ref, rel=1e-12)


def test_interval_mass_pareto_tail(pareto_grid):
    f = ParetoLomax(2.5, 1.0)
    for x, c in ((500.0, 1.0), (1200.0, 3.0)):
        exact = float(f.sf(x) - f.sf(x + c))
        assert interval_mass(pareto_grid, x, c) == pytest.approx(exact, rel=1e-9)


def test_atom_plus_density_validates():
    e = discretize(Exponential(1.0), 0.0, 0.01, 5000)
    with pytest.raises(GridError):
        AtomPlusDensity(0.5, e)
    with pytest.raises(GridError):
        AtomPlusDensity(1.5, e.scaled(0.0))


# -- invariants over random 64-cell grids -----------------------------------------------------


grid_seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@settings(max_examples=60, deadline=None)
@given(grid_seeds)
def test_mass_conservation(seed):
    rng = np.random.default_rng(seed)
    step = 0.1
    a, b = random_grid(rng, step=step), random_grid(rng, step=step)
    c = convolve(a, b)
    assert c.mass + c.defect == pytest.approx(a.total_mass * b.total_mass, abs=1e-9)
    x_max = c.origin + step * int(rng.integers(1, c.n_cells))
    capped = convolve(a, b, x_max=x_max)
    assert capped.mass + capped.defect == pytest.approx(a.total_mass * b.total_mass, abs=1e-9)
    assert np.all(capped.values >= 0)


@settings(max_examples=60, deadline=None)
@given(grid_seeds)
def test_commutativity(seed):
    rng = np.random.default_rng(seed)
    a, b = random_grid(rng, step=0.05), random_grid(rng, step=0.05)
    ab, ba = convolve(a, b), convolve(b, a)
    assert ab.origin == ba.origin
    assert np.max(np.abs(ab.values - ba.values)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(grid_seeds)
def test_associativity(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_grid(rng, step=0.25) for _ in range(3))
    left = convolve(convolve(a, b), c)
    right = convolve(a, convolve(b, c))
    assert np.max(np.abs(left.values - right.values)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(grid_seeds, st.integers(min_value=1, max_value=6))
def test_conv_power_binary_matches_naive(seed, n):
    rng = np.random.default_rng(seed)
    f = random_grid(rng, step=0.1)
    naive = f
    for _ in range(n - 1):
        naive = convolve(naive, f)
    fast = conv_power(f, n)
    assert fast.origin == pytest.approx(naive.origin)
    assert np.max(np.abs(fast.values - naive.values)) <= 1e-8
    assert np.all(fast.values >= 0)
