from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nilwalk import rational as Q
from nilwalk.algebra import abelian, bch_product, build_preset, exact, filiform3, free_nilpotent, heisenberg, unitriangular
from nilwalk.filtration import (
    BiasExtension, a_X_operator, bias_extension, central_series, choose_weight_decomposition, decompose,
    dilate, graded_bracket, graded_product, homogeneous_dimension, weight_filtration,
)


def e(n, *idx):
    v = [0] * n
    for i in idx:
        v[i] = 1
    return Q.vec(v)


def test_heisenberg_central_series():
    f = central_series(heisenberg())
    assert f.dims == [3, 1]
    assert f.space(2) == (e(3, 2),)
    assert f.space(3) == ()


def test_abelian_central_series():
    assert central_series(abelian(3)).dims == [3]


def test_filiform_central_series():
    assert central_series(filiform3()).dims == [4, 2, 1]


def test_heisenberg_weight_filtration_biased():
    f = weight_filtration(heisenberg(), [0, 1, 0])
    assert f.space(2) == (e(3, 2),)
    assert f.space(3) == (e(3, 2),)
    assert f.space(4) == ()
    assert homogeneous_dimension(f) == 5


def test_centered_homogeneous_dimensions():
    assert homogeneous_dimension(weight_filtration(heisenberg(), [0, 0, 0])) == 4
    assert homogeneous_dimension(weight_filtration(abelian(5), [0] * 5)) == 5


def test_filiform_weight_filtration_drift_T():
    # hand recursion: g(2)=g(3)=<e3,e4>, g(4)=<e4>, g(5)=[g,g(4)]+[T,g(3)]=0
    f = weight_filtration(filiform3(), [0, 1, 0, 0])
    assert f.dims == [4, 2, 2, 1]
    assert f.space(2) == (e(4, 2), e(4, 3))
    assert f.space(4) == (e(4, 3),)
    assert f.space(5) == ()
    dec = choose_weight_decomposition(f)
    assert dec.layers[1] == [e(4, 0), e(4, 1)]
    assert dec.layers[2] == []
    assert dec.layers[3] == [e(4, 2)]
    assert dec.layers[4] == [e(4, 3)]
    assert dec.homogeneous_dimension == 9


def test_filiform_weight_filtration_drift_A():
    f = weight_filtration(filiform3(), [1, 0, 0, 0])
    assert f.dims == [4, 2, 2, 1, 1]
    dec = choose_weight_decomposition(f)
    assert {b: len(v) for b, v in dec.layers.items()} == {1: 2, 2: 0, 3: 1, 4: 0, 5: 1}


@pytest.mark.parametrize("alg", [heisenberg(), filiform3(), unitriangular(4), free_nilpotent(2, 4)])
def test_zero_bias_gives_central_series(alg):
    assert weight_filtration(alg, [0] * alg.dim).spaces == central_series(alg).spaces


def test_heisenberg_decomposition():
    dec = decompose(heisenberg(), [0, 1, 0])
    assert dec.layers[1] == [e(3, 0), e(3, 1)]
    assert dec.layers[2] == []
    assert dec.layers[3] == [e(3, 2)]
    assert np.array_equal(dec.X, [0, 1, 0])
    assert decompose(abelian(3)).layers == {1: [e(3, 0), e(3, 1), e(3, 2)]}


def test_dilations():
    biased = decompose(heisenberg(), [0, 1, 0])
    centered = decompose(heisenberg())
    assert np.allclose(dilate(biased, 2.0, [0, 0, 1]), [0, 0, 8])
    assert np.allclose(dilate(centered, 3.0, [1, 0, 1]), [3, 0, 9])
    assert list(dilate(biased, Fraction(1, 2), exact([0, 0, 1]))) == [0, 0, Fraction(1, 8)]


def test_graded_bracket_kills_low_weight():
    dec = decompose(heisenberg(), [0, 1, 0])
    assert np.allclose(graded_bracket(dec, [1, 0, 0], [0, 1, 0]), 0)
    cen = decompose(heisenberg())
    assert np.allclose(graded_bracket(cen, [1, 0, 0], [0, 1, 0]), [0, 0, 1])


def test_bias_extension():
    dec = decompose(heisenberg(), [0, 1, 0])
    ext = bias_extension(dec.algebra, dec)
    chi = ext.chi
    assert np.allclose(ext.algebra.bracket(chi, [1, 0, 0, 0]), [0, 0, -1, 0])
    assert list(ext.grading.weights) == [1, 1, 3, 2]
    flat = BiasExtension(decompose(heisenberg()))
    assert not flat.biased and flat.algebra is flat.dec.algebra
    assert np.array_equal(flat.chi, np.zeros(3))


def test_a_X_examples():
    dec = decompose(heisenberg(), [0, 1, 0])
    assert np.allclose(a_X_operator(dec, [1, 0, 0]), [0, 0, -1])
    assert np.allclose(a_X_operator(dec, [0, 0, 1]), 0)
    fil = decompose(filiform3(), [1, 0, 0, 0])
    A = fil.a_X_matrix
    assert np.allclose(np.linalg.matrix_power(A, fil.algebra.step), 0)


def random_rational(rng, n, lo=-3, hi=3):
    return Q.vec(Fraction(int(a), int(b)) for a, b in zip(rng.integers(lo, hi + 1, n), rng.integers(1, 4, n)))


PRESETS = ["heisenberg", "filiform3", "unitriangular(4)", "free(2,3)", "free(2,4)"]


@pytest.mark.parametrize("name", PRESETS)
def test_lift_independence(name):
    alg = build_preset(name)
    rng = np.random.default_rng(11)
    derived = alg.central_series_spaces[1]
    for _ in range(20):
        xbar = random_rational(rng, alg.dim)
        z = [Fraction(0)] * alg.dim
        for row in derived:
            z = Q.add(z, Q.scale(Fraction(int(rng.integers(-5, 6))), row))
        assert weight_filtration(alg, Q.add(xbar, z)).spaces == weight_filtration(alg, xbar).spaces


@pytest.mark.parametrize("name", PRESETS)
def test_nesting_compatibility_and_comparison_with_central(name):
    alg = build_preset(name)
    rng = np.random.default_rng(5)
    central = central_series(alg)
    for _ in range(5):
        f = weight_filtration(alg, random_rational(rng, alg.dim))
        assert f.is_nested()
        assert f.is_bracket_compatible()
        for i in range(1, alg.step + 2):
            assert Q.is_subspace(central.space(i), f.space(i))
            assert Q.is_subspace(f.space(2 * i), central.space(i + 1))


@pytest.mark.parametrize("name", PRESETS)
def test_decomposition_is_direct(name):
    alg = build_preset(name)
    dec = decompose(alg, random_rational(np.random.default_rng(3), alg.dim))
    f = dec.filtration
    for b in range(1, f.length + 1):
        joined = Q.span(list(dec.layers[b]) + list(f.space(b + 1)))
        assert joined == f.space(b)
        assert len(dec.layers[b]) + len(f.space(b + 1)) == len(f.space(b))
    x = np.random.default_rng(0).standard_normal(alg.dim)
    parts = [dec.project(x, b) for b in range(1, f.length + 1)]
    assert np.allclose(sum(parts), x)
    for b in range(1, f.length + 1):
        for c in range(1, f.length + 1):
            if b != c:
                assert np.allclose(dec.project(parts[b - 1], c), 0)


@pytest.mark.parametrize("name", PRESETS)
def test_dilation_is_graded_automorphism(name):
    alg = build_preset(name)
    rng = np.random.default_rng(9)
    dec = decompose(alg, rng.integers(-2, 3, alg.dim))
    a, b = rng.uniform(-1, 1, (2, 1000, alg.dim))
    r = rng.uniform(0.2, 3.0, (1000, 1))
    f = dec.dilation_factors
    lhs = np.array([dec.dilate(ri[0], v) for ri, v in zip(r, graded_product(dec, a, b))])
    rhs = graded_product(dec, np.array([dec.dilate(ri[0], v) for ri, v in zip(r, a)]),
                         np.array([dec.dilate(ri[0], v) for ri, v in zip(r, b)]))
    scale = (1 + np.linalg.norm(lhs, axis=1) + np.linalg.norm(rhs, axis=1)) ** alg.step
    assert np.all(np.linalg.norm(lhs - rhs, axis=1) <= 1e-9 * scale)


@pytest.mark.parametrize("name", PRESETS)
def test_graded_product_is_rescaling_limit(name):
    # independent route: D_{1/t}(D_t a * D_t b) -> a *' b as t -> 0
    alg = build_preset(name)
    rng = np.random.default_rng(4)
    dec = decompose(alg, rng.integers(-2, 3, alg.dim))
    a, b = rng.uniform(-1, 1, (2, 20, alg.dim))
    target = graded_product(dec, a, b)
    errs = []
    for t in [1e2, 1e3]:
        approx = dec.dilate(1 / t, bch_product(alg, dec.dilate(t, a), dec.dilate(t, b)))
        errs.append(np.abs(approx - target).max())
    assert errs[1] < errs[0] / 5 and errs[1] < 1e-2


@pytest.mark.parametrize("name", PRESETS)
def test_homogeneous_dimension_from_determinant(name):
    alg = build_preset(name)
    dec = decompose(alg, np.random.default_rng(1).integers(-2, 3, alg.dim))
    det = np.linalg.det(dec.dilation_matrix(2.0))
    assert round(np.log2(det)) == dec.homogeneous_dimension == homogeneous_dimension(dec.filtration)


@pytest.mark.parametrize("name", PRESETS)
def test_drift_is_central_in_extended_graded(name):
    alg = build_preset(name)
    rng = np.random.default_rng(8)
    dec = decompose(alg, rng.integers(-2, 3, alg.dim))
    ext = BiasExtension(dec)
    X = ext.embed(dec.X)
    v = rng.standard_normal((200, ext.dim))
    assert np.allclose(ext.grading.graded_bracket(X, v), 0)


@pytest.mark.parametrize("name", PRESETS)
def test_extension_projection_is_morphism(name):
    alg = build_preset(name)
    rng = np.random.default_rng(6)
    dec = decompose(alg, rng.integers(-2, 3, alg.dim))
    ext = BiasExtension(dec)
    a, b = rng.standard_normal((2, 50, ext.dim))
    lhs = ext.project(bch_product(ext.algebra, a, b))
    rhs = bch_product(alg, ext.project(a), ext.project(b))
    assert np.allclose(lhs, rhs)
    # [chi, x] = [X, x]
    x = rng.standard_normal((20, alg.dim))
    if ext.biased:
        assert np.allclose(ext.algebra.bracket(ext.chi, ext.embed(x)), ext.embed(alg.bracket(dec.X, x)))


def test_serialization():
    dec = decompose(filiform3(), [0, 1, 0, 0])
    data = dec.to_json()
    assert data["homogeneous_dimension"] == 9
    assert data["filtration"]["dims"] == [4, 2, 2, 1]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=6, max_size=6))
def test_unitriangular_filtration_properties(xs):
    alg = unitriangular(4)
    f = weight_filtration(alg, xs)
    assert f.is_nested() and f.is_bracket_compatible()
    dec = choose_weight_decomposition(f)
    assert dec.homogeneous_dimension == homogeneous_dimension(f)
