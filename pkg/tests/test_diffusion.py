import numpy as np
import pytest
from scipy import stats as sps

from nilwalk.algebra import abelian, filiform3, heisenberg
from nilwalk.diffusion import (
    DiffusionConfig, GeneratorSpec, generator_from_measure, heisenberg_limit_density, levy_area_marginal_cdf,
    levy_area_marginal_density, levy_density, scaling_check, semigroup_check, simulate_diffusion_batch,
    simulate_diffusion_endpoint,
)
from nilwalk.filtration import decompose
from nilwalk.measures import AtomicMeasure, GaussianMeasure, ShiftedMeasure, abelian_stats
from nilwalk.stats import two_sample_distance
from nilwalk.walk import chunk_rng


def heis_spec(xbar=(0, 0, 0)):
    dec = decompose(heisenberg(), list(xbar))
    return GeneratorSpec(dec, np.eye(3)[:, :2], np.zeros(3))


def test_identity_covariance_gives_coordinate_frame():
    dec = decompose(heisenberg())
    rep = abelian_stats(GaussianMeasure(np.zeros(3), np.diag([1.0, 1.0, 0.0])), dec)
    spec = generator_from_measure(dec, rep)
    assert np.allclose(spec.E, np.eye(3)[:, :2])
    assert np.allclose(spec.B, 0)


def test_diagonal_covariance_square_root():
    dec = decompose(heisenberg())
    rep = abelian_stats(GaussianMeasure(np.zeros(3), np.diag([4.0, 1.0, 0.0])), dec)
    spec = generator_from_measure(dec, rep)
    assert np.allclose(spec.E, [[2, 0], [0, 1], [0, 0]])


def test_frame_whitens_covariance():
    dec = decompose(filiform3(), [1, 0, 0, 0])
    cov = np.array([[2.0, 0.7, 0.1, 0], [0.7, 1.0, 0, 0.2], [0.1, 0, 1, 0], [0, 0.2, 0, 1]])
    rep = abelian_stats(GaussianMeasure(np.array([1.0, 0, 0.5, 0]), cov), dec)
    spec = generator_from_measure(dec, rep)
    Einv = np.linalg.pinv(dec.to_adapted(spec.E.T)[:, dec.layer_mask(1)].T)
    assert np.allclose(Einv @ rep.cov @ Einv.T, np.eye(2), atol=1e-9)


def test_commutator_mean_becomes_drift():
    dec = decompose(heisenberg())
    m = ShiftedMeasure(GaussianMeasure(np.zeros(3), np.diag([1.0, 1.0, 0.0])), np.array([0, 0, 0.7]))
    spec = generator_from_measure(dec, abelian_stats(m, dec))
    assert np.allclose(spec.B, [0, 0, 0.7])


def test_zero_frame_returns_origin():
    dec = decompose(heisenberg(), [0, 1, 0])
    spec = GeneratorSpec(dec, np.zeros((3, 0)), np.zeros(3))
    cfg = DiffusionConfig(spec, t=1.0, dt=0.01, trials=4)
    assert np.allclose(simulate_diffusion_batch(cfg), 0, atol=1e-14)
    assert np.allclose(simulate_diffusion_endpoint(cfg, chunk_rng(0, 0)), 0, atol=1e-14)


def test_config_validation():
    spec = heis_spec()
    with pytest.raises(ValueError):
        DiffusionConfig(spec, t=1.0, dt=2.0)
    with pytest.raises(ValueError):
        DiffusionConfig(spec, t=1.0, dt=0.0)


def test_abelian_is_exact_gaussian():
    dec = decompose(abelian(2))
    E = np.array([[2.0, 0.0], [1.0, 1.0]])
    B = np.zeros(2)
    w = simulate_diffusion_batch(DiffusionConfig(GeneratorSpec(dec, E, B), t=1.0, dt=0.1, trials=50000, seed=1))
    assert np.allclose(np.cov(w.T), E @ E.T, atol=0.06)
    for k in range(2):
        sd = np.sqrt((E @ E.T)[k, k])
        assert sps.kstest(w[:, k] / sd, "norm").pvalue > 0.01


def test_simulation_deterministic():
    cfg = DiffusionConfig(heis_spec([0, 1, 0]), t=1.0, dt=0.05, trials=300, seed=4, chunk_size=64)
    a = simulate_diffusion_batch(cfg)
    b = simulate_diffusion_batch(DiffusionConfig(cfg.spec, 1.0, 0.05, 300, 4, threads=2, chunk_size=64))
    assert np.array_equal(a, b)


def test_centered_heisenberg_area_matches_levy_marginal():
    w = simulate_diffusion_batch(DiffusionConfig(heis_spec(), t=1.0, dt=1e-3, trials=10**5, seed=0))
    ks = sps.kstest(w[:, 2], levy_area_marginal_cdf).statistic
    assert ks <= 0.02


def test_levy_density_origin():
    assert levy_density(0.0, 0.0, 0.0) == pytest.approx(0.25, abs=1e-12)


def test_levy_density_symmetries():
    x, y, z = 0.3, -1.2, 0.7
    assert levy_density(x, y, z) == pytest.approx(levy_density(x, y, -z), rel=1e-12)
    assert levy_density(x, y, z) == pytest.approx(levy_density(y, x, z), rel=1e-12)
    assert np.all(levy_density(np.linspace(-3, 3, 7), 0.0, np.linspace(-2, 2, 7)) > 0)


def composite_nodes(a, b, panels, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges)[:, None] / 2
    mid = (edges[1:] + edges[:-1])[:, None] / 2
    return (mid + half * x).ravel(), (half * w).ravel()


def test_levy_density_box_integral():
    gx, wx = composite_nodes(-7, 7, 1, 40)
    gz, wz = composite_nodes(-5, 5, 10, 12)
    X, Y, Zg = np.meshgrid(gx, gx, gz, indexing="ij")
    W = wx[:, None, None] * wx[None, :, None] * wz[None, None, :]
    total = float(np.sum(W * levy_density(X, Y, Zg, panels=80)))
    assert abs(total - 1) < 1e-3


def test_area_marginal_closed_forms():
    z = np.linspace(-3, 3, 25)
    assert np.allclose(levy_area_marginal_density(z), 1 / np.cosh(np.pi * z), atol=1e-12)
    assert np.allclose(levy_area_marginal_cdf(z), 2 / np.pi * np.arctan(np.exp(np.pi * z)), atol=1e-12)


def test_area_marginal_matches_density_integral():
    # integrate the 3D density over the plane numerically at a few heights
    xs, ws = np.polynomial.legendre.leggauss(60)
    g, w = xs * 8, ws * 8
    X, Y = np.meshgrid(g, g, indexing="ij")
    W = w[:, None] * w[None, :]
    for z in (0.0, 0.4, 1.1):
        plane = float(np.sum(W * levy_density(X, Y, np.full_like(X, z))))
        assert plane == pytest.approx(float(levy_area_marginal_density(z)), abs=1e-6)


def test_limit_density_frame_scaling():
    pts = np.array([[0.2, -0.4, 0.3], [1.0, 0.5, -0.2]])
    c = 1.7
    got = heisenberg_limit_density(pts, c * np.eye(2))
    want = levy_density(pts[:, 0] / c, pts[:, 1] / c, pts[:, 2] / c ** 2) / c ** 4
    assert np.allclose(got, want)
    assert np.allclose(heisenberg_limit_density(pts, np.eye(2)), levy_density(*pts.T))


def test_scaling_check_r_one_is_noise():
    rep = scaling_check(heis_spec([0, 1, 0]), t=0.5, r=1.0, trials=5000, dt=0.01)
    assert rep.ks_pass


def test_scaling_check_abelian():
    dec = decompose(abelian(2))
    spec = GeneratorSpec(dec, np.eye(2), np.zeros(2))
    assert scaling_check(spec, t=0.25, r=4.0, trials=5000, dt=0.05).ks_pass


def test_semigroup_check_s_zero():
    rep = semigroup_check(heis_spec([0, 1, 0]), s=0.0, t=0.5, trials=5000, dt=0.01)
    assert rep.ks_pass


def test_semigroup_check_abelian():
    dec = decompose(abelian(2))
    spec = GeneratorSpec(dec, np.eye(2), np.array([0.0, 0.0]))
    assert semigroup_check(spec, s=0.3, t=0.7, trials=5000, dt=0.05).ks_pass


def test_scaling_check_detects_wrong_exponent():
    # W(1) against W(1/4) dilated by 4 instead of 2 must fail
    spec = heis_spec([0, 1, 0])
    rep = scaling_check(spec, t=0.25, r=16.0, trials=5000, dt=0.01)
    assert rep.ks_pass
    a = simulate_diffusion_batch(DiffusionConfig(spec, 1.0, 0.01, 5000, 0))
    b = spec.dec.dilate(4.0, simulate_diffusion_batch(DiffusionConfig(spec, 0.25, 0.01, 5000, 1)))
    assert not two_sample_distance(a, b).ks_pass


def test_layer_variance_scaling():
    spec = heis_spec([0, 1, 0])
    ts = np.array([0.25, 1.0, 4.0])
    var = np.array([simulate_diffusion_batch(DiffusionConfig(spec, t, t / 200, 40000, seed=k)).var(axis=0)
                    for k, t in enumerate(ts)])
    for b, coord in ((1, 0), (1, 1), (3, 2)):
        slope = np.polyfit(np.log(ts), np.log(var[:, coord]), 1)[0]
        assert abs(slope - b) < 0.1


def test_weak_order_moments():
    spec = heis_spec([0, 1, 0])
    n = 40000
    a = simulate_diffusion_batch(DiffusionConfig(spec, 1.0, 0.02, n, seed=1))
    b = simulate_diffusion_batch(DiffusionConfig(spec, 1.0, 0.01, n, seed=2))
    for f in (lambda w: w, lambda w: w ** 2):
        fa, fb = f(a), f(b)
        se = np.sqrt(fa.var(axis=0) / n + fb.var(axis=0) / n)
        assert np.all(np.abs(fa.mean(axis=0) - fb.mean(axis=0)) <= np.maximum(2 * se, 5e-3))


def test_tail_decays_exponentially():
    w = simulate_diffusion_batch(DiffusionConfig(heis_spec([0, 1, 0]), 1.0, 0.01, 10**5, seed=3))
    r = np.linalg.norm(w, axis=1)
    R = np.arange(2.0, 6.5, 0.5)
    surv = np.array([np.mean(r > x) for x in R])
    keep = surv > 0
    slope = np.polyfit(R[keep], np.log(surv[keep]), 1)[0]
    assert slope < -1
    assert np.all(np.diff(surv) <= 0)


def test_biased_filiform_semigroup_small():
    dec = decompose(filiform3(), [0, 1, 0, 0])
    spec = GeneratorSpec(dec, np.eye(4)[:, :2], np.zeros(4))
    assert semigroup_check(spec, 0.5, 0.5, trials=5000, dt=0.01).ks_pass


def test_atomic_measure_generator():
    dec = decompose(heisenberg())
    atoms = np.array([[1, 1, 0], [1, -1, 0], [-1, 1, 0], [-1, -1, 0]], dtype=float)
    spec = generator_from_measure(dec, abelian_stats(AtomicMeasure(atoms, np.full(4, 0.25)), dec))
    assert np.allclose(spec.E, np.eye(3)[:, :2])
