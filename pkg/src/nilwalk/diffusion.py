"""The limiting hypoelliptic diffusion and the explicit Heisenberg density.

W is never simulated from its time-dependent generator.  Instead the
homogenized process Z(t) = W(t) *' tY solves a left-invariant SDE on the
graded extension with constant coefficients ½ΣE_i² + (B + Y); Euler steps
Z <- Z *' (√dt Σ g_i E_i + dt (B + Y)) are taken in adapted coordinates
and W(t) = Z(t) *' (-tY) is read off at the end.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .algebra import bch_product
from .filtration import BiasExtension
from .walk import DEFAULT_CHUNK, _chunks, _parallel, chunk_rng


@dataclass
class GeneratorSpec:
    dec: object
    E: np.ndarray          # (dim, q): frame columns in g coordinates
    B: np.ndarray          # drift in m^(2), g coordinates
    ext: object = None     # BiasExtension; built on demand

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=float).reshape(self.dec.dim, -1)
        self.B = np.asarray(self.B, dtype=float)
        if self.ext is None:
            self.ext = BiasExtension(self.dec)

    @property
    def Y(self):
        """Homogenizing vector χ in g~ coordinates (zero when unbiased)."""
        return self.ext.chi

    def adapted_frame(self):
        g = self.ext.grading
        return g.to_adapted(self.ext.embed(self.E.T))

    def adapted_drift(self):
        g = self.ext.grading
        return g.to_adapted(self.ext.embed(self.B) + self.Y)

    def adapted_Y(self):
        return self.ext.grading.to_adapted(self.Y)

    def restrict(self, z_adapted):
        """Adapted g~ coordinates of a point in g -> g coordinates."""
        d = self.dec.dim
        return self.dec.from_adapted(z_adapted[..., :d])


def generator_from_measure(dec, report):
    """Frame E_i whitening Cov(μ_ab) by its symmetric square root, and B = E[x^(2)]."""
    w, v = np.linalg.eigh(report.cov)
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.T
    layer = dec.P[:, dec.layer_mask(1)]
    return GeneratorSpec(dec, layer @ root, report.B)


@dataclass
class DiffusionConfig:
    spec: GeneratorSpec
    t: float = 1.0
    dt: float = 1e-3
    trials: int = 10**5
    seed: int = 0
    threads: int = 1
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        if not 0 < self.dt <= self.t:
            if self.t == 0:
                return
            raise ValueError("need 0 < dt <= t")

    @property
    def steps(self):
        return int(round(self.t / self.dt)) if self.t > 0 else 0


def _simulate_adapted(cfg, rng, n):
    spec = cfg.spec
    graded = spec.ext.grading.graded
    E = spec.adapted_frame()                # (q, D)
    V = spec.adapted_drift()
    D = len(V)
    Z = np.zeros((D, n))
    steps = cfg.steps
    if steps:
        h = cfg.t / steps
        root = np.sqrt(h)
        for _ in range(steps):
            g = rng.standard_normal((E.shape[0], n))
            step = root * (E.T @ g) + h * V[:, None]
            Z = _graded_cols(graded, Z, step)
    W = _graded_cols(graded, Z, (-cfg.t * spec.adapted_Y())[:, None])
    return W.T


def _graded_cols(graded, a, b):
    from .algebra import bch_product_cols
    return bch_product_cols(graded, a, b)


def simulate_diffusion_endpoint(cfg, rng):
    return cfg.spec.restrict(_simulate_adapted(cfg, rng, 1))[0]


def simulate_diffusion_batch(cfg, adapted=False):
    """W(t) samples, shape (trials, dim), in g coordinates (or adapted g~ coordinates)."""
    jobs = _chunks(cfg.trials, cfg.chunk_size)
    parts = _parallel(lambda j: _simulate_adapted(cfg, chunk_rng(cfg.seed, j[0]), j[1]), jobs, cfg.threads)
    out = np.concatenate(parts)
    return out if adapted else cfg.spec.restrict(out)


# -- self-consistency checks ---------------------------------------------------

def scaling_check(spec, t, r, trials, seed=0, dt=1e-3, threads=1):
    """Compare the laws of W(rt) and D_{√r} W(t) with independent streams."""
    from .stats import two_sample_distance
    a = simulate_diffusion_batch(DiffusionConfig(spec, r * t, dt, trials, seed, threads))
    b = simulate_diffusion_batch(DiffusionConfig(spec, t, dt, trials, seed + 1, threads))
    b = spec.dec.dilate(np.sqrt(r), b)
    return two_sample_distance(a, b, seed=seed)


def semigroup_check(spec, s, t, trials, seed=0, dt=1e-3, threads=1):
    """Compare the laws of σ_s *' Ad(sY) σ_t and σ_{s+t}."""
    from .stats import two_sample_distance
    grading = spec.ext.grading
    if s == 0:
        left = np.zeros((trials, grading.dim))
    else:
        left = simulate_diffusion_batch(DiffusionConfig(spec, s, dt, trials, seed, threads), adapted=True)
    right = simulate_diffusion_batch(DiffusionConfig(spec, t, dt, trials, seed + 1, threads), adapted=True)
    sY = s * spec.adapted_Y()
    conj = bch_product(grading.graded, bch_product(grading.graded, sY, right), -sY)
    combined = spec.restrict(bch_product(grading.graded, left, conj))
    target = simulate_diffusion_batch(DiffusionConfig(spec, s + t, dt, trials, seed + 2, threads))
    return two_sample_distance(combined, target, seed=seed)


# -- Heisenberg density ----------------------------------------------------------

XI_CUT = 40.0


@lru_cache(maxsize=None)
def _gauss_legendre(a, b, panels, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = (edges[1:] + edges[:-1]) / 2
    half = (edges[1:] - edges[:-1]) / 2
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def levy_density(x, y, z, panels=160, order=16):
    """Density at time 1 of the centered, identity-covariance Heisenberg limit.

    u(x,y,z) = (1/2π²) ∫ cos(2ξz) ξ/sinh ξ exp(-½(x²+y²) ξ/tanh ξ) dξ,
    the integral cut at |ξ| = 40 and evaluated by composite Gauss-Legendre.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    xi, w = _gauss_legendre(0.0, XI_CUT, panels, order)
    shape = x.shape
    r2 = (x * x + y * y).ravel()[:, None]
    zz = z.ravel()[:, None]
    out = np.empty(r2.shape[0])
    kernel = xi / np.sinh(xi)
    coth = xi / np.tanh(xi)
    step = 4096
    for s in range(0, len(out), step):
        vals = np.cos(2 * xi * zz[s:s + step]) * kernel * np.exp(-0.5 * r2[s:s + step] * coth)
        out[s:s + step] = 2 * vals @ w
    return (out / (2 * np.pi ** 2)).reshape(shape)


def _chunked(z, fn, step=2048):
    z = np.asarray(z, dtype=float)
    flat = z.ravel()
    out = np.empty(flat.shape)
    for s in range(0, len(flat), step):
        out[s:s + step] = fn(flat[s:s + step])
    return out.reshape(z.shape)


def levy_area_marginal_density(z, panels=400, order=16):
    """Marginal of the third coordinate: the x,y Gaussian integral of the density formula.

    ∫∫ exp(-½ r² ξ/tanh ξ) dx dy = 2π tanh ξ / ξ, leaving (1/π) ∫ cos(2ξz)/cosh ξ dξ.
    """
    xi, w = _gauss_legendre(0.0, XI_CUT, panels, order)
    return 2 * _chunked(z, lambda zz: (np.cos(2 * np.multiply.outer(zz, xi)) / np.cosh(xi)) @ w) / np.pi


def levy_area_marginal_cdf(z, panels=400, order=16):
    """CDF of the third coordinate, integrating the marginal in z under the ξ integral.

    F(z) = ½ + (1/π) ∫_0^∞ sin(2ξz) / (ξ cosh ξ) dξ.
    """
    xi, w = _gauss_legendre(0.0, XI_CUT, panels, order)
    return 0.5 + _chunked(z, lambda zz: (np.sin(2 * np.multiply.outer(zz, xi)) / (xi * np.cosh(xi))) @ w) / np.pi


def heisenberg_limit_density(points, frame):
    """Density of the centered Heisenberg limit with frame E (2x2, columns E_1, E_2 in (e1, e2)).

    (x, y, z) -> (E(x, y), det(E) z) is an automorphism carrying the
    identity-covariance law to this one.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    frame = np.asarray(frame, dtype=float)
    det = np.linalg.det(frame)
    xy = np.linalg.solve(frame, points[:, :2].T).T
    return levy_density(xy[:, 0], xy[:, 1], points[:, 2] / det) / det ** 2
