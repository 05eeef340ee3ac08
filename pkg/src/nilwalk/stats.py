"""Two-sample comparisons, rate curves, local limit estimates and the asymptotic-closeness test."""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.spatial.distance import cdist


def ecf(batch, dual_grid):
    """Empirical characteristic function (1/n) Σ exp(-2πi <ξ, x>) for each row ξ of the grid."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    grid = np.atleast_2d(np.asarray(dual_grid, dtype=float))
    out = np.empty(len(grid), dtype=complex)
    for s in range(0, len(grid), 256):
        out[s:s + 256] = np.exp(-2j * np.pi * (batch @ grid[s:s + 256].T)).mean(axis=0)
    return out


def ks_threshold(n, m, projections, level=0.05):
    """Family-wise KS pass level over `projections` tests (Bonferroni on the asymptotic law)."""
    alpha = level / max(projections, 1)
    c = np.sqrt(-0.5 * np.log(alpha / 2))
    return float(c * np.sqrt((n + m) / (n * m)))


def energy_distance(a, b):
    """Multivariate energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| (V-statistic)."""
    return float(2 * cdist(a, b).mean() - cdist(a, a).mean() - cdist(b, b).mean())


def _energy_perm_test(a, b, perms, rng):
    pooled = np.vstack([a, b])
    D = cdist(pooled, pooled)
    n, m = len(a), len(b)
    rows = D.sum(axis=1)
    # column j of U marks the rows assigned to the first sample; column 0 is the observed split
    U = np.zeros((n + m, perms + 1))
    U[:n, 0] = 1
    base = np.arange(n + m)
    for j in range(1, perms + 1):
        U[rng.permutation(base)[:n], j] = 1
    DU = D @ U
    s_aa = np.einsum("ij,ij->j", U, DU)
    s_ab = np.einsum("ij,ij->j", 1 - U, DU)
    s_bb = (1 - U).T @ rows - s_ab
    stats = 2 * s_ab / (n * m) - s_aa / n ** 2 - s_bb / m ** 2
    observed = stats[0]
    count = int(np.sum(stats[1:] >= observed))
    return float(observed), float((count + 1) / (perms + 1))


@dataclass
class ComparisonReport:
    ks: np.ndarray                 # per projection
    directions: np.ndarray         # projection directions (rows)
    ks_threshold: float
    energy: float
    energy_pvalue: float
    ecf_gap: float
    n: int
    m: int
    extra: dict = field(default_factory=dict)

    @property
    def max_ks(self):
        return float(self.ks.max())

    @property
    def ks_pass(self):
        return bool(self.max_ks <= self.ks_threshold)

    @property
    def energy_pass(self):
        return bool(self.energy_pvalue >= 0.05)

    def to_json(self):
        return {"ks": self.ks.tolist(), "max_ks": self.max_ks, "ks_threshold": self.ks_threshold,
                "ks_pass": self.ks_pass, "energy": self.energy, "energy_pvalue": self.energy_pvalue,
                "energy_pass": self.energy_pass, "ecf_gap": self.ecf_gap, "n": self.n, "m": self.m}


def two_sample_distance(a, b, n_directions=20, seed=0, energy_subsample=1000, permutations=200,
                        ecf_grid=None):
    """Per-coordinate and random-projection KS distances, energy distance, ECF gap.

    Projection directions and subsamples come from `seed` only, so the report is
    symmetric in its arguments.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("batches have different dimensions")
    d = a.shape[1]
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_directions, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.vstack([np.eye(d), dirs])
    ks = np.array([sps.ks_2samp(a @ u, b @ u).statistic for u in dirs])

    k = min(energy_subsample, len(a), len(b))
    # subsample indices depend on each batch's size only, and the pair is put in
    # a canonical order, so swapping the arguments gives the same report
    sub_a = a[np.sort(np.random.default_rng([seed, len(a)]).choice(len(a), k, replace=False))]
    sub_b = b[np.sort(np.random.default_rng([seed, len(b)]).choice(len(b), k, replace=False))]
    first, second = sorted([sub_a, sub_b], key=lambda s: s.tobytes())
    energy, pval = _energy_perm_test(first, second, permutations, np.random.default_rng(seed + 1))

    if ecf_grid is None:
        ecf_grid = rng.standard_normal((32, d)) * 0.25
    gap = float(np.abs(ecf(a, ecf_grid) - ecf(b, ecf_grid)).max())
    return ComparisonReport(ks, dirs, ks_threshold(len(a), len(b), len(dirs)), energy, pval, gap,
                            len(a), len(b))


# -- Berry-Esseen --------------------------------------------------------------

@dataclass
class RateCurve:
    Ns: list
    walk_means: np.ndarray
    walk_se: np.ndarray
    reference: float
    reference_se: float
    errors: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    slope: float

    def ratios(self):
        """error(N_{k+1}) / error(N_k) along the list of N."""
        return self.errors[1:] / self.errors[:-1]

    def to_rows(self):
        return [(n, m, s, e, lo, hi) for n, m, s, e, lo, hi in
                zip(self.Ns, self.walk_means, self.walk_se, self.errors, self.ci_low, self.ci_high)]


def berry_esseen_curve(cfg_template, f, Ns, reference=None, reference_se=0.0, trials=None, seed=0,
                       diffusion_trials=10**5, dt=1e-3):
    """|E f(walk endpoint) - E f(limit)| for each N, with 95% normal CIs.

    `reference` is the limit value of E f; when omitted it is estimated by
    simulating the limiting diffusion.  The fitted slope is that of
    log error against log N.
    """
    from dataclasses import replace
    from .walk import walk_batch
    means, ses = [], []
    for k, N in enumerate(Ns):
        cfg = replace(cfg_template, N=int(N), trials=trials or cfg_template.trials, seed=seed + k)
        vals = np.asarray(f(walk_batch(cfg).samples), dtype=float)
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / np.sqrt(len(vals)))
    if reference is None:
        from .diffusion import DiffusionConfig, generator_from_measure, simulate_diffusion_batch
        from .measures import abelian_stats
        dec = cfg_template.dec
        spec = generator_from_measure(dec, abelian_stats(cfg_template.measure, dec))
        vals = np.asarray(f(simulate_diffusion_batch(DiffusionConfig(spec, 1.0, dt, diffusion_trials, seed + 997))))
        reference, reference_se = float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))
    means, ses = np.array(means), np.array(ses)
    err = np.abs(means - reference)
    half = 1.96 * np.sqrt(ses ** 2 + reference_se ** 2)
    lo = np.maximum(err - half, 0.0)
    hi = err + half
    slope = float(np.polyfit(np.log(Ns), np.log(np.maximum(err, 1e-300)), 1)[0]) if len(Ns) > 1 else float("nan")
    return RateCurve(list(Ns), means, ses, float(reference), float(reference_se), err, lo, hi, slope)


# -- local limit -------------------------------------------------------------------

def bump(center, half_widths):
    """Smooth product bump Π φ((x_k - c_k)/h_k), φ(u) = exp(1 - 1/(1 - u²)) on |u| < 1."""
    center = np.asarray(center, dtype=float)
    h = np.asarray(half_widths, dtype=float)

    def f(x):
        u = (np.atleast_2d(x) - center) / h
        inside = np.all(np.abs(u) < 1, axis=1)
        out = np.zeros(len(u))
        ui = u[inside]
        out[inside] = np.exp(np.sum(1 - 1 / (1 - ui * ui), axis=1))
        return out

    f.center = center
    f.half_widths = h
    f.volume = float(np.prod(h) * BUMP_1D_INTEGRAL ** len(h))
    return f


def _bump_1d_integral():
    from scipy.integrate import quad
    return quad(lambda u: np.exp(1 - 1 / (1 - u * u)) if abs(u) < 1 else 0.0, -1, 1)[0]


BUMP_1D_INTEGRAL = _bump_1d_integral()


class InsufficientBudget(RuntimeError):
    """Too few expected bump hits for a meaningful local limit estimate."""


@dataclass
class LLTEstimate:
    N: int
    trials: int
    hits: int
    estimate: float            # N^{d/2} * mean f
    stderr: float
    predicted: float
    ratio: float
    expected_hits: float

    def to_json(self):
        return self.__dict__.copy()


def _bump_support_box(f):
    return f.center - f.half_widths, f.center + f.half_widths


def predicted_llt_value(dec, density, f, N, order=12):
    """∫ f(x) ρ(D_{1/√N} x) dx for a limit density ρ, by tensor Gauss-Legendre over the bump's box."""
    lo, hi = _bump_support_box(f)
    x, w = np.polynomial.legendre.leggauss(order)
    axes = [(l + h) / 2 + (h - l) / 2 * x for l, h in zip(lo, hi)]
    wts = [(h - l) / 2 * w for l, h in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    wmesh = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), axis=-1).reshape(-1, len(lo)), axis=1)
    vals = f(mesh) * density(dec.dilate(1 / np.sqrt(N), mesh))
    return float(vals @ wmesh)


def kernel_density(samples):
    """Gaussian KDE with Silverman bandwidth, as a callable on rows."""
    kde = sps.gaussian_kde(np.asarray(samples, dtype=float).T, bw_method="silverman")
    return lambda pts: kde(np.atleast_2d(pts).T)


def llt_ratio(cfg, f, density=None, min_hits=100, deviation=None, hit_probability=None):
    """Estimate N^{d/2} μ^{*N} * δ_{-NX}(f) and compare with the limit prediction.

    The walk is not rescaled here.  `density` is the limit density at time 1
    (a callable on rows of g coordinates); without it a kernel estimate from
    the limiting diffusion is used.  `deviation` = (g, h) evaluates
    f(g^-1 * x * h^-1) instead, i.e. the bump translated on both sides.
    `hit_probability` is a rough prior guess of P(f > 0) used for the budget
    check; by default it is derived from the predicted value, assuming the
    density is flat across the bump's support box.
    """
    from dataclasses import replace
    from .algebra import bch_product
    from .walk import walk_batch
    dec = cfg.dec
    d = dec.homogeneous_dimension
    N = cfg.N
    if density is None:
        from .diffusion import DiffusionConfig, generator_from_measure, simulate_diffusion_batch
        from .measures import abelian_stats
        spec = generator_from_measure(dec, abelian_stats(cfg.measure, dec))
        density = kernel_density(simulate_diffusion_batch(DiffusionConfig(spec, 1.0, 1e-3, 20000, cfg.seed + 7)))
    predicted = predicted_llt_value(dec, density, f, N)
    if hit_probability is None:
        lo, hi = _bump_support_box(f)
        # the support box has volume Π 2h while the bump integrates to Π h·BUMP_1D_INTEGRAL
        hit_probability = predicted / N ** (d / 2) * (2 / BUMP_1D_INTEGRAL) ** len(lo)
    expected = hit_probability * cfg.trials
    if expected < min_hits:
        need = int(np.ceil(min_hits / max(hit_probability, 1e-300)))
        raise InsufficientBudget(f"expected {expected:.1f} hits < {min_hits}; need about {need} trials")
    endpoints = walk_batch(replace(cfg, rescale=False, recentering="drift")).samples
    if deviation is not None:
        g, h = (np.asarray(v, dtype=float) for v in deviation)
        endpoints = bch_product(dec.algebra, bch_product(dec.algebra, -g, endpoints), -h)
    vals = f(endpoints)
    scale = N ** (d / 2)
    est = float(vals.mean() * scale)
    se = float(vals.std(ddof=1) / np.sqrt(len(vals)) * scale)
    return LLTEstimate(N, cfg.trials, int((vals > 0).sum()), est, se, predicted,
                       est / predicted if predicted else float("inf"), float(expected))


# -- asymptotic closeness --------------------------------------------------------

class NotComparable(ValueError):
    """Weight filtrations differ, so the criterion does not apply."""


def asymptotically_close(mu1, mu2, dec, tol=1e-9):
    """Same abelianized mean and covariance, and same mean modulo g^(3).

    Both measures must induce the weight filtration of `dec`.
    """
    from .filtration import weight_filtration
    from . import rational as Q
    alg = dec.algebra
    f1 = weight_filtration(alg, Q.vec(mu1.mean()))
    f2 = weight_filtration(alg, Q.vec(mu2.mean()))
    if f1.spaces != f2.spaces or f1.spaces != dec.filtration.spaces:
        raise NotComparable("not comparable by this criterion: weight filtrations differ")
    m1, m2 = mu1.mean(), mu2.mean()
    R1 = dec.Pinv[dec.layer_mask(1)]
    c1 = R1 @ mu1.covariance() @ R1.T
    c2 = R1 @ mu2.covariance() @ R1.T
    low = dec.layer_mask(1) | dec.layer_mask(2)
    same_mean = np.allclose(dec.to_adapted(m1)[low], dec.to_adapted(m2)[low], atol=tol, rtol=0)
    same_cov = np.allclose(c1, c2, atol=tol, rtol=0)
    return bool(same_mean and same_cov)
