"""Support of the limit law: horizontal products, multiplicative integrals, algebraic criteria."""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

import numpy as np

from . import rational as Q
from .algebra import bch_product, bch_product_cols, exact
from .filtration import decompose

# -- horizontal endpoints ------------------------------------------------------------


def _is_exact(values):
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in values)


def horizontal_endpoint(spec, controls):
    """∏_i (u_i *' t_i(B + Y)) *' (-Y) for controls [(u_i, t_i), ...].

    u_i must lie in m^(1), t_i >= 0 with Σ t_i = 1.  When every entry is an
    int or Fraction the computation is exact and returns Fractions.
    """
    dec, ext = spec.dec, spec.ext
    grading = ext.grading
    us = [list(u) for u, _ in controls]
    ts = [t for _, t in controls]
    exact_mode = all(_is_exact(u) for u in us) and _is_exact(ts)
    if any(t < 0 for t in ts):
        raise ValueError("control times must be nonnegative")
    if exact_mode:
        if sum(Fraction(t) for t in ts) != 1:
            raise ValueError("control times must sum to 1")
    elif abs(sum(ts) - 1) > 1e-12:
        raise ValueError("control times must sum to 1 (within 1e-12)")
    graded = grading.graded
    if exact_mode:
        conv = exact
        Y = conv(list(ext.chi))
        B = conv(list(spec.B)) if np.any(spec.B) else conv([0] * dec.dim)
    else:
        conv = lambda v: np.asarray(v, dtype=float)
        Y = ext.chi
        B = spec.B
    drift = grading.to_adapted(ext.embed(B) + Y)
    Ya = grading.to_adapted(Y)
    out = grading.to_adapted(ext.embed(conv([0] * dec.dim)))
    for u, t in controls:
        ua = grading.to_adapted(ext.embed(conv(u)))
        if np.any(ua[grading.weights != 1] != 0):
            if exact_mode or np.abs(ua[grading.weights != 1]).max() > 1e-12:
                raise ValueError("controls must lie in the first layer")
        t = Fraction(t) if exact_mode else float(t)
        out = bch_product(graded, out, bch_product(graded, ua, drift * t))
    out = bch_product(graded, out, -Ya)
    return spec.restrict(out)


# -- multiplicative integrals ------------------------------------------------------------

@dataclass
class PiecewisePath:
    breaks: np.ndarray     # a = τ_0 < ... < τ_m = b
    values: np.ndarray     # (m, dim): constant value on each piece, g coordinates

    def __post_init__(self):
        self.breaks = np.asarray(self.breaks, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.values) != len(self.breaks) - 1:
            raise ValueError("one value per piece required")

    def __call__(self, t):
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.values) - 1)
        return self.values[idx]


def descents(perm):
    return sum(1 for i in range(len(perm) - 1) if perm[i] > perm[i + 1])


def strichartz_coefficient(perm):
    """(-1)^e / (r² C(r-1, e)) with e the descent count and r the length."""
    r, e = len(perm), descents(perm)
    return Fraction((-1) ** e, r * r * comb(r - 1, e))


def _left_bracket(bracket, vecs):
    out = vecs[0]
    for v in vecs[1:]:
        out = bracket(out, v)
    return out


CLOSED_FORM_MAX_STEP = 4


def strichartz_integral(grading, path):
    """Multiplicative integral of a piecewise constant path for the graded product.

    Closed form: Σ_r Σ_τ coefficient(τ) ∫_{t_1<...<t_r} [..[c(t_τ(1)), c(t_τ(2))]..., c(t_τ(r))]' dt,
    the simplex integrals being exact sums over how the ordered times fall
    into pieces.  For step above 4 the exact piece-by-piece product is used.
    """
    graded = grading.graded
    c = grading.to_adapted(path.values)
    lengths = np.diff(path.breaks)
    s = graded.step
    if s > CLOSED_FORM_MAX_STEP:
        out = np.zeros(grading.dim)
        for v, h in zip(c, lengths):
            out = bch_product(graded, out, h * v)
        return grading.from_adapted(out)
    m = len(lengths)
    total = lengths @ c
    for r in range(2, s + 1):
        perms = [(p, float(strichartz_coefficient(p))) for p in itertools.permutations(range(r))]
        for pieces in itertools.combinations_with_replacement(range(m), r):
            vol = 1.0
            for j, grp in itertools.groupby(pieces):
                k = len(list(grp))
                vol *= lengths[j] ** k / factorial(k)
            for p, coef in perms:
                total = total + coef * vol * _left_bracket(graded.bracket, [c[pieces[i]] for i in p])
    return grading.from_adapted(total)


def fine_mesh_product(grading, path, cells):
    """Left-point product ∏_j (h c(t_j)) over a uniform mesh, a first-order approximation."""
    a, b = path.breaks[0], path.breaks[-1]
    h = (b - a) / cells
    vals = grading.to_adapted(path(a + h * np.arange(cells)))
    out = np.zeros(grading.dim)
    for v in vals:
        out = bch_product(grading.graded, out, h * v)
    return grading.from_adapted(out)


def fine_mesh_products(grading, paths, cells):
    """Vectorized fine_mesh_product over paths sharing the same interval."""
    a, b = paths[0].breaks[0], paths[0].breaks[-1]
    h = (b - a) / cells
    times = a + h * np.arange(cells)
    vals = np.stack([grading.to_adapted(p(times)) for p in paths], axis=-1)   # (cells, dim, n)
    out = np.zeros((grading.dim, len(paths)))
    for v in vals:
        out = bch_product_cols(grading.graded, out, h * v)
    return grading.from_adapted(out.T)


# -- filiform quotient ------------------------------------------------------------------------

def filiform_margin(s):
    """2 s4 - (s1 + s3) s3 for rows s = (s1, s2, s3, s4)."""
    s = np.asarray(s)
    return 2 * s[..., 3] - (s[..., 0] + s[..., 2]) * s[..., 2]


def filiform_member(s, tol=1e-9):
    """Classify a point against {2 s4 >= (s1 + s3) s3}: inside, boundary or outside."""
    if _is_exact(list(s)):
        g = 2 * Fraction(s[3]) - (Fraction(s[0]) + Fraction(s[2])) * Fraction(s[2])
        tol = Fraction(0) if tol is None else Q.to_fraction(tol)
    else:
        g = float(filiform_margin(np.asarray(s, dtype=float)))
    if g > tol:
        return "inside"
    if g < -tol:
        return "outside"
    return "boundary"


def never_full_fraction(samples, N, band=3.0):
    """Fraction of rescaled endpoints with margin below -band·IQR/√N."""
    g = filiform_margin(np.asarray(samples, dtype=float))
    q1, q3 = np.percentile(g, [25, 75])
    tol = band * (q3 - q1) / np.sqrt(N)
    return float(np.mean(g < -tol)), float(tol)


# -- algebraic criteria ----------------------------------------------------------------------------

def gaussian_case_check(alg, xbar):
    """Two characterizations of a Gaussian limit, decided in exact arithmetic.

    condition_i: [X, g^[a]] + g^[a+2] = g^[a+1] for every a (X any lift of xbar).
    condition_iii: the weight layers m^(i) are nonzero exactly for odd i <= 2s-1.
    """
    x = Q.vec(xbar)
    series = alg.central_series_spaces
    space = lambda a: series[a - 1] if a - 1 < len(series) else ()
    cond_i = True
    for a in range(1, alg.step + 1):
        image = Q.span([alg.bracket_exact(x, v) for v in space(a)] + list(space(a + 2)))
        if image != Q.span(space(a + 1)):
            cond_i = False
            break
    dec = decompose(alg, x)
    dims = dec.layer_dims()
    cond_iii = all((dims.get(i, 0) != 0) == (i % 2 == 1) for i in range(1, 2 * alg.step))
    return {"condition_i": cond_i, "condition_iii": cond_iii, "agree": cond_i == cond_iii,
            "gaussian": cond_i and cond_iii}


@dataclass
class DCReport:
    holds: bool
    certificate: dict = None


def dc_condition_check(alg, generators, trials=50, seed=0):
    """Randomized test of [v_i, ad(w)^k v_i] = 0 for k <= s-2 at integer witnesses w in {-3..3}^dim.

    A failure comes with an exact certificate (i, k, w, value).
    """
    gens = [Q.vec(v) for v in generators]
    derived = alg.central_series_spaces[1] if len(alg.central_series_spaces) > 1 else ()
    if len(Q.span(gens + list(derived))) != alg.dim:
        raise ValueError("generators do not span the abelianization")
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        w = Q.vec(int(a) for a in rng.integers(-3, 4, alg.dim))
        for i, v in enumerate(gens):
            y = v
            for k in range(0, alg.step - 1):
                val = alg.bracket_exact(v, y)
                if not Q.is_zero(val):
                    return DCReport(False, {"generator": i, "k": k, "w": [Q.fraction_str(a) for a in w],
                                            "value": [Q.fraction_str(a) for a in val]})
                y = alg.bracket_exact(w, y)
    return DCReport(True)
