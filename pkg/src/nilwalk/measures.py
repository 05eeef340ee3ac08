"""Increment laws on a nilpotent Lie algebra, their moments, and the truncation T_N."""

import itertools
from dataclasses import dataclass, field

import numpy as np


class DegenerateCovariance(ValueError):
    """The abelianized covariance is singular, so no central limit applies."""


class Measure:
    """Base class.  Subclasses provide `sample`, `mean`, `covariance` and `char`."""

    moment_order = np.inf
    dim: int

    def sample(self, rng, n):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def covariance(self):
        raise NotImplementedError

    def char(self, ell):
        """E exp(2πi <ell, x>) for each row of ell (linear functionals on g)."""
        raise NotImplementedError

    def atomic(self):
        """Equivalent AtomicMeasure if one with few atoms exists, else None."""
        return None

    def centered_is_symmetric(self):
        """True when x - E x has a symmetric law."""
        return False

    def to_json(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AtomicMeasure(Measure):
    atoms: np.ndarray
    probs: np.ndarray
    moment_order: float = np.inf

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (atoms.shape[0],):
            raise ValueError("one probability per atom required")
        if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
            raise ValueError("atom probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", np.cumsum(probs))

    @property
    def dim(self):
        return self.atoms.shape[1]

    def sample(self, rng, n):
        if len(self.probs) == 1:
            return np.repeat(self.atoms, n, axis=0)
        idx = np.searchsorted(self._cdf, rng.random(n) * self._cdf[-1], side="right")
        return self.atoms[np.minimum(idx, len(self.probs) - 1)]

    def mean(self):
        return self.probs @ self.atoms

    def covariance(self):
        c = self.atoms - self.mean()
        return (c * self.probs[:, None]).T @ c

    def char(self, ell):
        phase = np.atleast_2d(ell) @ self.atoms.T
        return np.exp(2j * np.pi * phase) @ self.probs

    def atomic(self):
        return self

    def expect(self, fn):
        """Exact expectation of a row-wise function of the atoms."""
        vals = np.asarray(fn(self.atoms), dtype=float)
        return np.tensordot(self.probs, vals, axes=1)

    def to_json(self):
        return {"kind": "atomic", "atoms": [[a.tolist(), float(p)] for a, p in zip(self.atoms, self.probs)],
                "moment_order": _order_json(self.moment_order)}


@dataclass(frozen=True, eq=False)
class GaussianMeasure(Measure):
    mu: np.ndarray
    cov: np.ndarray
    moment_order: float = np.inf

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (len(mu), len(mu)):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        w, v = np.linalg.eigh(cov)
        if w.min(initial=0) < -1e-10 * max(1.0, abs(w).max(initial=0)):
            raise ValueError("covariance must be positive semidefinite")
        keep = w > 1e-14 * max(1.0, w.max(initial=0))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_factor", v[:, keep] * np.sqrt(w[keep]))

    @property
    def dim(self):
        return len(self.mu)

    def sample(self, rng, n):
        r = self._factor.shape[1]
        if r == 0:
            return np.repeat(self.mu[None, :], n, axis=0)
        return self.mu + rng.standard_normal((n, r)) @ self._factor.T

    def mean(self):
        return self.mu.copy()

    def covariance(self):
        return self.cov.copy()

    def char(self, ell):
        ell = np.atleast_2d(ell)
        quad = np.einsum("ki,ij,kj->k", ell, self.cov, ell)
        return np.exp(2j * np.pi * ell @ self.mu - 2 * np.pi ** 2 * quad)

    def centered_is_symmetric(self):
        return True

    def to_json(self):
        return {"kind": "gaussian", "mean": self.mu.tolist(), "cov": self.cov.tolist(),
                "moment_order": _order_json(self.moment_order)}


@dataclass(frozen=True, eq=False)
class UniformMeasure(Measure):
    """Independent uniform coordinates on the box [low, high]; low == high pins a coordinate."""

    low: np.ndarray
    high: np.ndarray
    moment_order: float = np.inf

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != high.shape or np.any(high < low):
            raise ValueError("need low <= high coordinatewise")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self):
        return len(self.low)

    def sample(self, rng, n):
        return self.low + (self.high - self.low) * rng.random((n, self.dim))

    def mean(self):
        return (self.low + self.high) / 2

    def covariance(self):
        return np.diag((self.high - self.low) ** 2 / 12)

    def char(self, ell):
        ell = np.atleast_2d(ell)
        width = self.high - self.low
        return np.exp(2j * np.pi * ell @ self.mean()) * np.prod(np.sinc(ell * width), axis=1)

    def centered_is_symmetric(self):
        return True

    def to_json(self):
        return {"kind": "uniform", "low": self.low.tolist(), "high": self.high.tolist(),
                "moment_order": _order_json(self.moment_order)}


@dataclass(frozen=True, eq=False)
class ShiftedMeasure(Measure):
    """Law of x + shift for x drawn from `base` (vector translation)."""

    base: Measure
    shift: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float))

    @property
    def dim(self):
        return self.base.dim

    @property
    def moment_order(self):
        return self.base.moment_order

    def sample(self, rng, n):
        return self.base.sample(rng, n) + self.shift

    def mean(self):
        return self.base.mean() + self.shift

    def covariance(self):
        return self.base.covariance()

    def char(self, ell):
        ell = np.atleast_2d(ell)
        return self.base.char(ell) * np.exp(2j * np.pi * ell @ self.shift)

    def atomic(self):
        a = self.base.atomic()
        return None if a is None else AtomicMeasure(a.atoms + self.shift, a.probs, a.moment_order)

    def centered_is_symmetric(self):
        return self.base.centered_is_symmetric()

    def to_json(self):
        return {"kind": "shifted", "base": self.base.to_json(), "shift": self.shift.tolist()}


@dataclass(frozen=True, eq=False)
class SumMeasure(Measure):
    """Law of the vector sum of independent draws from each part.

    Parts supported on complementary coordinates give product measures.
    """

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts or len({p.dim for p in parts}) != 1:
            raise ValueError("parts must share one dimension")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self):
        return self.parts[0].dim

    @property
    def moment_order(self):
        return min(p.moment_order for p in self.parts)

    def sample(self, rng, n):
        out = self.parts[0].sample(rng, n)
        for p in self.parts[1:]:
            out = out + p.sample(rng, n)
        return out

    def mean(self):
        return sum(p.mean() for p in self.parts)

    def covariance(self):
        return sum(p.covariance() for p in self.parts)

    def char(self, ell):
        out = self.parts[0].char(ell)
        for p in self.parts[1:]:
            out = out * p.char(ell)
        return out

    def atomic(self, max_atoms=4096):
        ats = [p.atomic() for p in self.parts]
        if any(a is None for a in ats) or np.prod([len(a.probs) for a in ats]) > max_atoms:
            return None
        atoms, probs = [], []
        for combo in itertools.product(*[range(len(a.probs)) for a in ats]):
            atoms.append(sum(a.atoms[i] for a, i in zip(ats, combo)))
            probs.append(np.prod([a.probs[i] for a, i in zip(ats, combo)]))
        probs = np.array(probs)
        return AtomicMeasure(np.array(atoms), probs / probs.sum(), self.moment_order)

    def centered_is_symmetric(self):
        return all(p.centered_is_symmetric() for p in self.parts)

    def to_json(self):
        return {"kind": "sum", "parts": [p.to_json() for p in self.parts]}


def _order_json(m):
    return None if np.isinf(m) else float(m)


def measure_from_json(data, dim=None):
    """Build a measure from its JSON description."""
    kind = data.get("kind")
    order = data.get("moment_order")
    order = np.inf if order is None else float(order)
    if kind == "atomic":
        atoms = [a for a, _ in data["atoms"]]
        probs = [p for _, p in data["atoms"]]
        m = AtomicMeasure(np.array(atoms, dtype=float), np.array(probs, dtype=float), order)
    elif kind == "gaussian":
        m = GaussianMeasure(np.array(data["mean"], dtype=float), np.array(data["cov"], dtype=float), order)
    elif kind == "uniform":
        m = UniformMeasure(np.array(data["low"], dtype=float), np.array(data["high"], dtype=float), order)
    elif kind == "shifted":
        m = ShiftedMeasure(measure_from_json(data["base"], dim), np.array(data["shift"], dtype=float))
    elif kind == "sum":
        m = SumMeasure(tuple(measure_from_json(p, dim) for p in data["parts"]))
    else:
        raise ValueError(f"unknown measure kind {kind!r}")
    if dim is not None and m.dim != dim:
        raise ValueError(f"measure dimension {m.dim} does not match algebra dimension {dim}")
    return m


def sample(measure, rng):
    return measure.sample(rng, 1)[0]


# -- moments -------------------------------------------------------------------

@dataclass
class MomentReport:
    xbar: np.ndarray            # abelianized mean, adapted m^(1) coordinates
    X: np.ndarray               # lifted drift in g
    cov: np.ndarray             # covariance of π^(1)x in adapted m^(1) coordinates
    B: np.ndarray               # m^(2)-projection of the mean, in g
    layer_moments: dict         # b -> E ||x^(b)||^(order/b)
    order: float
    stderr: dict = field(default_factory=dict)
    degenerate: bool = False


def abelian_stats(measure, dec, nsamples=10**6, rng=None, order=2.0, check=True):
    """Mean, abelianized covariance, commutator mean and layer moments of a measure."""
    mean = measure.mean()
    cov_g = measure.covariance()
    mask1 = dec.layer_mask(1)
    R = dec.Pinv[mask1]
    xbar = R @ mean
    cov = R @ cov_g @ R.T
    cov = (cov + cov.T) / 2
    X = dec.project(mean, 1)
    B = dec.project(mean, 2)
    w = np.linalg.eigvalsh(cov) if cov.size else np.zeros(0)
    degenerate = cov.size == 0 or w.min() <= 1e-12 * max(1.0, w.max())
    if degenerate and check:
        raise DegenerateCovariance("abelianized covariance is singular")

    moments, stderr = {}, {}
    weights = sorted(set(int(b) for b in dec.weights))
    atomic = measure.atomic()
    if atomic is not None:
        c = dec.to_adapted(atomic.atoms)
        for b in weights:
            norms = np.linalg.norm(c[:, dec.layer_mask(b)], axis=1)
            moments[b] = float(atomic.probs @ norms ** (order / b))
            stderr[b] = 0.0
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        c = dec.to_adapted(measure.sample(rng, nsamples))
        for b in weights:
            vals = np.linalg.norm(c[:, dec.layer_mask(b)], axis=1) ** (order / b)
            moments[b] = float(vals.mean())
            stderr[b] = float(vals.std(ddof=1) / np.sqrt(nsamples))
    return MomentReport(xbar, X, cov, B, moments, order, stderr, degenerate)


# -- truncation ----------------------------------------------------------------

def truncate_sample(x, N, grading, centering):
    """Layerwise cutoff T_N.

    Rows of x keep their weight-b part when its norm is at most N^(b/2);
    otherwise the part is replaced by 0 (b >= 2) or by the first-layer
    centering vector (b = 1).  `grading` may be a decomposition of g or the
    grading of the bias extension; x and centering use its coordinates.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = grading.to_adapted(x)
    cN = grading.to_adapted(np.asarray(centering, dtype=float))
    out = c.copy()
    for b in sorted(set(int(w) for w in grading.weights)):
        m = grading.layer_mask(b)
        far = np.linalg.norm(c[:, m], axis=1) > N ** (b / 2)
        if not far.any():
            continue
        out[np.ix_(far, m)] = cN[m] if b == 1 else 0.0
    return grading.from_adapted(out)


def truncation_centering(measure, N, dec, nsamples=10**6, rng=None, return_stderr=False):
    """c_N = -P(||x~(1)|| > √N)^-1 E[x~(1) 1{||x~(1)|| <= √N}] with x~(1) = π^(1)x - X.

    Exact for atomic measures and for measures whose centered law is
    symmetric (then c_N = 0); Monte Carlo otherwise.  Returned in g coordinates.
    """
    mask1 = dec.layer_mask(1)
    R = dec.Pinv[mask1]
    Xa = R @ measure.mean()
    root = np.sqrt(N)

    def from_layer(v):
        full = np.zeros(dec.dim)
        full[mask1] = v
        return dec.from_adapted(full)

    atomic = measure.atomic()
    if atomic is not None:
        y = atomic.atoms @ R.T - Xa
        far = np.linalg.norm(y, axis=1) > root
        tail = atomic.probs[far].sum()
        if tail <= 0:
            value, se = np.zeros(dec.dim), 0.0
        else:
            value = from_layer(-(atomic.probs[~far] @ y[~far]) / tail)
            se = 0.0
    elif measure.centered_is_symmetric():
        value, se = np.zeros(dec.dim), 0.0
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        y = measure.sample(rng, nsamples) @ R.T - Xa
        far = np.linalg.norm(y, axis=1) > root
        if not far.any():
            value, se = np.zeros(dec.dim), 0.0
        else:
            kept = np.where(far[:, None], 0.0, y)
            p = far.mean()
            value = from_layer(-kept.mean(axis=0) / p)
            se = float(np.linalg.norm(kept.std(axis=0, ddof=1)) / np.sqrt(nsamples) / p)
    return (value, se) if return_stderr else value


def truncation_alteration_rate(measure, N, dec, nsamples=10**5, rng=None):
    """Fraction of draws that T_N would alter, next to the bound P(max_b ||x~(b)||^(1/b) > √N)."""
    from .filtration import BiasExtension
    rng = np.random.default_rng(0) if rng is None else rng
    ext = BiasExtension(dec)
    x = ext.lift_measure_sample(measure.sample(rng, nsamples))
    c = ext.grading.to_adapted(x)
    altered = np.zeros(nsamples, dtype=bool)
    for b in sorted(set(int(w) for w in ext.grading.weights)):
        norms = np.linalg.norm(c[:, ext.grading.layer_mask(b)], axis=1)
        altered |= norms ** (1 / b) > np.sqrt(N)
    return float(altered.mean())


# -- aperiodicity --------------------------------------------------------------

@dataclass
class AperiodicityReport:
    max_modulus: float
    at: np.ndarray
    flagged: bool


def aperiodicity_heuristic(measure, grid, dec, exclude_radius=None, flag_level=1 - 1e-9):
    """Largest |characteristic function of the abelianized law| over grid points away from 0.

    `grid` holds frequencies ξ in the dual of adapted m^(1) coordinates.
    A modulus at (numerically) 1 flags a lattice-type law.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    R = dec.Pinv[dec.layer_mask(1)]
    norms = np.linalg.norm(grid, axis=1)
    if exclude_radius is None:
        exclude_radius = 0.5 * norms[norms > 0].min()
    keep = norms >= exclude_radius
    if not keep.any():
        raise ValueError("no grid points outside the excluded ball")
    mod = np.abs(measure.char(grid[keep] @ R))
    k = int(np.argmax(mod))
    return AperiodicityReport(float(mod[k]), grid[keep][k], bool(mod[k] >= flag_level))
