"""Right random walks X_1 * ... * X_N, recentered and rescaled.

Trials are simulated in chunks.  Chunk k draws from its own Philox stream
keyed by (seed, k), so results depend only on the seed and the chunk size,
never on the number of worker threads.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebra import bch_product, bch_product_cols
from .filtration import BiasExtension
from .measures import truncate_sample, truncation_centering

DEFAULT_CHUNK = 1 << 14


def chunk_rng(seed, index):
    """Counter-based stream for chunk `index` of a run with master `seed`."""
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=seed + (int(index) << 64)))


def config_hash(desc):
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class WalkConfig:
    dec: object                      # WeightDecomposition of the walk's algebra
    measure: object
    N: int
    trials: int = 10**5
    recentering: str = "drift"       # none | drift | custom
    g_N: np.ndarray = None           # extra right factor for recentering="custom"
    truncation: str = "off"          # off | uniform | gradual
    gammas: np.ndarray = None        # per-increment exponents for the gradual schedule
    seed: int = 0
    threads: int = 1
    chunk_size: int = DEFAULT_CHUNK
    rescale: bool = True
    centering_samples: int = 10**6

    def __post_init__(self):
        if int(self.N) < 1 or int(self.trials) < 1:
            raise ValueError("need N >= 1 and trials >= 1")
        if self.measure.dim != self.dec.dim:
            raise ValueError("measure and algebra dimensions differ")
        if self.recentering not in ("none", "drift", "custom"):
            raise ValueError(f"unknown recentering {self.recentering!r}")
        if self.recentering == "custom" and self.g_N is None:
            raise ValueError("custom recentering needs g_N")
        if self.truncation not in ("off", "uniform", "gradual"):
            raise ValueError(f"unknown truncation {self.truncation!r}")
        if self.truncation == "gradual":
            if self.gammas is None or len(self.gammas) != int(self.N):
                raise ValueError("gradual truncation needs one gamma per increment")
        self.N = int(self.N)
        self.trials = int(self.trials)

    @property
    def algebra(self):
        return self.dec.algebra

    def describe(self):
        return {
            "algebra": self.algebra.to_json(),
            "bias": [float(v) for v in self.dec.X],
            "measure": self.measure.to_json(),
            "N": self.N, "trials": self.trials, "recentering": self.recentering,
            "g_N": None if self.g_N is None else np.asarray(self.g_N, dtype=float).tolist(),
            "truncation": self.truncation,
            "gammas": None if self.gammas is None else np.asarray(self.gammas, dtype=float).tolist(),
            "seed": int(self.seed), "chunk_size": self.chunk_size, "rescale": self.rescale,
        }


@dataclass
class SampleBatch:
    samples: np.ndarray
    N: int
    seed: int
    config_hash: str
    names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)


class _Increments:
    """Draws increments, applying the truncation operator when configured."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.ext = None
        self.levels = None
        if cfg.truncation == "off":
            return
        self.ext = BiasExtension(cfg.dec)
        if cfg.truncation == "uniform":
            self.levels = np.full(cfg.N, cfg.N)
        else:
            self.levels = np.maximum(np.floor(cfg.N ** (1 - np.asarray(cfg.gammas, dtype=float))), 1).astype(int)
        self.centerings = {}
        for level in np.unique(self.levels):
            c = truncation_centering(cfg.measure, int(level), cfg.dec, nsamples=cfg.centering_samples,
                                     rng=np.random.default_rng([int(cfg.seed), int(level)]))
            self.centerings[int(level)] = self.ext.embed(c)

    def draw(self, rng, n, i):
        x = self.cfg.measure.sample(rng, n)
        if self.ext is None:
            return x
        level = int(self.levels[i])
        lifted = self.ext.lift_measure_sample(x)
        cut = truncate_sample(lifted, level, self.ext.grading, self.centerings[level])
        return self.ext.project(cut)


def _finish(cfg, S, steps, scale_N):
    """Recenter by -steps*X (and g_N) on the right, then rescale by scale_N."""
    alg = cfg.algebra
    if cfg.recentering in ("drift", "custom") and np.any(cfg.dec.X):
        S = bch_product_cols(alg, S, (-steps * cfg.dec.X)[:, None])
    if cfg.recentering == "custom":
        S = bch_product_cols(alg, S, np.asarray(cfg.g_N, dtype=float)[:, None])
    out = S.T
    if cfg.rescale:
        out = cfg.dec.dilate(1 / np.sqrt(scale_N), out)
    return out


def _run_chunk(cfg, rng, n, incs=None):
    incs = _Increments(cfg) if incs is None else incs
    alg = cfg.algebra
    S = np.zeros((alg.dim, n))
    for i in range(cfg.N):
        S = bch_product_cols(alg, S, incs.draw(rng, n, i).T)
    return _finish(cfg, S, cfg.N, cfg.N)


def walk_endpoint(cfg, rng):
    """One recentered (and by default rescaled) endpoint drawn with a caller-owned rng."""
    return _run_chunk(cfg, rng, 1)[0]


def _chunks(trials, size):
    starts = range(0, trials, size)
    return [(k, min(size, trials - s)) for k, s in enumerate(starts)]


def _parallel(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def walk_batch(cfg):
    """Endpoints of `trials` independent walks, ordered by trial index."""
    incs = _Increments(cfg)
    jobs = _chunks(cfg.trials, cfg.chunk_size)
    parts = _parallel(lambda j: _run_chunk(cfg, chunk_rng(cfg.seed, j[0]), j[1], incs), jobs, cfg.threads)
    return SampleBatch(np.concatenate(parts), cfg.N, int(cfg.seed), config_hash(cfg.describe()),
                       cfg.algebra.basis_names)


def interpolated_path(cfg, time_grid):
    """Donsker-interpolated rescaled paths on a time grid; shape (trials, len(grid), dim).

    W(t) = D_{1/√N}(X_1 * ... * X_k * (s X_{k+1}) * (-tN X)) with tN = k + s.
    """
    times = np.asarray(time_grid, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    incs = _Increments(cfg)
    alg = cfg.algebra
    N = cfg.N
    kmax = int(np.floor(times.max() * N)) if len(times) else 0
    floors = np.floor(times * N).astype(int)
    fracs = times * N - floors

    def run(job):
        index, n = job
        rng = chunk_rng(cfg.seed, index)
        out = np.zeros((n, len(times), alg.dim))
        S = np.zeros((alg.dim, n))
        for k in range(kmax + 1):
            x = incs.draw(rng, n, min(k, N - 1)).T if (k < kmax or np.any((floors == k) & (fracs > 0))) else None
            for j in np.nonzero(floors == k)[0]:
                P = S if fracs[j] == 0 else bch_product_cols(alg, S, fracs[j] * x)
                out[:, j] = _finish(cfg, P, times[j] * N, N)
            if k < kmax:
                S = bch_product_cols(alg, S, x)
        return out

    return np.concatenate(_parallel(run, _chunks(cfg.trials, cfg.chunk_size), cfg.threads))


def holder_statistic(paths, times, alpha, alg, norm=None):
    """Per-path sup over grid pairs s < t of ||x(s)^-1 * x(t)|| / |t - s|^alpha."""
    if not 0 <= alpha < 0.5:
        raise ValueError("alpha must lie in [0, 1/2)")
    paths = np.asarray(paths, dtype=float)
    times = np.asarray(times, dtype=float)
    norm = norm or (lambda v: np.linalg.norm(v, axis=-1))
    best = np.zeros(paths.shape[0])
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            dt = abs(times[b] - times[a])
            if dt == 0:
                continue
            incr = bch_product(alg, -paths[:, a], paths[:, b])
            best = np.maximum(best, norm(incr) / dt ** alpha)
    return best


def graded_replacement_gap(cfg, trials=None):
    """Median ||D_{1/√N} Π(x~) - D_{1/√N} Π'(x~)|| over trials.

    Π multiplies the lifted increments x~ = x - X + χ with the ordinary
    product of g~, Π' with the graded product.
    """
    ext = BiasExtension(cfg.dec)
    trials = trials or cfg.trials
    rng = chunk_rng(cfg.seed, 0)
    grading = ext.grading
    S = np.zeros((ext.dim, trials))
    Sg = np.zeros((ext.dim, trials))
    for _ in range(cfg.N):
        x = ext.lift_measure_sample(cfg.measure.sample(rng, trials))
        S = bch_product_cols(ext.algebra, S, x.T)
        Sg = bch_product_cols(grading.graded, Sg, grading.to_adapted(x).T)
    f = grading.dilation_factors(1 / np.sqrt(cfg.N))
    a = grading.to_adapted(S.T) * f
    b = Sg.T * f
    return float(np.median(np.linalg.norm(a - b, axis=1)))
