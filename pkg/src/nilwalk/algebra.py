"""Nilpotent Lie algebras given by exact structure constants.

Vectors are plain numpy arrays of shape (..., dim).  Float arrays are used
for simulation; object arrays of Fractions give exact results through the
same functions.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import rational as Q
from .bch import MAX_STEP, bch_table, evaluate_table, lyndon_words, lyndon_polynomial, express_in_lyndon, poly_bracket


class AlgebraError(ValueError):
    """Structure constants that do not define a nilpotent Lie algebra."""


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """Finite-dimensional nilpotent Lie algebra.

    `brackets` maps (i, j) with i < j to the coordinate tuple of [e_i, e_j].
    Pairs that are absent bracket to zero.
    """

    dim: int
    basis_names: tuple
    brackets: dict = field(default_factory=dict)
    validate: bool = True

    def __post_init__(self):
        clean = {}
        for (i, j), coords in self.brackets.items():
            coords = Q.vec(coords)
            if len(coords) != self.dim:
                raise AlgebraError(f"bracket ({i},{j}) has wrong length")
            if i == j:
                if not Q.is_zero(coords):
                    raise AlgebraError(f"[e{i},e{i}] must vanish")
                continue
            if i > j:
                i, j, coords = j, i, Q.scale(-1, coords)
                if (i, j) in clean and clean[(i, j)] != coords:
                    raise AlgebraError(f"antisymmetry violated at ({i},{j})")
            if not Q.is_zero(coords):
                clean[(i, j)] = coords
        object.__setattr__(self, "brackets", clean)
        object.__setattr__(self, "basis_names", tuple(self.basis_names))
        if len(self.basis_names) != self.dim:
            raise AlgebraError("basis_names length differs from dim")
        if self.validate:
            if not self.jacobi_holds():
                raise AlgebraError("Jacobi identity fails")
            if self.step > MAX_STEP:
                raise AlgebraError(f"step {self.step} exceeds the supported maximum {MAX_STEP}")

    # -- exact structure ---------------------------------------------------

    def bracket_basis(self, i, j):
        if i == j:
            return Q.zero(self.dim)
        if i < j:
            return self.brackets.get((i, j), Q.zero(self.dim))
        return Q.scale(-1, self.brackets.get((j, i), Q.zero(self.dim)))

    def bracket_exact(self, x, y):
        """Bracket of two exact coordinate sequences, returned as a tuple."""
        out = [Fraction(0)] * self.dim
        for (i, j), c in self.brackets.items():
            a = x[i] * y[j] - x[j] * y[i]
            if a:
                for k, ck in enumerate(c):
                    if ck:
                        out[k] += a * ck
        return tuple(out)

    def jacobi_holds(self):
        n = self.dim
        e = [tuple(Fraction(int(k == i)) for k in range(n)) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    s = Q.add(Q.add(self.bracket_exact(e[i], self.bracket_basis(j, k)),
                                    self.bracket_exact(e[j], self.bracket_basis(k, i))),
                              self.bracket_exact(e[k], self.bracket_basis(i, j)))
                    if not Q.is_zero(s):
                        return False
        return True

    @cached_property
    def central_series_spaces(self):
        """rref bases of g^[1] ⊇ g^[2] ⊇ ..., ending with the zero space."""
        n = self.dim
        e = [tuple(Fraction(int(k == i)) for k in range(n)) for i in range(n)]
        spaces = [Q.span(e)]
        while spaces[-1]:
            nxt = Q.span([self.bracket_exact(a, v) for a in e for v in spaces[-1]])
            if len(nxt) == len(spaces[-1]):
                raise AlgebraError("algebra is not nilpotent")
            spaces.append(nxt)
        return tuple(spaces)

    @cached_property
    def step(self):
        return max(len(self.central_series_spaces) - 1, 1)

    @property
    def is_abelian(self):
        return not self.brackets

    # -- float structure ---------------------------------------------------

    @cached_property
    def _sparse(self):
        I, J, K, C = [], [], [], []
        for (i, j), c in self.brackets.items():
            for k, ck in enumerate(c):
                if ck:
                    I.append(i); J.append(j); K.append(k); C.append(float(ck))
        return (np.array(I, dtype=np.intp), np.array(J, dtype=np.intp),
                np.array(K, dtype=np.intp), np.array(C))

    @cached_property
    def _scatter(self):
        I, J, K, C = self._sparse
        m = np.zeros((len(K), self.dim))
        m[np.arange(len(K)), K] = C
        return m

    def bracket(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        if x.dtype == object or y.dtype == object:
            return _exact_apply(self.bracket_exact, x, y)
        I, J, K, C = self._sparse
        shape = np.broadcast_shapes(x.shape, y.shape)
        if len(I) == 0:
            return np.zeros(shape)
        a = x[..., I] * y[..., J] - x[..., J] * y[..., I]
        return a @ self._scatter

    @cached_property
    def _scatter_cols(self):
        return np.ascontiguousarray(self._scatter.T)

    def bracket_cols(self, x, y):
        """Bracket for float arrays stored coordinate-first, shape (dim, ...)."""
        I, J, K, C = self._sparse
        if len(I) == 0:
            return np.zeros(np.broadcast_shapes(x.shape, y.shape))
        a = x[I] * y[J] - x[J] * y[I]
        return np.tensordot(self._scatter_cols, a, axes=1)

    def structure_tensor(self):
        """Dense float tensor c[i, j, k] with [e_i, e_j] = sum_k c[i,j,k] e_k."""
        t = np.zeros((self.dim,) * 3)
        for (i, j), c in self.brackets.items():
            t[i, j] = [float(a) for a in c]
            t[j, i] = -t[i, j]
        return t

    def ad_matrix(self, x):
        """Matrix of ad(x) acting on column vectors."""
        return np.einsum("i,ijk->kj", np.asarray(x, dtype=float), self.structure_tensor())

    # -- JSON --------------------------------------------------------------

    def to_json(self):
        brackets = []
        for (i, j), c in sorted(self.brackets.items()):
            brackets.append([i, j, [[k, Q.fraction_str(a)] for k, a in enumerate(c) if a]])
        return {"dim": self.dim, "step": self.step, "basis": list(self.basis_names), "brackets": brackets}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        try:
            n = int(data["dim"])
            names = data.get("basis") or [f"e{k + 1}" for k in range(n)]
            brackets = {}
            for i, j, terms in data.get("brackets", []):
                c = [Fraction(0)] * n
                for k, a in terms:
                    c[int(k)] += Fraction(str(a))
                key = (int(i), int(j))
                if key in brackets:
                    raise AlgebraError(f"duplicate bracket {key}")
                brackets[key] = c
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, AlgebraError):
                raise
            raise AlgebraError(f"malformed algebra JSON: {exc}") from exc
        alg = cls(n, names, brackets)
        if "step" in data and int(data["step"]) != alg.step:
            raise AlgebraError(f"declared step {data['step']} but constants give {alg.step}")
        return alg


def _exact_apply(fn, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=object), np.asarray(y, dtype=object))
    out = np.empty(x.shape, dtype=object)
    for idx in np.ndindex(x.shape[:-1]):
        out[idx] = fn(tuple(x[idx]), tuple(y[idx]))
    return out


def exact(values):
    """Object array of Fractions, for exact evaluation of group operations."""
    arr = np.asarray(values, dtype=object)
    return np.vectorize(Q.to_fraction, otypes=[object])(arr) if arr.size else arr


def bch_product(alg, x, y):
    """Campbell-Hausdorff product x * y, batched over leading axes."""
    x = np.asarray(x)
    y = np.asarray(y)
    if alg.is_abelian:
        return x + y
    if x.dtype != object and y.dtype != object:
        x, y = np.broadcast_arrays(x.astype(float), y.astype(float))
    else:
        x, y = np.broadcast_arrays(exact(x), exact(y))
    return evaluate_table(bch_table(alg.step), x, y, alg.bracket)


def bch_product_cols(alg, x, y):
    """Float product for coordinate-first arrays, shape (dim, ...); used in hot loops."""
    if alg.is_abelian:
        return x + y
    return evaluate_table(bch_table(alg.step), x, y, alg.bracket_cols)


def inverse(x):
    return -np.asarray(x)


def adjoint(alg, y, x):
    """Ad(y) x = y * x * (-y)."""
    return bch_product(alg, bch_product(alg, y, x), -np.asarray(y))


# -- presets -------------------------------------------------------------------

def heisenberg():
    return LieAlgebra(3, ("e1", "e2", "e3"), {(0, 1): (0, 0, 1)})


def filiform3():
    """Four-dimensional filiform algebra: [e1,e2]=e3, [e1,e3]=e4; A=e1, T=e2."""
    return LieAlgebra(4, ("e1", "e2", "e3", "e4"), {(0, 1): (0, 0, 1, 0), (0, 2): (0, 0, 0, 1)})


def abelian(n):
    return LieAlgebra(n, tuple(f"e{k + 1}" for k in range(n)), {})


def unitriangular(n):
    """Strictly upper triangular n x n matrices, basis E_ij (i<j) in row-major order."""
    if n < 2:
        raise AlgebraError("unitriangular needs n >= 2")
    idx = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    pos = {p: k for k, p in enumerate(idx)}
    d = len(idx)
    brackets = {}
    for a, (i, j) in enumerate(idx):
        for b, (k, l) in enumerate(idx):
            if a >= b:
                continue
            c = [0] * d
            # [E_ij, E_kl] = delta_jk E_il - delta_li E_kj
            if j == k:
                c[pos[(i, l)]] += 1
            if l == i:
                c[pos[(k, j)]] -= 1
            if any(c):
                brackets[(a, b)] = c
    names = tuple(f"E{i}{j}" for i, j in idx)
    return LieAlgebra(d, names, brackets)


def free_nilpotent(rank, step):
    """Free nilpotent Lie algebra on `rank` generators of the given step.

    Basis: Lyndon words of length <= step with standard bracketing, ordered by
    length then lexicographically.
    """
    if rank < 1 or step < 1:
        raise AlgebraError("rank and step must be positive")
    words = lyndon_words(rank, step)
    if len(words) > 64:
        raise AlgebraError(f"free({rank},{step}) has dimension {len(words)} > 64")
    pos = {w: k for k, w in enumerate(words)}
    d = len(words)
    brackets = {}
    for a, u in enumerate(words):
        for b in range(a + 1, d):
            v = words[b]
            if len(u) + len(v) > step:
                continue
            coeffs = express_in_lyndon(poly_bracket(lyndon_polynomial(u), lyndon_polynomial(v)))
            if coeffs:
                c = [Fraction(0)] * d
                for w, x in coeffs.items():
                    c[pos[w]] = x
                brackets[(a, b)] = c
    letters = "xyzuvwabcdefgh"

    def label(w):
        if len(w) == 1:
            return letters[w[0]] if rank <= len(letters) else f"g{w[0] + 1}"
        p, q = _split(w)
        return f"[{label(p)},{label(q)}]"

    return LieAlgebra(d, tuple(label(w) for w in words), brackets)


def _split(w):
    from .bch import standard_factorization
    return standard_factorization(w)


PRESETS = {
    "heisenberg": lambda: heisenberg(),
    "filiform3": lambda: filiform3(),
    "abelian": lambda n=2: abelian(int(n)),
    "unitriangular": lambda n=3: unitriangular(int(n)),
    "free": lambda rank=2, step=2: free_nilpotent(int(rank), int(step)),
}


def build_preset(name, params=None):
    """Build a preset by name, e.g. ("unitriangular", {"n": 4}) or "free(2,3)"."""
    params = dict(params or {})
    if "(" in name:
        base, args = name.rstrip(")").split("(", 1)
        name = base.strip()
        vals = [int(a) for a in args.split(",") if a.strip()]
        keys = {"abelian": ["n"], "unitriangular": ["n"], "free": ["rank", "step"]}.get(name, [])
        if len(vals) > len(keys):
            raise AlgebraError(f"too many parameters for preset {name}")
        params.update(zip(keys, vals))
    if name not in PRESETS:
        raise AlgebraError(f"unknown preset {name!r}")
    return PRESETS[name](**params)


def load_algebra(ref):
    """Algebra from a preset name, a JSON file path, or an inline dict."""
    if isinstance(ref, LieAlgebra):
        return ref
    if isinstance(ref, dict):
        if "preset" in ref:
            return build_preset(ref["preset"], ref.get("params"))
        return LieAlgebra.from_json(ref)
    ref = str(ref)
    if ref.endswith(".json"):
        with open(ref) as fh:
            return LieAlgebra.from_json(json.load(fh))
    return build_preset(ref)
