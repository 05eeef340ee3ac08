"""Central series, bias-dependent weight filtrations and the gradings they induce.

Every subspace is kept as an exact rref basis, so no rank decision depends
on a floating point tolerance.  Index conventions are 1-based to match the
usual g^(1) ⊇ g^(2) ⊇ ... notation; `space(i)` returns () past the end.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import rational as Q
from .algebra import LieAlgebra, bch_product, exact


def _unit(n, i):
    return tuple(Fraction(int(k == i)) for k in range(n))


@dataclass(frozen=True, eq=False)
class Filtration:
    algebra: LieAlgebra
    spaces: tuple          # spaces[i-1] is the rref basis of the i-th subspace
    kind: str              # "central" or "weight"
    xbar: tuple = None     # exact bias lift for weight filtrations

    def space(self, i):
        if i < 1:
            return self.space(1)
        return self.spaces[i - 1] if i <= len(self.spaces) else ()

    @property
    def dims(self):
        return [len(s) for s in self.spaces]

    @property
    def length(self):
        return len(self.spaces)

    def is_nested(self):
        return all(Q.is_subspace(self.space(i + 1), self.space(i)) for i in range(1, self.length + 1))

    def is_bracket_compatible(self):
        """[g^(i), g^(j)] ⊆ g^(i+j) on all basis pairs."""
        alg = self.algebra
        for i in range(1, self.length + 1):
            for j in range(i, self.length + 1):
                target = self.space(i + j)
                for u in self.space(i):
                    for v in self.space(j):
                        if not Q.contains(target, alg.bracket_exact(u, v)):
                            return False
        return True

    def to_json(self):
        return {
            "kind": self.kind,
            "xbar": None if self.xbar is None else [Q.fraction_str(c) for c in self.xbar],
            "dims": self.dims,
            "subspaces": [[[Q.fraction_str(c) for c in row] for row in s] for s in self.spaces],
        }


def central_series(alg):
    spaces = tuple(s for s in alg.central_series_spaces if s)
    return Filtration(alg, spaces, "central")


def weight_filtration(alg, xbar):
    """g^(0) = g^(1) = g and g^(i+1) = [g, g^(i)] + [xbar, g^(i-1)].

    Stored up to index 2s-1; trailing zero spaces are dropped.
    """
    n = alg.dim
    x = Q.vec(xbar)
    if len(x) != n:
        raise ValueError("bias has wrong length")
    basis = [_unit(n, i) for i in range(n)]
    full = Q.span(basis)
    spaces = [full, full]          # indices 0 and 1
    top = 2 * alg.step - 1
    for i in range(1, top):
        gens = [alg.bracket_exact(a, v) for a in basis for v in spaces[i]]
        gens += [alg.bracket_exact(x, v) for v in spaces[i - 1]]
        spaces.append(Q.span(gens))
    # everything of index >= 2s vanishes, so only indices 1..2s-1 are kept
    kept = spaces[1:top + 1]
    while kept and not kept[-1]:
        kept.pop()
    return Filtration(alg, tuple(kept), "weight", x)


def homogeneous_dimension(filt):
    return sum(filt.dims)


class Grading:
    """A linear grading of an algebra: adapted basis vectors with integer weights.

    `P` has the adapted basis vectors as columns (original coordinates), so
    x = P c for adapted coordinates c.  `graded` is the algebra with bracket
    [x, y]' = π^(i+j)[x, y] on weight pieces, written in adapted coordinates.
    """

    def __init__(self, algebra, columns, weights, graded_brackets=None):
        self.algebra = algebra
        self.dim = algebra.dim
        self.columns = [Q.vec(c) for c in columns]
        self.weights = np.array(weights, dtype=int)
        P = Q.transpose(self.columns)
        self.P_exact = P
        self.Pinv_exact = Q.inverse(P)
        self.P = np.array([[float(a) for a in row] for row in P])
        self.Pinv = np.array([[float(a) for a in row] for row in self.Pinv_exact])
        if graded_brackets is None:
            graded_brackets = self._graded_constants()
        names = tuple(f"m{w}_{k}" for k, w in enumerate(self.weights))
        self.graded = LieAlgebra(self.dim, names, graded_brackets)

    def _graded_constants(self):
        out = {}
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                br = self.algebra.bracket_exact(self.columns[a], self.columns[b])
                if Q.is_zero(br):
                    continue
                c = Q.matvec(self.Pinv_exact, br)
                w = self.weights[a] + self.weights[b]
                c = tuple(ck if self.weights[k] == w else Fraction(0) for k, ck in enumerate(c))
                if not Q.is_zero(c):
                    out[(a, b)] = c
        return out

    @property
    def max_weight(self):
        return int(self.weights.max()) if self.dim else 0

    def to_adapted(self, x):
        x = np.asarray(x)
        if x.dtype == object:
            return exact(x) @ np.array(self.Pinv_exact, dtype=object).T
        return x @ self.Pinv.T

    def from_adapted(self, c):
        c = np.asarray(c)
        if c.dtype == object:
            return exact(c) @ np.array(self.P_exact, dtype=object).T
        return c @ self.P.T

    def layer_mask(self, b):
        return self.weights == b

    def project(self, x, b):
        c = self.to_adapted(x)
        return self.from_adapted(c * self.layer_mask(b))

    def dilation_factors(self, r):
        # r may be an array broadcasting against the coordinates, e.g. shape (n, 1)
        return np.asarray(r, dtype=float) ** self.weights

    def dilate(self, r, x):
        if np.asarray(x).dtype == object:
            r = Q.to_fraction(r)
            f = np.array([r ** int(w) for w in self.weights], dtype=object)
            return self.from_adapted(self.to_adapted(x) * f)
        return self.from_adapted(self.to_adapted(x) * self.dilation_factors(r))

    def dilation_matrix(self, r):
        return self.P @ np.diag(self.dilation_factors(r)) @ self.Pinv

    def graded_bracket(self, x, y):
        return self.from_adapted(self.graded.bracket(self.to_adapted(x), self.to_adapted(y)))

    def graded_product(self, x, y):
        return self.from_adapted(bch_product(self.graded, self.to_adapted(x), self.to_adapted(y)))


class WeightDecomposition(Grading):
    """Complements m^(b) with g^(b) = m^(b) ⊕ g^(b+1), and the lifted drift X ∈ m^(1)."""

    def __init__(self, filt):
        self.filtration = filt
        alg = filt.algebra
        layers = {}
        columns, weights = [], []
        for b in range(1, filt.length + 1):
            comp = _complement(filt.space(b), filt.space(b + 1))
            layers[b] = comp
            columns += comp
            weights += [b] * len(comp)
        self.layers = layers
        super().__init__(alg, columns, weights)
        xbar = filt.xbar if filt.xbar is not None else Q.zero(alg.dim)
        c = Q.matvec(self.Pinv_exact, xbar)
        c = tuple(ck if self.weights[k] == 1 else Fraction(0) for k, ck in enumerate(c))
        self.X_exact = Q.matvec(self.P_exact, c)
        self.X = np.array([float(a) for a in self.X_exact])

    def layer_dims(self):
        return {b: len(v) for b, v in self.layers.items()}

    @property
    def homogeneous_dimension(self):
        return int(self.weights.sum())

    @cached_property
    def a_X_matrix(self):
        """Matrix of a_X in adapted coordinates (acts on column vectors)."""
        alg = self.algebra
        A = np.zeros((self.dim, self.dim))
        self.a_X_exact = [[Fraction(0)] * self.dim for _ in range(self.dim)]
        for a in range(self.dim):
            br = alg.bracket_exact(self.X_exact, self.columns[a])
            c = Q.matvec(self.Pinv_exact, br)
            for k, ck in enumerate(c):
                if self.weights[k] == self.weights[a] + 2 and ck:
                    A[k, a] = float(ck)
                    self.a_X_exact[k][a] = ck
        return A

    def to_json(self):
        return {
            "filtration": self.filtration.to_json(),
            "layers": {str(b): [[Q.fraction_str(c) for c in v] for v in vs] for b, vs in self.layers.items()},
            "X": [Q.fraction_str(c) for c in self.X_exact],
            "homogeneous_dimension": self.homogeneous_dimension,
        }


def _complement(big, small):
    """Rows of rref(big), in order, that extend a basis of `small` to one of `big`."""
    chosen = []
    current = list(small)
    for row in big:
        trial = Q.span(current + [row])
        if len(trial) > len(Q.span(current)):
            chosen.append(row)
            current.append(row)
    return chosen


def choose_weight_decomposition(filt):
    return WeightDecomposition(filt)


def decompose(alg, xbar=None):
    """Shortcut: weight decomposition for a bias, or the central grading when xbar is None."""
    if xbar is None:
        xbar = Q.zero(alg.dim)
    return WeightDecomposition(weight_filtration(alg, xbar))


def dilate(dec, r, x):
    return dec.dilate(r, x)


def graded_bracket(dec, x, y):
    return dec.graded_bracket(x, y)


def graded_product(dec, x, y):
    return dec.graded_product(x, y)


def a_X_operator(dec, y):
    y = np.asarray(y)
    if y.dtype == object:
        dec.a_X_matrix
        M = np.array(dec.a_X_exact, dtype=object)
        return dec.from_adapted(dec.to_adapted(y) @ M.T)
    return dec.from_adapted(dec.to_adapted(y) @ dec.a_X_matrix.T)


class BiasExtension:
    """g̃ = g ⊕ Rχ with [χ, x] = [X, x]; χ carries weight 2.

    Coordinates on g̃ are (x_1..x_d, t) for x + tχ.  When the drift X is zero
    the extension is g itself and `chi` is the zero vector of g.
    """

    def __init__(self, dec):
        self.dec = dec
        g = dec.algebra
        d = g.dim
        self.base_dim = d
        self.biased = not Q.is_zero(dec.X_exact)
        if not self.biased:
            self.algebra = g
            self.grading = dec
            self.chi = np.zeros(d)
            self.chi_index = None
            return
        brackets = {k: tuple(c) + (Fraction(0),) for k, c in g.brackets.items()}
        for j in range(d):
            br = g.bracket_exact(dec.X_exact, _unit(d, j))
            if not Q.is_zero(br):
                # stored as [e_j, χ] = -[X, e_j]
                brackets[(j, d)] = tuple(-a for a in br) + (Fraction(0),)
        self.algebra = LieAlgebra(d + 1, g.basis_names + ("chi",), brackets)
        columns = [tuple(c) + (Fraction(0),) for c in dec.columns] + [_unit(d + 1, d)]
        weights = list(dec.weights) + [2]
        self.grading = Grading(self.algebra, columns, weights, self._graded_constants())
        self.chi_index = d
        self.chi = np.zeros(d + 1)
        self.chi[d] = 1.0

    def _graded_constants(self):
        dec = self.dec
        d = self.base_dim
        out = {}
        for (a, b), c in dec.graded.brackets.items():
            out[(a, b)] = tuple(c) + (Fraction(0),)
        dec.a_X_matrix
        for a in range(d):
            col = tuple(dec.a_X_exact[k][a] for k in range(d))
            if not Q.is_zero(col):
                # [f_a, χ]' = -a_X(f_a)
                out[(a, d)] = tuple(-v for v in col) + (Fraction(0),)
        return out

    @property
    def dim(self):
        return self.algebra.dim

    def embed(self, x):
        """Include g into g̃."""
        x = np.asarray(x)
        if not self.biased:
            return x
        pad = np.zeros(x.shape[:-1] + (1,), dtype=x.dtype)
        if x.dtype == object:
            pad[...] = Fraction(0)
        return np.concatenate([x, pad], axis=-1)

    def project(self, v):
        """p(x + tχ) = x + tX."""
        v = np.asarray(v)
        if not self.biased:
            return v
        X = np.array(self.dec.X_exact, dtype=object) if v.dtype == object else self.dec.X
        return v[..., :-1] + v[..., -1:] * X

    def lift_measure_sample(self, x):
        """x ↦ x - X + χ, the image of the increment in g̃."""
        if not self.biased:
            return np.asarray(x)
        v = self.embed(np.asarray(x, dtype=float) - self.dec.X)
        v[..., -1] = 1.0
        return v


def bias_extension(alg, dec):
    if dec.algebra is not alg:
        raise ValueError("decomposition belongs to a different algebra")
    return BiasExtension(dec)
