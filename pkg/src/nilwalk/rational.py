"""Exact linear algebra over the rationals.

Vectors are tuples of Fractions.  Subspaces are stored as the nonzero rows
of their reduced row echelon form, which makes equality of subspaces a
plain tuple comparison.
"""

from fractions import Fraction


def to_fraction(value):
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        # shortest decimal repr, so 0.1 becomes 1/10 rather than its binary value
        return Fraction(repr(float(value)))
    return Fraction(value)


def vec(values):
    return tuple(to_fraction(v) for v in values)


def zero(n):
    return (Fraction(0),) * n


def is_zero(v):
    return all(c == 0 for c in v)


def add(u, v):
    return tuple(a + b for a, b in zip(u, v))


def sub(u, v):
    return tuple(a - b for a, b in zip(u, v))


def scale(c, v):
    return tuple(c * a for a in v)


def rref(rows):
    """Reduced row echelon form.

    Returns (basis, pivots) where basis holds the nonzero rows only.
    """
    m = [list(vec(r)) for r in rows]
    if not m:
        return (), ()
    ncols = len(m[0])
    pivots = []
    r = 0
    for c in range(ncols):
        if r == len(m):
            break
        p = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        inv = 1 / m[r][c]
        m[r] = [a * inv for a in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
    return tuple(tuple(row) for row in m[:r]), tuple(pivots)


def span(vectors):
    """Canonical basis (rref rows) of the span of `vectors`."""
    return rref(list(vectors))[0]


def rank(vectors):
    return len(span(vectors))


def reduce(v, basis, pivots):
    """Remainder of v after elimination against an rref basis."""
    v = list(v)
    for row, c in zip(basis, pivots):
        if v[c] != 0:
            f = v[c]
            v = [a - f * b for a, b in zip(v, row)]
    return tuple(v)


def contains(basis, v):
    """True if v lies in the span of the rref basis."""
    if not basis:
        return is_zero(v)
    pivots = [next(i for i, a in enumerate(row) if a != 0) for row in basis]
    return is_zero(reduce(vec(v), basis, pivots))


def is_subspace(small, big):
    return all(contains(big, v) for v in small)


def sum_spaces(*spaces):
    return span([v for s in spaces for v in s])


def inverse(matrix):
    """Inverse of a square matrix given as a list of rows."""
    n = len(matrix)
    aug = [list(vec(row)) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    red, piv = rref(aug)
    if len(red) != n or tuple(piv) != tuple(range(n)):
        raise ValueError("matrix is singular")
    return [tuple(row[n:]) for row in red]


def matvec(matrix, v):
    return tuple(sum((a * b for a, b in zip(row, v)), Fraction(0)) for row in matrix)


def transpose(matrix):
    return [tuple(col) for col in zip(*matrix)]


def solve_in_basis(basis, v):
    """Coefficients c with sum_k c_k basis[k] = v; raises if v is not in the span."""
    k = len(basis)
    n = len(v)
    # columns are basis vectors, augmented with v
    aug = [[basis[j][i] for j in range(k)] + [v[i]] for i in range(n)]
    red, piv = rref(aug)
    if k in piv:
        raise ValueError("vector not in span")
    coeffs = [Fraction(0)] * k
    for row, c in zip(red, piv):
        coeffs[c] = row[k]
    return tuple(coeffs)


def fraction_str(c):
    c = to_fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
