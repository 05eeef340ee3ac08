"""Free Lie algebra machinery and the formal Campbell-Hausdorff table.

Lie polynomials are expanded in the free associative algebra (dict word ->
Fraction) and re-expressed in the Lyndon basis with standard bracketing.
Lyndon words are ordered by length, then lexicographically; this order fixes
the basis labels of the free nilpotent algebras.
"""

from fractions import Fraction
from functools import lru_cache
from math import factorial

MAX_STEP = 6


def is_lyndon(word):
    n = len(word)
    return n > 0 and all(word < word[i:] + word[:i] for i in range(1, n))


def lyndon_words(rank, max_len):
    """Lyndon words over range(rank), ordered by length then lexicographically."""
    out = []
    # Duval's generator yields words in lexicographic order for all lengths <= max_len
    w = [-1]
    while w:
        w[-1] += 1
        out.append(tuple(w))
        m = len(w)
        while len(w) < max_len:
            w.append(w[len(w) - m])
        while w and w[-1] == rank - 1:
            w.pop()
    return sorted(out, key=lambda u: (len(u), u))


def standard_factorization(word):
    """Split a Lyndon word w = uv with v its longest proper Lyndon suffix."""
    for i in range(1, len(word)):
        if is_lyndon(word[i:]):
            return word[:i], word[i:]
    raise ValueError("letters have no factorization")


# -- free associative algebra ------------------------------------------------

def poly_add(p, q, c=1):
    out = dict(p)
    for w, a in q.items():
        v = out.get(w, 0) + c * a
        if v:
            out[w] = v
        else:
            out.pop(w, None)
    return out


def poly_mul(p, q, max_len=None):
    out = {}
    for u, a in p.items():
        for v, b in q.items():
            if max_len is not None and len(u) + len(v) > max_len:
                continue
            w = u + v
            out[w] = out.get(w, 0) + a * b
    return {w: a for w, a in out.items() if a}


def poly_bracket(p, q):
    return poly_add(poly_mul(p, q), poly_mul(q, p), -1)


@lru_cache(maxsize=None)
def lyndon_polynomial(word):
    """Associative expansion of the standard bracketing of a Lyndon word."""
    if len(word) == 1:
        return {word: Fraction(1)}
    u, v = standard_factorization(word)
    return poly_bracket(lyndon_polynomial(u), lyndon_polynomial(v))


def express_in_lyndon(poly):
    """Coefficients of a Lie polynomial in the Lyndon basis.

    Uses triangularity: the bracketing of w equals w plus lexicographically
    larger words of the same length, so the smallest word still present is
    always the next basis element to peel off.
    """
    poly = dict(poly)
    coeffs = {}
    while poly:
        w = min(poly, key=lambda u: (len(u), u))
        if not is_lyndon(w):
            raise ValueError("not a Lie polynomial")
        a = poly[w]
        coeffs[w] = a
        poly = poly_add(poly, lyndon_polynomial(w), -a)
    return coeffs


# -- Campbell-Hausdorff series -----------------------------------------------

def _exp_letter(letter, order):
    return {(letter,) * k: Fraction(1, factorial(k)) for k in range(order + 1)}


@lru_cache(maxsize=None)
def bch_table(step):
    """Formal terms of log(exp(x) exp(y)) up to degree `step`.

    Returns a tuple of (lyndon word over {0: x, 1: y}, coefficient), sorted
    in basis order.  Coefficients are exact.
    """
    if not 1 <= step <= MAX_STEP:
        raise ValueError(f"step must be in 1..{MAX_STEP}")
    prod = poly_mul(_exp_letter(0, step), _exp_letter(1, step), step)
    z = {w: a for w, a in prod.items() if w}
    log = {}
    power = {(): Fraction(1)}
    for k in range(1, step + 1):
        power = poly_mul(power, z, step)
        log = poly_add(log, power, Fraction((-1) ** (k + 1), k))
    coeffs = express_in_lyndon(log)
    return tuple(sorted(coeffs.items(), key=lambda t: (len(t[0]), t[0])))


def evaluate_table(table, x, y, bracket):
    """Evaluate a formal table on concrete x, y with a given bracket.

    Works for numpy arrays (batched along leading axes) and for numpy object
    arrays of Fractions alike.
    """
    cache = {(0,): x, (1,): y}
    exact = getattr(x, "dtype", None) == object

    def value(word):
        if word not in cache:
            u, v = standard_factorization(word)
            cache[word] = bracket(value(u), value(v))
        return cache[word]

    out = None
    for word, coeff in table:
        c = coeff if exact else float(coeff)
        term = value(word) * c if len(word) > 1 else value(word)
        out = term if out is None else out + term
    return out
