"""Fourier-Taylor fields: Fourier in the angles, polynomial in phase variables.

A field F(x, w) = sum_alpha F_alpha(x) w^alpha is stored as a sparse map
from exponent tuples alpha (length q, total degree <= degree) to Fourier
series coefficients F_alpha.  Products truncate both the Taylor degree and
the Fourier order, recording dropped l1 mass in ``trunc_loss``.

The degree truncation is exact for compositions with maps that are affine
in w: degrees only ever add, so nothing of degree <= D is lost by also
truncating every intermediate at D.
"""
from __future__ import annotations

import numpy as np

from .errors import ImplicitSolveFailure
from .fourier import FourierSeries, fs_matmul, fs_mul, fs_stack


def _exp_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _unit(q, j):
    e = [0] * q
    e[j] = 1
    return tuple(e)


class FourierTaylor:
    """Polynomial in w of degree <= ``degree`` with FourierSeries coefficients."""

    def __init__(self, n, q, shape, order, degree, terms, trunc_loss=0.0):
        self.n = int(n)
        self.q = int(q)
        self.shape = tuple(shape)
        self.order = int(order)
        self.degree = int(degree)
        self.trunc_loss = float(trunc_loss)
        clean = {}
        for alpha, s in terms.items():
            alpha = tuple(int(e) for e in alpha)
            if len(alpha) != self.q or any(e < 0 for e in alpha):
                raise ValueError(f"bad exponent {alpha} for q={self.q}")
            if sum(alpha) > self.degree:
                self.trunc_loss += s.majorant()
                continue
            if s.shape != self.shape or s.n != self.n:
                raise ValueError(f"coefficient at {alpha}: shape {s.shape} != {self.shape}")
            if s.coeffs:
                clean[alpha] = s
        self.terms = clean

    # -- construction ----------------------------------------------------------

    @classmethod
    def zero(cls, n, q, shape, order, degree):
        return cls(n, q, shape, order, degree, {})

    @classmethod
    def from_series(cls, s: FourierSeries, q, degree):
        return cls(s.n, q, s.shape, s.order, degree, {(0,) * q: s})

    @classmethod
    def build(cls, n, q, order, degree, entries, shape=None):
        """entries: alpha -> FourierSeries | array (constant in x)."""
        terms = {}
        for alpha, v in entries.items():
            if isinstance(v, FourierSeries):
                terms[alpha] = v
            else:
                terms[alpha] = FourierSeries.constant(n, np.asarray(v, dtype=float), order)
        if shape is None:
            shape = next(iter(terms.values())).shape
        return cls(n, q, shape, order, degree, terms)

    def _like(self, terms, loss=0.0, shape=None):
        return FourierTaylor(self.n, self.q, self.shape if shape is None else shape,
                             self.order, self.degree, terms,
                             trunc_loss=self.trunc_loss + loss)

    # -- linear structure --------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, FourierTaylor):
            return NotImplemented
        if (other.n, other.q, other.shape) != (self.n, self.q, self.shape):
            raise ValueError("field mismatch in +")
        out = dict(self.terms)
        for alpha, s in other.terms.items():
            t = out.get(alpha)
            out[alpha] = s if t is None else t + s
        out = {a: s for a, s in out.items() if s.coeffs}
        return FourierTaylor(self.n, self.q, self.shape, max(self.order, other.order),
                             max(self.degree, other.degree), out,
                             trunc_loss=self.trunc_loss + other.trunc_loss)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self._like({a: -s for a, s in self.terms.items()})

    def __mul__(self, scalar):
        if isinstance(scalar, FourierTaylor):
            return NotImplemented
        return self._like({a: s * scalar for a, s in self.terms.items()})

    __rmul__ = __mul__

    # -- queries -----------------------------------------------------------------

    def majorant(self) -> float:
        """Bound for sup |F| over the real torus times the unit polydisc in w."""
        return float(sum(s.majorant() for s in self.terms.values()))

    def taylor0(self) -> FourierSeries:
        s = self.terms.get((0,) * self.q)
        if s is None:
            return FourierSeries.zero(self.n, self.shape, self.order)
        return s

    def linear_w(self) -> FourierSeries:
        """The degree-1 part as a (shape + (q,)) series of partial coefficients."""
        zero = FourierSeries.zero(self.n, self.shape, self.order)
        cols = [self.terms.get(_unit(self.q, j), zero) for j in range(self.q)]
        return fs_stack(cols, axis=-1)

    def eval(self, x, w):
        w = np.asarray(w, dtype=float)
        out = np.zeros(self.shape)
        for alpha, s in self.terms.items():
            mono = 1.0
            for wj, e in zip(w, alpha):
                mono *= wj ** e
            if mono != 0.0:
                out = out + s.eval(x) * mono
        return out

    # -- calculus ----------------------------------------------------------------

    def deriv_x(self, j):
        return self._like({a: s.deriv_x(j) for a, s in self.terms.items()})

    def directional_derivative(self, omega):
        return self._like({a: s.directional_derivative(omega) for a, s in self.terms.items()})

    def deriv_w(self, j):
        out = {}
        for alpha, s in self.terms.items():
            if alpha[j] == 0:
                continue
            beta = list(alpha)
            beta[j] -= 1
            out[tuple(beta)] = s * alpha[j]
        return self._like(out)

    def grad_x(self):
        """Jacobian in the angles: value shape becomes shape + (n,)."""
        out = {a: fs_stack([s.deriv_x(j) for j in range(self.n)], axis=-1)
               for a, s in self.terms.items()}
        return self._like(out, shape=self.shape + (self.n,))

    def grad_w(self):
        """Jacobian in w: value shape becomes shape + (q,)."""
        zero = FourierSeries.zero(self.n, self.shape, self.order)
        betas = set()
        for alpha in self.terms:
            for j in range(self.q):
                if alpha[j] > 0:
                    b = list(alpha)
                    b[j] -= 1
                    betas.add(tuple(b))
        out = {}
        for beta in betas:
            cols = []
            for j in range(self.q):
                alpha = _exp_add(beta, _unit(self.q, j))
                s = self.terms.get(alpha)
                cols.append(zero if s is None else s * alpha[j])
            out[beta] = fs_stack(cols, axis=-1)
        return self._like(out, shape=self.shape + (self.q,))

    # -- structure maps ------------------------------------------------------------

    def map_series(self, fn):
        """Apply ``fn`` (FourierSeries -> FourierSeries, same shape) to every term."""
        out = {a: fn(s) for a, s in self.terms.items()}
        out = {a: s for a, s in out.items() if s.coeffs}
        return self._like(out)

    def map_values(self, fn, shape):
        """Apply a linear value-space map to every coefficient array."""
        return FourierTaylor(self.n, self.q, tuple(shape), self.order, self.degree,
                             {a: s.map_values(fn, shape=shape) for a, s in self.terms.items()},
                             trunc_loss=self.trunc_loss)

    def truncate_degree(self, degree):
        out, loss = {}, 0.0
        for a, s in self.terms.items():
            if sum(a) <= degree:
                out[a] = s
            else:
                loss += s.majorant()
        return FourierTaylor(self.n, self.q, self.shape, self.order, int(degree), out,
                             trunc_loss=self.trunc_loss + loss)

    def truncate_order(self, order):
        return FourierTaylor(self.n, self.q, self.shape, int(order), self.degree,
                             {a: s.truncate(order) for a, s in self.terms.items()},
                             trunc_loss=self.trunc_loss)

    def drop_below(self, floor):
        """Remove whole terms whose majorant is below ``floor`` (loss-accounted)."""
        out, loss = {}, 0.0
        for a, s in self.terms.items():
            if s.majorant() >= floor:
                out[a] = s
            else:
                loss += s.majorant()
        return self._like(out, loss=loss)

    # -- serialization -----------------------------------------------------------

    def to_json(self):
        entries = [{"alpha": list(a), "series": s.to_json()}
                   for a, s in sorted(self.terms.items())]
        return {"n": self.n, "q": self.q, "shape": list(self.shape),
                "N": self.order, "D": self.degree, "terms": entries}

    @classmethod
    def from_json(cls, doc):
        terms = {tuple(int(e) for e in ent["alpha"]): FourierSeries.from_json(ent["series"])
                 for ent in doc["terms"]}
        return cls(int(doc["n"]), int(doc["q"]), tuple(doc["shape"]),
                   int(doc["N"]), int(doc["D"]), terms)

    def __repr__(self):
        return (f"FourierTaylor(n={self.n}, q={self.q}, shape={self.shape}, "
                f"order={self.order}, degree={self.degree}, terms={len(self.terms)})")


# -- products --------------------------------------------------------------------


def _ft_product(a: FourierTaylor, b: FourierTaylor, series_op, out_shape):
    if (a.n, a.q) != (b.n, b.q):
        raise ValueError("field mismatch in product")
    degree = max(a.degree, b.degree)
    order = max(a.order, b.order)
    acc = {}
    loss = a.trunc_loss + b.trunc_loss
    for alpha, sa in a.terms.items():
        da = sum(alpha)
        for beta, sb in b.terms.items():
            if da + sum(beta) > degree:
                loss += sa.majorant() * sb.majorant()
                continue
            gamma = _exp_add(alpha, beta)
            prod = series_op(sa, sb)
            loss += prod.trunc_loss - sa.trunc_loss - sb.trunc_loss
            got = acc.get(gamma)
            acc[gamma] = prod if got is None else got + prod
    acc = {g: s for g, s in acc.items() if s.coeffs}
    return FourierTaylor(a.n, a.q, out_shape, order, degree, acc, trunc_loss=max(loss, 0.0))


def ft_mul(a: FourierTaylor, b: FourierTaylor) -> FourierTaylor:
    out_shape = np.broadcast_shapes(a.shape, b.shape)
    return _ft_product(a, b, fs_mul, out_shape)


def ft_matmul(a: FourierTaylor, b: FourierTaylor) -> FourierTaylor:
    out_shape = np.matmul(np.zeros(a.shape), np.zeros(b.shape)).shape
    return _ft_product(a, b, fs_matmul, out_shape)


def ft_series_matmul(M: FourierSeries, F: FourierTaylor) -> FourierTaylor:
    """Left-multiply every term of F by the w-independent matrix series M."""
    out_shape = np.matmul(np.zeros(M.shape), np.zeros(F.shape)).shape
    terms = {a: fs_matmul(M, s) for a, s in F.terms.items()}
    return FourierTaylor(F.n, F.q, out_shape, max(M.order, F.order), F.degree,
                         terms, trunc_loss=F.trunc_loss)


# -- substitution of an affine change of phase variables ---------------------------


class WSubstitution:
    """Monomial table for the affine substitution w = W0(x) + W1(x) wbar.

    Monomials w^alpha become scalar Fourier-Taylor polynomials in wbar,
    built incrementally and memoized so that substituting into many fields
    with the same transform shares all the products.
    """

    def __init__(self, W0, W1: FourierSeries, degree):
        self.q = W1.shape[0]
        if W1.shape != (self.q, self.q):
            raise ValueError("W1 must be square")
        self.n = W1.n
        self.order = W1.order
        self.degree = int(degree)
        gens = []
        for j in range(self.q):
            terms = {}
            if W0 is not None:
                s0 = W0.map_values(lambda v, j=j: v[j], shape=())
                if s0.coeffs:
                    terms[(0,) * self.q] = s0
            for i in range(self.q):
                s1 = W1.map_values(lambda v, j=j, i=i: v[j, i], shape=())
                if s1.coeffs:
                    terms[_unit(self.q, i)] = s1
            gens.append(FourierTaylor(self.n, self.q, (), self.order, self.degree, terms))
        self._gen = gens
        one = FourierSeries.constant(self.n, np.array(1.0), self.order)
        self._mono = {(0,) * self.q: FourierTaylor.from_series(one, self.q, self.degree)}

    def monomial(self, alpha) -> FourierTaylor:
        got = self._mono.get(alpha)
        if got is not None:
            return got
        j = max(i for i, e in enumerate(alpha) if e > 0)
        prev = list(alpha)
        prev[j] -= 1
        out = ft_mul(self.monomial(tuple(prev)), self._gen[j])
        self._mono[alpha] = out
        return out

    def apply(self, F: FourierTaylor, coeff_map=None) -> FourierTaylor:
        """Substitute into F; ``coeff_map`` transforms each coefficient series first
        (angle shift or reflection), applied before the w-substitution."""
        out = FourierTaylor.zero(F.n, self.q, F.shape, max(F.order, self.order), self.degree)
        for alpha, s in F.terms.items():
            c = s if coeff_map is None else coeff_map(s)
            if not c.coeffs:
                continue
            lifted = FourierTaylor.from_series(c, self.q, self.degree)
            out = out + ft_mul(lifted, self.monomial(alpha))
        return out


def involution_pullback(F: FourierTaylor, S) -> FourierTaylor:
    """Pullback of F under (x, w) -> (-x, S w) for a constant linear S."""
    S = np.asarray(S, dtype=float)
    W1 = FourierSeries.constant(F.n, S, F.order)
    sub = WSubstitution(None, W1, F.degree)
    return sub.apply(F, coeff_map=lambda s: s.reflect())


# -- small implicit solves -----------------------------------------------------------


def fs_neumann_solve(M: FourierSeries, rhs: FourierSeries, tol=1e-16, max_iter=400):
    """Solve (I + M(x)) u(x) = rhs(x) by fixed point; M must be a contraction."""
    u = rhs
    scale = rhs.majorant() + 1e-300
    for _ in range(max_iter):
        nxt = rhs - fs_matmul(M, u)
        delta = (nxt - u).majorant()
        u = nxt
        if delta <= tol * scale:
            return u
    raise ImplicitSolveFailure(f"Neumann iteration stalled: last change {delta:.3e}")


def ft_neumann_solve(M: FourierSeries, rhs: FourierTaylor, tol=1e-16, max_iter=400):
    """Solve (I + M(x)) u(x, w) = rhs(x, w) termwise in w."""
    terms = {a: fs_neumann_solve(M, s, tol=tol, max_iter=max_iter)
             for a, s in rhs.terms.items()}
    return FourierTaylor(rhs.n, rhs.q, rhs.shape, rhs.order, rhs.degree, terms,
                         trunc_loss=rhs.trunc_loss)
