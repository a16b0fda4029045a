"""Truncated Fourier series on the n-torus with vector or matrix values.

The representation is a sparse map from integer modes k to complex
coefficient arrays.  Reality of the represented function is an invariant:
the coefficient at -k is the complex conjugate of the coefficient at k for
every stored k.  All arithmetic preserves the invariant exactly because
complex multiplication commutes with conjugation flop for flop.

No grid transforms are used anywhere; products are sparse convolutions
over the stored modes, vectorized with numpy.
"""
from __future__ import annotations

import numpy as np

from .errors import ImaginaryResidue

# Coefficients below this magnitude are pruned outright.
PRUNE_TOL = 1e-30
# Whole products whose majorant bound falls below this are skipped.  This
# sits eight orders of magnitude under the tightest stated tolerance.
DROP_TOL = 1e-20


def order1(k) -> int:
    """Order |k| = |k_1| + ... + |k_n| of a multi-index."""
    return int(sum(abs(int(c)) for c in k))


def _canonical_half(k) -> bool:
    """True when the first nonzero entry of k is positive (or k = 0)."""
    for c in k:
        if c > 0:
            return True
        if c < 0:
            return False
    return True


class FourierSeries:
    """Sparse truncated Fourier series sum_k c_k exp(i<k, x>) on T^n.

    Coefficients c_k are complex numpy arrays of a common ``shape``:
    ``(d,)`` for a map into R^d, ``(r, c)`` for matrix-valued series.
    ``order`` is the truncation order; modes with |k| > order are not
    representable and binary operations drop them, recording the dropped
    l1 mass in ``trunc_loss``.
    """

    def __init__(self, n, shape, order, coeffs, trunc_loss=0.0, validate=True,
                 trusted=False):
        self.n = int(n)
        self.shape = tuple(int(s) for s in shape)
        self.order = int(order)
        self.trunc_loss = float(trunc_loss)
        self._cache = None
        self._majorant = None
        if trusted:
            # internal fast path: keys canonical, values pre-pruned in-order
            self.coeffs = coeffs
            return
        clean = {}
        for k, v in coeffs.items():
            kk = tuple(int(c) for c in k)
            if len(kk) != self.n:
                raise ValueError(f"mode {kk} has wrong length for n={self.n}")
            arr = np.asarray(v, dtype=complex)
            if arr.shape != self.shape:
                raise ValueError(f"coefficient at {kk} has shape {arr.shape}, expected {self.shape}")
            if order1(kk) > self.order:
                if validate:
                    raise ValueError(f"mode {kk} beyond truncation order {self.order}")
                self.trunc_loss += float(np.max(np.abs(arr)))
                continue
            if arr.size == 0 or np.max(np.abs(arr)) < PRUNE_TOL:
                continue
            clean[kk] = arr
        self.coeffs = clean
        if validate:
            self._check_reality()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, n, shape, order):
        return cls(n, shape, order, {}, validate=False)

    @classmethod
    def constant(cls, n, value, order):
        value = np.asarray(value, dtype=complex)
        k0 = (0,) * n
        return cls(n, value.shape, order, {k0: value}, validate=False)

    @classmethod
    def cosine(cls, n, k, value, order):
        """value * cos(<k, x>)."""
        value = np.asarray(value, dtype=complex)
        k = tuple(int(c) for c in k)
        mk = tuple(-c for c in k)
        if k == mk:
            return cls(n, value.shape, order, {k: value})
        return cls(n, value.shape, order, {k: value / 2, mk: value / 2})

    @classmethod
    def sine(cls, n, k, value, order):
        """value * sin(<k, x>)."""
        value = np.asarray(value, dtype=complex)
        k = tuple(int(c) for c in k)
        mk = tuple(-c for c in k)
        if k == mk:
            return cls.zero(n, value.shape, order)
        return cls(n, value.shape, order, {k: -0.5j * value, mk: 0.5j * value})

    def _check_reality(self, tol=1e-12):
        scale = self.majorant()
        if scale == 0.0:
            return
        for k, v in self.coeffs.items():
            mk = tuple(-c for c in k)
            w = self.coeffs.get(mk)
            if w is None:
                bad = np.max(np.abs(v))
            else:
                bad = np.max(np.abs(np.conj(w) - v))
            if bad > tol * scale:
                raise ValueError(f"reality violated at mode {k} by {bad:.3e} (scale {scale:.3e})")

    def _arrays(self):
        """Stacked (K, V) arrays of the stored modes, cached."""
        if self._cache is None:
            if self.coeffs:
                keys = sorted(self.coeffs)
                K = np.array(keys, dtype=np.int64).reshape(len(keys), self.n)
                V = np.stack([self.coeffs[k] for k in keys])
            else:
                K = np.zeros((0, self.n), dtype=np.int64)
                V = np.zeros((0,) + self.shape, dtype=complex)
            self._cache = (K, V)
        return self._cache

    # -- basic queries ---------------------------------------------------------

    def majorant(self) -> float:
        """l1 coefficient norm: an upper bound for sup |f| on the real torus."""
        if self._majorant is None:
            self._majorant = float(
                sum(np.max(np.abs(v)) for v in self.coeffs.values())
            ) if self.coeffs else 0.0
        return self._majorant

    def strip_norm(self, rho) -> float:
        """Majorant sum |c_k| e^{|k| rho} of sup over the complex strip of width rho."""
        rho = float(rho)
        if rho <= 0.0:
            raise ValueError("strip width rho must be positive")
        return float(
            sum(np.max(np.abs(v)) * np.exp(order1(k) * rho) for k, v in self.coeffs.items())
        )

    def average(self):
        """Torus average: the k = 0 coefficient as a real array."""
        v = self.coeffs.get((0,) * self.n)
        if v is None:
            return np.zeros(self.shape)
        return np.real(v).copy()

    def eval(self, x):
        """Evaluate at a point x of the torus; the result must be real."""
        x = np.asarray(x, dtype=float)
        K, V = self._arrays()
        if len(K) == 0:
            return np.zeros(self.shape)
        phases = np.exp(1j * (K @ x))
        out = np.tensordot(phases, V, axes=([0], [0]))
        mag = self.majorant()
        resid = float(np.max(np.abs(out.imag))) if out.size else 0.0
        if resid > 1e-10 * mag:
            raise ImaginaryResidue(f"imaginary residue {resid:.3e} exceeds 1e-10 * {mag:.3e}")
        return out.real

    # -- linear operations -----------------------------------------------------

    def _like(self, coeffs, order=None, loss=0.0):
        return FourierSeries(
            self.n, self.shape, self.order if order is None else order, coeffs,
            trunc_loss=self.trunc_loss + loss, validate=False,
        )

    def __add__(self, other):
        if not isinstance(other, FourierSeries):
            return NotImplemented
        if other.n != self.n or other.shape != self.shape:
            raise ValueError("series mismatch in + ")
        order = max(self.order, other.order)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            w = out.get(k)
            out[k] = v if w is None else w + v
        res = FourierSeries(self.n, self.shape, order, out,
                            trunc_loss=self.trunc_loss + other.trunc_loss, validate=False)
        return res._pruned()

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self._like({k: -v for k, v in self.coeffs.items()})

    def __mul__(self, scalar):
        if isinstance(scalar, FourierSeries):
            return NotImplemented
        s = complex(scalar)
        if s.imag == 0.0:
            s = s.real
        return self._like({k: v * s for k, v in self.coeffs.items()})._pruned()

    __rmul__ = __mul__

    def _pruned(self):
        dead = [k for k, v in self.coeffs.items() if np.max(np.abs(v)) < PRUNE_TOL]
        for k in dead:
            del self.coeffs[k]
        self._cache = None
        return self

    def truncate(self, order):
        """Drop modes beyond ``order``, recording the dropped l1 mass."""
        order = int(order)
        if order == self.order:
            return self
        out, loss = {}, 0.0
        for k, v in self.coeffs.items():
            if order1(k) <= order:
                out[k] = v
            else:
                loss += float(np.max(np.abs(v)))
        return FourierSeries(self.n, self.shape, order, out,
                             trunc_loss=self.trunc_loss + loss, validate=False)

    # -- calculus and symmetry -------------------------------------------------

    def directional_derivative(self, omega):
        """Coefficientwise map c_k -> i <k, omega> c_k (derivative along the flow)."""
        omega = np.asarray(omega, dtype=float)
        out = {}
        for k, v in self.coeffs.items():
            fac = 1j * float(np.dot(k, omega))
            if fac != 0.0:
                out[k] = fac * v
        return self._like(out)._pruned()

    def deriv_x(self, j):
        """Partial derivative in the j-th angle: c_k -> i k_j c_k."""
        out = {}
        for k, v in self.coeffs.items():
            if k[j] != 0:
                out[k] = (1j * k[j]) * v
        return self._like(out)._pruned()

    def reflect(self):
        """Pullback under x -> -x; by reality this conjugates coefficients."""
        return self._like({k: np.conj(v) for k, v in self.coeffs.items()})

    def phase_shift(self, alpha):
        """Pullback under x -> x + alpha for a constant alpha."""
        alpha = np.asarray(alpha, dtype=float)
        return self._like(
            {k: np.exp(1j * float(np.dot(k, alpha))) * v for k, v in self.coeffs.items()}
        )

    def parity_decompose(self):
        """Split into the even part and the odd part in x.

        Even coefficients are Re c_k, odd ones i Im c_k; the two parts sum
        back to the series exactly.
        """
        even = {k: np.real(v).astype(complex) for k, v in self.coeffs.items()}
        odd = {k: 1j * np.imag(v) for k, v in self.coeffs.items()}
        return self._like(even)._pruned(), self._like(odd)._pruned()

    def realified(self):
        """Exact reality enforcement: average the +-k pair of each mode."""
        out = {}
        for k, v in self.coeffs.items():
            mk = tuple(-c for c in k)
            w = self.coeffs.get(mk)
            out[k] = v if w is None else 0.5 * (v + np.conj(w))
        return self._like(out)._pruned()

    def map_values(self, fn, shape=None):
        """Apply ``fn`` to every coefficient array (must be linear and real)."""
        shape = self.shape if shape is None else tuple(shape)
        out = {k: np.asarray(fn(v), dtype=complex) for k, v in self.coeffs.items()}
        return FourierSeries(self.n, shape, self.order, out,
                             trunc_loss=self.trunc_loss, validate=False)._pruned()

    # -- serialization ---------------------------------------------------------

    def to_json(self):
        """Schema: one entry per +-k pair, canonical representative stored."""
        entries = []
        for k in sorted(self.coeffs):
            if not _canonical_half(k):
                continue
            v = self.coeffs[k]
            entries.append({
                "k": list(k),
                "re": np.real(v).ravel().tolist(),
                "im": np.imag(v).ravel().tolist(),
            })
        d = int(np.prod(self.shape)) if self.shape else 1
        doc = {"n": self.n, "d": d, "N": self.order, "coeffs": entries}
        if len(self.shape) != 1:
            doc["shape"] = list(self.shape)
        return doc

    @classmethod
    def from_json(cls, doc):
        n = int(doc["n"])
        order = int(doc["N"])
        shape = tuple(doc["shape"]) if "shape" in doc else (int(doc["d"]),)
        coeffs = {}
        for entry in doc["coeffs"]:
            k = tuple(int(c) for c in entry["k"])
            v = (np.asarray(entry["re"], dtype=float)
                 + 1j * np.asarray(entry["im"], dtype=float)).reshape(shape)
            coeffs[k] = v
            mk = tuple(-c for c in k)
            if mk != k:
                coeffs[mk] = np.conj(v)
        return cls(n, shape, order, coeffs)

    def __repr__(self):
        return (f"FourierSeries(n={self.n}, shape={self.shape}, order={self.order}, "
                f"modes={len(self.coeffs)})")


# -- products ------------------------------------------------------------------


def _convolve(a: FourierSeries, b: FourierSeries, vcombine, out_shape):
    """Sparse convolution of stored modes with a vectorized value combiner."""
    order = max(a.order, b.order)
    loss = a.trunc_loss + b.trunc_loss
    if not a.coeffs or not b.coeffs:
        return FourierSeries(a.n, out_shape, order, {}, trunc_loss=loss, validate=False)
    if a.majorant() * b.majorant() < DROP_TOL:
        return FourierSeries(a.n, out_shape, order, {},
                             trunc_loss=loss + a.majorant() * b.majorant(), validate=False)
    Ka, Va = a._arrays()
    Kb, Vb = b._arrays()
    keys = (Ka[:, None, :] + Kb[None, :, :]).reshape(-1, a.n)
    vals = vcombine(Va, Vb)
    vals = vals.reshape((-1,) + out_shape)
    span = int(np.abs(Ka).max() + np.abs(Kb).max())
    if (2 * span + 1) ** a.n < 2 ** 62:
        # scalar-encode rows so the dedup is a single 1-d sort
        base = 2 * span + 1
        powers = base ** np.arange(a.n - 1, -1, -1, dtype=np.int64)
        _, first, inv = np.unique((keys + span) @ powers,
                                  return_index=True, return_inverse=True)
        uk = keys[first]
    else:  # pragma: no cover - astronomically wide mode spans
        uk, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = np.ravel(inv)  # numpy >= 2.1 returns a shaped inverse
    acc = np.zeros((len(uk),) + out_shape, dtype=complex)
    np.add.at(acc, inv, vals)
    norms = np.abs(acc).reshape(len(uk), -1).max(axis=1) if acc.size else np.zeros(len(uk))
    orders = np.abs(uk).sum(axis=1)
    live = norms >= PRUNE_TOL
    over = live & (orders > order)
    loss += float(norms[over].sum())
    coeffs = {}
    for i in np.nonzero(live & ~over)[0]:
        coeffs[tuple(int(c) for c in uk[i])] = acc[i]
    return FourierSeries(a.n, out_shape, order, coeffs, trunc_loss=loss,
                         validate=False, trusted=True)


def fs_mul(a: FourierSeries, b: FourierSeries) -> FourierSeries:
    """Pointwise product with numpy broadcasting of the value shapes."""
    out_shape = np.broadcast_shapes(a.shape, b.shape)
    r = len(out_shape)

    def combine(Va, Vb):
        sa = (len(Va), 1) + (1,) * (r - len(a.shape)) + a.shape
        sb = (1, len(Vb)) + (1,) * (r - len(b.shape)) + b.shape
        return Va.reshape(sa) * Vb.reshape(sb)

    return _convolve(a, b, combine, out_shape)


def fs_matmul(a: FourierSeries, b: FourierSeries) -> FourierSeries:
    """Pointwise matrix product: (r,c) @ (c,) or (r,c) @ (c,e)."""
    out_shape = np.matmul(np.zeros(a.shape), np.zeros(b.shape)).shape

    def combine(Va, Vb):
        # stacked coefficients: 1-D value shapes need explicit matrix axes,
        # else matmul reads the stack axis as a matrix dimension
        A = Va.reshape((len(Va), 1) + a.shape)
        B = Vb.reshape((1, len(Vb)) + b.shape)
        if len(a.shape) == 1:
            A = A[..., None, :]
        if len(b.shape) == 1:
            B = B[..., :, None]
        C = np.matmul(A, B)
        if len(a.shape) == 1:
            C = C[..., 0, :]
        if len(b.shape) == 1:
            C = C[..., 0]
        return C

    return _convolve(a, b, combine, out_shape)


def fs_stack(series, axis=0):
    """Stack equally shaped series along a new value axis (like np.stack)."""
    series = list(series)
    n = series[0].n
    order = max(s.order for s in series)
    keys = set()
    for s in series:
        keys.update(s.coeffs)
    shape = series[0].shape
    out = {}
    for k in keys:
        parts = [s.coeffs.get(k, np.zeros(shape, dtype=complex)) for s in series]
        out[k] = np.stack(parts, axis=axis)
    loss = sum(s.trunc_loss for s in series)
    out_shape = np.stack([np.zeros(shape) for _ in series], axis=axis).shape
    return FourierSeries(n, out_shape, order, out, trunc_loss=loss, validate=False)


class AngleShift:
    """Composition operator g(x) -> g(x + a(x)) shared across many series.

    ``a`` is a small (n,)-valued series.  The composition is the Taylor
    expansion g(x + a) = sum_beta d^beta g(x) a(x)^beta / beta!, truncated
    adaptively once a layer's majorant falls below ``tol`` relative to the
    operand.  Powers of a are memoized so the expansion is shared by every
    series composed with the same shift.
    """

    def __init__(self, a: FourierSeries, tol=1e-17, max_degree=60):
        if a.shape != (a.n,):
            raise ValueError("angle shift needs an (n,)-valued series")
        self.a = a
        self.n = a.n
        self.order = a.order
        self.tol = float(tol)
        self.max_degree = int(max_degree)
        self.trivial = a.majorant() == 0.0
        one = FourierSeries.constant(a.n, np.array(1.0 + 0j), a.order)
        self._pow = {(0,) * a.n: one}
        self._comp = [a.map_values(lambda v, j=j: v[j], shape=()) for j in range(a.n)]

    def _power(self, beta):
        got = self._pow.get(beta)
        if got is not None:
            return got
        j = max(i for i, e in enumerate(beta) if e > 0)
        prev = list(beta)
        prev[j] -= 1
        base = self._power(tuple(prev))
        out = fs_mul(base, self._comp[j])
        self._pow[beta] = out
        return out

    def apply(self, s: FourierSeries) -> FourierSeries:
        if self.trivial or not s.coeffs:
            return s
        scale = s.majorant() + 1e-300
        acc = s
        degree = 0
        while degree < self.max_degree:
            degree += 1
            layer_mag = 0.0
            for beta in _exponents(self.n, degree, degree):
                p = self._power(beta)
                if p.majorant() == 0.0:
                    continue
                ds = s
                fact = 1.0
                for j, e in enumerate(beta):
                    for _ in range(e):
                        ds = ds.deriv_x(j)
                    for i in range(2, e + 1):
                        fact *= i
                term = fs_mul(p, ds) * (1.0 / fact)
                layer_mag += term.majorant()
                acc = acc + term
            if layer_mag <= self.tol * scale:
                break
        return acc.truncate(s.order)


def _exponents(q, lo, hi):
    """All exponent tuples of length q with lo <= total degree <= hi."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            for d in range(remaining + 1):
                out.append(prefix + (d,))
            return
        for d in range(remaining + 1):
            rec(prefix + (d,), remaining - d, slots - 1)

    if q == 0:
        return [()] if lo <= 0 <= hi else []
    rec((), hi, q)
    return [e for e in out if lo <= sum(e) <= hi]
