"""Small-divisor solvers for the linear equations behind each Newton step.

Four flavors of the same mode-wise idea, distinguished by how the constant
normal-part matrix Q enters:

    scalar      dPhi/dx . omega           = F     divisor  i<k,omega>
    normal      dPhi/dx . omega - Q Phi   = F     matrix  (i<k,omega> I - Q)
    right       dPhi/dx . omega + Phi Q   = F     matrix  (i<k,omega> I + Q^T) on rows
    commutator  dPhi/dx . omega + Phi Q - Q Phi = F   Kronecker-vectorized solve

Each solves its equation exactly on the stored modes.  Reality is preserved
by solving one representative per +-k pair and mirroring the conjugate,
which is legitimate because Q is real.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diophantine import DiophantineParams
from .errors import NonzeroAverage, SingularMode, SmallDivisor, ZeroModeObstruction
from .fourier import FourierSeries, _canonical_half, order1
from .revmat import RevMatrix, solve_fix_range

COND_LIMIT = 1e12


def _half_modes(F: FourierSeries):
    """Canonical representatives of the nonzero +-k pairs of F."""
    return [k for k in F.coeffs if order1(k) > 0 and _canonical_half(k)]


def _mirror(out: dict, k, val):
    out[k] = val
    mk = tuple(-c for c in k)
    if mk != k:
        out[mk] = np.conj(val)


def solve_scalar(F: FourierSeries, omega, params: DiophantineParams,
                 avg_tol: float = 1e-12) -> FourierSeries:
    """Invert the derivative along the constant flow on zero-average series."""
    omega = np.asarray(omega, dtype=float)
    avg = float(np.max(np.abs(F.average()))) if F.coeffs else 0.0
    if avg > avg_tol * max(F.majorant(), 1e-300):
        raise NonzeroAverage(f"average has magnitude {avg:.3e}")
    out = {}
    for k in _half_modes(F):
        div = float(np.dot(k, omega))
        bound = params.gamma * order1(k) ** (-params.tau)
        if abs(div) < bound:
            raise SmallDivisor(k, abs(div), bound)
        _mirror(out, k, F.coeffs[k] / (1j * div))
    return FourierSeries(F.n, F.shape, F.order, out, trunc_loss=F.trunc_loss, validate=False)


def _mode_solve(F: FourierSeries, omega, build_matrix, solve_zero, vec=None):
    """Shared driver: per-mode linear solves with a condition-number guard."""
    omega = np.asarray(omega, dtype=float)
    out = {}
    for k in _half_modes(F):
        A = build_matrix(float(np.dot(k, omega)))
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularMode(k, cond)
        rhs = F.coeffs[k] if vec is None else vec(F.coeffs[k])
        sol = np.linalg.solve(A, rhs)
        _mirror(out, k, sol if vec is None else vec(sol, back=True))
    k0 = (0,) * F.n
    if k0 in F.coeffs:
        z = solve_zero(F.coeffs[k0])
        if z is not None:
            out[k0] = z
    return FourierSeries(F.n, F.shape, F.order, out, trunc_loss=F.trunc_loss, validate=False)


def solve_normal(F: FourierSeries, omega, Q: RevMatrix,
                 params: DiophantineParams | None = None) -> FourierSeries:
    """Solve dPhi/dx.omega - Q Phi = F mode-wise; F may be (d,) or (d, m)."""
    Qm = Q.Q
    d = Qm.shape[0]
    if F.shape[0] != d:
        raise ValueError("leading dimension of F must match Q")
    Id = np.eye(d)

    def build(div):
        return 1j * div * Id - Qm

    def zero(f0):
        f0 = np.real(f0)
        cond = np.linalg.cond(Qm)
        if np.isfinite(cond) and cond <= COND_LIMIT:
            return np.asarray(np.linalg.solve(-Qm, f0), dtype=complex)
        # Singular normal part: fall back to the Fix-space solve, column-wise.
        try:
            cols = f0.reshape(d, -1)
            sols = [solve_fix_range(Q, cols[:, j]) for j in range(cols.shape[1])]
        except Exception as exc:
            raise ZeroModeObstruction(f"constant mode unsolvable: {exc}") from exc
        return np.stack(sols, axis=1).reshape(f0.shape).astype(complex)

    return _mode_solve(F, omega, build, zero)


def solve_right(F: FourierSeries, omega, Q: RevMatrix) -> FourierSeries:
    """Solve dPhi/dx.omega + Phi Q = F for (m, d)-valued F (Q acts on rows)."""
    Qm = Q.Q
    d = Qm.shape[0]
    if F.shape[-1] != d:
        raise ValueError("trailing dimension of F must match Q")
    Id = np.eye(d)

    def build(div):
        # transpose the row equation: (i div I + Q^T) Phi_k^T = F_k^T
        return 1j * div * Id + Qm.T

    def zero(f0):
        f0 = np.real(f0)
        cond = np.linalg.cond(Qm)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise ZeroModeObstruction("constant mode needs invertible Q on the right")
        return np.asarray(np.linalg.solve(Qm.T, f0.T).T, dtype=complex)

    def vec(arr, back=False):
        return arr.T

    return _mode_solve(F, omega, build, zero, vec=vec)


def commutator_operator(div: float, Qm: np.ndarray) -> np.ndarray:
    """Matrix of X -> i*div*X + X Q - Q X acting on column-major vec(X)."""
    d = Qm.shape[0]
    Id = np.eye(d)
    return 1j * div * np.eye(d * d) + np.kron(Qm.T, Id) - np.kron(Id, Qm)


def solve_commutator(F: FourierSeries, omega, Q: RevMatrix,
                     skip_zero_mode: bool = True) -> FourierSeries:
    """Solve dPhi/dx.omega + Phi Q - Q Phi = F for (d, d)-valued F.

    The k = 0 mode lies in the kernel-plagued adjoint operator and is
    handled by the caller (it feeds the parameter shift), so by default the
    constant mode of F must be absent.
    """
    Qm = Q.Q
    d = Qm.shape[0]
    if F.shape != (d, d):
        raise ValueError("F must be (d, d)-valued")

    def build(div):
        return commutator_operator(div, Qm)

    def zero(f0):
        if skip_zero_mode:
            if np.max(np.abs(f0)) > 1e-12 * max(F.majorant(), 1e-300):
                raise ZeroModeObstruction("constant mode present; caller must absorb it")
            return None
        raise ZeroModeObstruction("constant commutator mode is never invertible")

    def vec(arr, back=False):
        if back:
            return arr.reshape(d, d, order="F")
        return arr.ravel(order="F")

    return _mode_solve(F, omega, build, zero, vec=vec)


@dataclass
class EstimateReport:
    rho: float
    rho_prime: float
    lhs: float
    rhs_factor: float
    implied_c: float

    def to_json(self):
        return {"rho": self.rho, "rho_prime": self.rho_prime, "lhs": self.lhs,
                "rhs_factor": self.rhs_factor, "impliedC": self.implied_c}


def verify_estimate(F: FourierSeries, Phi: FourierSeries, omega,
                    params: DiophantineParams, rho: float, rho_prime: float) -> EstimateReport:
    """Empirical constant for the strip-norm bound on the scalar solve:
    |Phi|_{rho'} <= C |F|_rho / (gamma (rho - rho')^{n + tau})."""
    if not (0.0 < rho_prime < rho):
        raise ValueError("need 0 < rho_prime < rho")
    lhs = Phi.strip_norm(rho_prime)
    rhs = F.strip_norm(rho)
    gap = (rho - rho_prime) ** (F.n + params.tau)
    implied = lhs * params.gamma * gap / rhs if rhs > 0 else 0.0
    return EstimateReport(rho, rho_prime, lhs, rhs, implied)
