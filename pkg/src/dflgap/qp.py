"""Convex quadratic programs: a primal-dual interior-point solver and the
implicit-function backward pass with respect to the linear cost.

Problems have the form::

    minimize    1/2 z^T Q z + c^T z
    subject to  A z  = b
                G z <= h

Constraint matrices may be dense ``ndarray`` or ``scipy.sparse`` matrices.
Dense inputs are factorized with dense LU; if ``A``, ``G`` or ``Q`` is
sparse the KKT systems are assembled and factorized sparsely instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import structural_rank

from .errors import IllConditioned, Infeasible, MaxIterations, SingularKktSystem

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
DAMPING = 1e-10
_RCOND_SINGULAR = 1e-13
_POLISH_START = 1e-3
_REFINE_STEPS = 1
_MU_GROWTH = 1.05


def _as_matrix(M, rows, cols, name):
    if M is None:
        return np.zeros((rows if rows is not None else 0, cols))
    if sp.issparse(M):
        M = sp.csr_matrix(M, dtype=float)
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.size == 0:
            M = M.reshape(0, cols)
    if M.shape[1] != cols:
        raise ValueError(f"{name} has {M.shape[1]} columns, expected {cols}")
    return M


def _as_vector(v, size, name):
    v = np.zeros(size) if v is None else np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (size,):
        raise ValueError(f"{name} has length {v.size}, expected {size}")
    return v


@dataclass(frozen=True, eq=False)
class QpProblem:
    """minimize 1/2 z'Qz + c'z  s.t.  Az = b,  Gz <= h."""

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray | sp.spmatrix | None = None
    b: np.ndarray | None = None
    G: np.ndarray | sp.spmatrix | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        Q = sp.csr_matrix(self.Q, dtype=float) if sp.issparse(self.Q) else np.asarray(self.Q, dtype=float)
        if Q.shape != (n, n):
            raise ValueError(f"Q has shape {Q.shape}, expected {(n, n)}")
        asym = abs(Q - Q.T).max() if Q.size else 0.0
        if asym > 1e-10 * (1.0 + abs(Q).max()):
            raise ValueError("Q must be symmetric")
        A = _as_matrix(self.A, 0, n, "A")
        G = _as_matrix(self.G, 0, n, "G")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", _as_vector(self.b, A.shape[0], "b"))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", _as_vector(self.h, G.shape[0], "h"))

    @property
    def n_var(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A) or sp.issparse(self.G) or sp.issparse(self.Q)

    def with_cost(self, c) -> "QpProblem":
        """Same feasible set and curvature, new linear cost."""
        return replace(self, c=c)

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.Q @ z) + self.c @ z)


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    eq_feasibility: float
    ineq_feasibility: float
    complementarity: float
    scale: float = 1.0  # 1 + largest data magnitude; tolerances are relative to it

    def max(self) -> float:
        return max(self.stationarity, self.eq_feasibility, self.ineq_feasibility, self.complementarity)

    def within(self, tol: float) -> bool:
        return self.max() <= tol * self.scale


@dataclass(frozen=True, eq=False)
class QpSolution:
    z: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    iterations: int
    residuals: KktResiduals
    slack: np.ndarray
    mu_history: tuple = field(default=())
    polished: bool = False

    def active_set(self) -> np.ndarray:
        """Inequalities whose multiplier dominates their slack."""
        return self.lam > self.slack


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _data_scale(p: QpProblem) -> float:
    return 1.0 + max(_inf_norm(p.c), _inf_norm(p.b), _inf_norm(p.h))


def kkt_residuals(problem: QpProblem, z, nu, lam) -> KktResiduals:
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p = problem
    stat = p.Q @ z + p.c + p.A.T @ nu + p.G.T @ lam
    gap = p.G @ z - p.h
    return KktResiduals(
        stationarity=_inf_norm(stat),
        eq_feasibility=_inf_norm(p.A @ z - p.b),
        ineq_feasibility=float(max(np.max(gap, initial=0.0), 0.0)),
        complementarity=_inf_norm(lam * gap),
        scale=_data_scale(p),
    )


# --------------------------------------------------------------------------
# linear algebra helpers


class _Singular(Exception):
    pass


def _kkt_matrix(H, C, delta=0.0):
    """[[H, C^T], [C, -delta I]] in the storage format of H."""
    k = C.shape[0]
    if sp.issparse(H) or sp.issparse(C):
        H = sp.csr_matrix(H)
        if k == 0:
            return H.tocsc()
        lower = -delta * sp.identity(k, format="csr") if delta else None
        return sp.bmat([[H, sp.csr_matrix(C).T], [sp.csr_matrix(C), lower]], format="csc")
    if k == 0:
        return np.array(H, dtype=float)
    return np.block([[H, C.T], [C, -delta * np.eye(k)]])


def _newton_matrix(Q, A, G, D):
    """[[Q, A^T, G^T], [A, 0, 0], [G, 0, -diag(D)]]."""
    if sp.issparse(Q) or sp.issparse(A) or sp.issparse(G):
        Q, A, G = sp.csr_matrix(Q), sp.csr_matrix(A), sp.csr_matrix(G)
        if A.shape[0] == 0:
            return sp.bmat([[Q, G.T], [G, -sp.diags(D)]], format="csc")
        return sp.bmat([[Q, A.T, G.T], [A, None, None], [G, None, -sp.diags(D)]], format="csc")
    n, neq, m = Q.shape[0], A.shape[0], G.shape[0]
    K = np.zeros((n + neq + m, n + neq + m))
    K[:n, :n] = Q
    K[:n, n : n + neq] = A.T
    K[n : n + neq, :n] = A
    K[:n, n + neq :] = G.T
    K[n + neq :, :n] = G
    K[n + neq :, n + neq :] = -np.diag(D)
    return K


def _diagonal_positions(K, start):
    """Indices into ``K.data`` (CSC, sorted) of the diagonal entries from
    ``start`` on; each is the last stored entry of its column because the
    trailing block is diagonal."""
    K.sort_indices()
    pos = K.indptr[start + 1 :] - 1
    if not np.array_equal(K.indices[pos], np.arange(start, K.shape[0])):
        raise AssertionError("unexpected sparsity pattern")
    return pos


class _Factor:
    """LU factorization of a square (dense or sparse) matrix."""

    def __init__(self, K, check=True):
        self.K = K
        self.sparse = sp.issparse(K)
        try:
            if self.sparse:
                # SuperLU can crash outright on structurally singular input
                if structural_rank(sp.csc_matrix(K)) < K.shape[0]:
                    raise _Singular("structurally singular matrix")
                self._lu = spla.splu(sp.csc_matrix(K), permc_spec="MMD_AT_PLUS_A")
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    self._lu = sla.lu_factor(K, check_finite=False)
        except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
            raise _Singular(str(exc)) from exc
        if check and self.rcond() < _RCOND_SINGULAR:
            raise _Singular("reciprocal condition number below threshold")

    def solve(self, rhs):
        if self.sparse:
            out = self._lu.solve(rhs)
        else:
            out = sla.lu_solve(self._lu, rhs, check_finite=False)
        return out

    def rcond(self) -> float:
        K = self.K
        n = K.shape[0]
        if n == 0:
            return 1.0
        if self.sparse:
            anorm = spla.norm(K, 1)
            op = spla.LinearOperator(
                (n, n), matvec=self._lu.solve, rmatvec=lambda v: self._lu.solve(v, trans="T"), dtype=float
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                inv_norm = spla.onenormest(op) if n > 1 else abs(self._lu.solve(np.ones(1))[0])
        else:
            lu, _ = self._lu
            anorm = np.linalg.norm(K, 1)
            gecon = sla.get_lapack_funcs("gecon", (lu,))
            rc, _ = gecon(lu, anorm, norm="1")
            return float(rc) if np.isfinite(rc) else 0.0
        if not np.isfinite(inv_norm) or inv_norm == 0 or anorm == 0:
            return 0.0
        return float(1.0 / (anorm * inv_norm))


def _stack_rows(A, B):
    if sp.issparse(A) or sp.issparse(B):
        return sp.vstack([sp.csr_matrix(A), sp.csr_matrix(B)], format="csr")
    return np.vstack([A, B])


def _damped_solve(Q, C, rhs, delta=DAMPING, refine=3):
    """Solve [[Q, C^T], [C, 0]] x = rhs via the damped matrix plus iterative
    refinement. Tolerates redundant rows in C when the system is consistent."""
    K = _kkt_matrix(Q, C)
    F = _Factor(_kkt_matrix(Q, C, delta), check=False)
    x = F.solve(rhs)
    for _ in range(refine):
        x = x + F.solve(rhs - K @ x)
    return x, K


# --------------------------------------------------------------------------
# solver


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _initial_point(p: QpProblem):
    """Least-squares start: minimize 1/2 z'Qz + c'z + 1/2||Gz - h||^2 s.t. Az = b."""
    GtG = p.G.T @ p.G
    H = p.Q + GtG
    rhs = np.concatenate([-p.c + p.G.T @ p.h, p.b])
    try:
        x = _Factor(_kkt_matrix(H, p.A)).solve(rhs)
    except _Singular:
        x, _ = _damped_solve(H + 1e-8 * (sp.identity(p.n_var) if sp.issparse(H) else np.eye(p.n_var)), p.A, rhs)
    z = x[: p.n_var]
    s = p.h - p.G @ z
    lam = -s.copy()
    a = -np.min(s)
    if a >= 0:
        s = s + 1.0 + a
    a = -np.min(lam)
    if a >= 0:
        lam = lam + 1.0 + a
    return z, s, lam


def _solve_equality_only(p: QpProblem) -> QpSolution:
    rhs = np.concatenate([-p.c, p.b])
    try:
        x = _Factor(_kkt_matrix(p.Q, p.A)).solve(rhs)
    except _Singular as exc:
        raise IllConditioned(f"equality-constrained KKT system is singular: {exc}") from exc
    z, nu = x[: p.n_var], x[p.n_var :]
    lam = np.zeros(0)
    res = kkt_residuals(p, z, nu, lam)
    return QpSolution(z=z, nu=nu, lam=lam, iterations=0, residuals=res, slack=np.zeros(0), polished=True)


def _polish(p: QpProblem, z, nu, s, lam, tol):
    """Re-solve on the active set implied by the iterate.

    The primal point comes from the equality-constrained problem on the
    active set. If its multipliers are not all nonnegative (redundant active
    rows make them non-unique) they are replaced by the smallest correction
    of the iterate's own multipliers that restores stationarity. Returns
    ``(z, nu, lam, residuals)`` if the KKT conditions hold within ``tol``,
    else ``None``.
    """
    act = lam > s
    C = _stack_rows(p.A, p.G[act])
    rhs = np.concatenate([-p.c, p.b, p.h[act]])
    try:
        x, _ = _damped_solve(p.Q, C, rhs)
    except _Singular:
        return None
    if not np.all(np.isfinite(x)):
        return None
    n, neq = p.n_var, p.n_eq
    z_p = x[:n]
    y = x[n:]
    if np.any(y[neq:] < 0):
        y0 = np.concatenate([nu, lam[act]])
        r = -(p.Q @ z_p + p.c) - C.T @ y0
        eye = sp.identity(C.shape[0], format="csr") if sp.issparse(C) else np.eye(C.shape[0])
        try:
            w, _ = _damped_solve(eye, C.T, np.concatenate([np.zeros(C.shape[0]), r]))
        except _Singular:
            return None
        y = y0 + w[: C.shape[0]]
    lam_p = np.zeros(p.n_ineq)
    lam_p[act] = np.maximum(y[neq:], 0.0)
    res = kkt_residuals(p, z_p, y[:neq], lam_p)
    if not (np.all(np.isfinite(y)) and res.within(tol)):
        return None
    return z_p, y[:neq], lam_p, res


def solve(
    problem: QpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start=None,
    polish: bool = True,
) -> QpSolution:
    """Mehrotra predictor-corrector interior-point method.

    Converges when every KKT residual is at most ``tol * (1 + max(|c|, |b|,
    |h|))`` (infinity norms), so the tolerance is relative to the data size.
    ``start`` optionally gives an interior starting triple ``(z, s, lam)``
    with ``s, lam > 0``. Once the residuals fall below ``1e-3`` (relative)
    and the active set implied by the iterate is unchanged for two
    iterations, it is re-solved exactly (``polish``); the polished point is
    accepted only if its KKT residuals are within ``tol``, otherwise the
    iterations continue. The best iterate seen is returned if numerical
    breakdown sets in before convergence.
    """
    p = problem
    if p.n_ineq == 0:
        return _solve_equality_only(p)

    n, neq, m = p.n_var, p.n_eq, p.n_ineq
    Q, c, A, b, G, h = p.Q, p.c, p.A, p.b, p.G, p.h
    sparse = p.is_sparse

    if start is None:
        z, s, lam = _initial_point(p)
    else:
        z, s, lam = (np.array(v, dtype=float) for v in start)
        if np.any(s <= 0) or np.any(lam <= 0):
            raise ValueError("starting slacks and multipliers must be strictly positive")
    nu = np.zeros(neq)

    scale = _data_scale(p)
    Gt = sp.csr_matrix(G).T.tocsr() if sparse else G.T
    if sparse:
        # fixed sparsity pattern; only the slack block changes per iteration
        K = _newton_matrix(Q, A, G, np.ones(m))
        diag_pos = _diagonal_positions(K, n + neq)
    mu_hist = []
    best = None
    res = None
    converged = polished = False
    tried = prev_mask = None
    it = 0
    for it in range(max_iter + 1):
        Gz = G @ z
        rd = Q @ z + c + A.T @ nu + G.T @ lam
        re = A @ z - b
        ri = Gz + s - h
        mu = float(s @ lam) / m
        mu_hist.append(mu)
        gap = Gz - h
        res = KktResiduals(
            stationarity=_inf_norm(rd),
            eq_feasibility=_inf_norm(re),
            ineq_feasibility=float(max(np.max(gap), 0.0)),
            complementarity=_inf_norm(lam * gap),
            scale=scale,
        )
        if not (np.all(np.isfinite(z)) and np.isfinite(mu)):
            break
        if best is None or res.max() < best[0]:
            best = (res.max(), z.copy(), nu.copy(), lam.copy(), s.copy())
        if res.within(tol):
            converged = True
            break
        mask = lam > s
        stable = prev_mask is not None and np.array_equal(mask, prev_mask)
        prev_mask = mask
        if polish and stable and res.max() <= _POLISH_START * scale:
            if tried is None or not np.array_equal(mask, tried):
                tried = mask
                out = _polish(p, z, nu, s, lam, tol)
                if out is not None:
                    z, nu, lam, res = out
                    converged = polished = True
                    break
        if best[0] <= _POLISH_START * scale and res.max() > 1e4 * best[0]:
            break  # numerical breakdown past the attainable accuracy
        if it == max_iter:
            break
        primal = max(res.eq_feasibility, _inf_norm(ri))
        if _inf_norm(lam) > 1e12 * (1.0 + _inf_norm(c)) and primal > 1e-6:
            raise Infeasible(f"multipliers diverge while primal residual stays at {primal:.3e}")

        # unreduced quasi-definite system in (dz, dnu, dlam); forming
        # G' diag(lam / s) G instead loses accuracy on degenerate active sets
        if sparse:
            K.data[diag_pos] = -s / lam
        else:
            K = _newton_matrix(Q, A, G, s / lam)
        try:
            F = _Factor(K, check=False)
        except _Singular as exc:
            raise IllConditioned(f"Newton system singular at iteration {it}: {exc}") from exc

        def unreduced(r1, r2, r3, r4):
            # Q dz + A'dnu + G'dlam = -r1, A dz = -r2, G dz + ds = -r3,
            # lam*ds + s*dlam = -r4, with ds eliminated
            x = F.solve(np.concatenate([-r1, -r2, -r3 + r4 / lam]))
            dz, dnu, dlam = x[:n], x[n : n + neq], x[n + neq :]
            return dz, dnu, dlam, (-r4 - s * dlam) / lam

        def newton(rc):
            d = unreduced(rd, re, ri, rc)
            for _ in range(_REFINE_STEPS):
                dz, dnu, dlam, ds = d
                e = (
                    Q @ dz + A.T @ dnu + Gt @ dlam + rd,
                    A @ dz + re,
                    G @ dz + ds + ri,
                    lam * ds + s * dlam + rc,
                )
                d = tuple(a - b for a, b in zip(d, unreduced(*e)))
            return d

        dz, dnu, dlam, ds = newton(s * lam)
        a_aff = min(_max_step(s, ds), _max_step(lam, dlam))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        rc = s * lam + ds * dlam - sigma * mu
        dz, dnu, dlam, ds = newton(rc)
        if not np.all(np.isfinite(dz)):
            raise IllConditioned(f"non-finite Newton step at iteration {it}")
        a = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(lam, dlam)))
        if it >= 2:
            # keep the complementarity measure from growing once past the start
            for _ in range(30):
                if float((s + a * ds) @ (lam + a * dlam)) / m <= _MU_GROWTH * mu:
                    break
                a *= 0.5
        z = z + a * dz
        nu = nu + a * dnu
        lam = lam + a * dlam
        s = s + a * ds

    if not converged and best is not None:
        _, z, nu, lam, s = best
        res = kkt_residuals(p, z, nu, lam)
        converged = res.within(tol)
    if (
        polish
        and not polished
        and best is not None
        and best[0] <= _POLISH_START * scale
        and (tried is None or not np.array_equal(lam > s, tried))
    ):
        out = _polish(p, z, nu, s, lam, tol)
        if out is not None:
            z, nu, lam, res = out
            converged = polished = True

    if not converged:
        if best is None:
            raise IllConditioned("non-finite iterate")
        primal = max(res.eq_feasibility, res.ineq_feasibility)
        if primal > max(tol, 1e-6) and primal >= 0.5 * max(res.stationarity, res.complementarity):
            raise Infeasible(f"primal residual {primal:.3e} not driven below {tol:g} in {max_iter} iterations")
        raise MaxIterations(f"no convergence in {max_iter} iterations (max residual {res.max():.3e})")

    slack = h - G @ z
    return QpSolution(
        z=z,
        nu=nu,
        lam=lam,
        iterations=it,
        residuals=res,
        slack=slack,
        mu_history=tuple(mu_hist),
        polished=polished,
    )


def differentiate_wrt_cost(problem: QpProblem, solution: QpSolution, upstream) -> np.ndarray:
    """Vector-Jacobian product ``upstream^T dz*/dc``.

    Linearizes the KKT conditions on the active set of ``solution``::

        [Q  C^T] [dz]   [-dc]
        [C   0 ] [dy] = [ 0 ]       C = [A; G_active]

    so ``dz*/dc = -[K^-1]_zz`` (symmetric) and the product is one solve.
    A numerically singular system (redundant active constraints) is retried
    once with damping on the multiplier block before giving up.
    """
    p = problem
    g_up = np.asarray(upstream, dtype=float).reshape(-1)
    if g_up.size != p.n_var:
        raise ValueError(f"upstream has length {g_up.size}, expected {p.n_var}")
    act = solution.active_set() if p.n_ineq else np.zeros(0, dtype=bool)
    C = _stack_rows(p.A, p.G[act]) if p.n_ineq else p.A
    rhs = np.concatenate([g_up, np.zeros(C.shape[0])])
    try:
        x = _Factor(_kkt_matrix(p.Q, C)).solve(rhs)
    except _Singular:
        try:
            x, K = _damped_solve(p.Q, C, rhs)
        except _Singular as exc:
            raise SingularKktSystem(str(exc)) from exc
        r = (rhs - K @ x)[: p.n_var]
        scale = 1.0 + _inf_norm(g_up)
        if not np.all(np.isfinite(x)) or _inf_norm(r) > 1e-6 * scale:
            raise SingularKktSystem("damped KKT system did not resolve the degenerate active set")
    if not np.all(np.isfinite(x)):
        raise SingularKktSystem("non-finite solution of the KKT system")
    return -x[: p.n_var]
