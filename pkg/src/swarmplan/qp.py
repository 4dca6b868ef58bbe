"""Dense strictly convex QP solver (dual active-set method).

Solves
    min  1/2 x' H x + g' x
    s.t. A_eq x  = b_eq
         A_in x <= b_in
with H symmetric positive definite, in the style of Goldfarb and Idnani:
start at the unconstrained minimizer, repeatedly pick a violated constraint
and take the mixed primal-dual step that either activates it or drops a
blocking active constraint. Every iterate is the exact optimum of its
working-set subproblem, so on termination the KKT conditions hold to linear
algebra accuracy and infeasibility is certified by an unbounded dual ray.

The Hessian factorization is reused across solves (the trajectory optimizer
solves many QPs that share H), so the solver is a small class holding the
Cholesky factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


@dataclass
class QpResult:
    status: str  # "optimal" | "infeasible" | "max_iter"
    x: np.ndarray | None = None
    cost: float = np.inf
    iterations: int = 0
    # KKT residuals at the returned point (optimal status only)
    stationarity: float = np.inf
    primal_violation: float = np.inf
    dual_violation: float = np.inf
    comp_gap: float = np.inf
    multipliers_in: np.ndarray | None = None
    multipliers_eq: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class DenseQP:
    """Workspace-holding solver for a family of QPs sharing one Hessian.

    Not thread safe: one instance per concurrent user.
    """

    def __init__(self, H: np.ndarray, feas_tol: float = 1e-9, max_iter: int = 500):
        H = np.asarray(H, dtype=float)
        self.H = (H + H.T) / 2.0
        self.n = H.shape[0]
        self.feas_tol = feas_tol
        self.max_iter = max_iter
        self._chol = cho_factor(self.H, lower=True)

    def _hinv(self, v: np.ndarray) -> np.ndarray:
        return cho_solve(self._chol, v)

    def solve(self, g, A_in=None, b_in=None, A_eq=None, b_eq=None) -> QpResult:
        g = np.asarray(g, dtype=float)
        A_in = np.zeros((0, self.n)) if A_in is None else np.asarray(A_in, dtype=float)
        b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
        A_eq = np.zeros((0, self.n)) if A_eq is None else np.asarray(A_eq, dtype=float)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
        m_in, m_eq = len(b_in), len(b_eq)

        x = self._hinv(-g)
        # working set: parallel lists of (constraint row, rhs, kind, index)
        W_rows: list[np.ndarray] = []
        W_hinv: list[np.ndarray] = []  # cached H^-1 a for each member
        W_kind: list[str] = []  # "eq" | "in"
        W_idx: list[int] = []
        u: list[float] = []
        iters = 0

        def add_constraint(a: np.ndarray, b: float, kind: str, idx: int) -> bool:
            """Drive constraint a'x <= b (violated at x) into the working set.

            Returns False on an infeasibility certificate.
            """
            nonlocal x, iters
            u_incoming = 0.0
            hinv_a = self._hinv(a)
            # curvature along the raw direction; the projected curvature a'z
            # is compared against it to detect degeneracy (a almost inside
            # the span of the active normals)
            a_hinv_a = float(a @ hinv_a)
            while True:
                iters += 1
                if iters > self.max_iter:
                    return False
                if W_rows:
                    N_hinv = np.column_stack(W_hinv)  # H^-1 N
                    N = np.column_stack(W_rows)
                    M = N.T @ N_hinv
                    M = (M + M.T) / 2.0
                    rhs = N.T @ hinv_a
                    try:
                        r = np.linalg.solve(M, rhs)
                    except np.linalg.LinAlgError:
                        r = np.linalg.lstsq(M, rhs, rcond=None)[0]
                    z = hinv_a - N_hinv @ r
                else:
                    r = np.zeros(0)
                    z = hinv_a
                s = float(a @ x) - b
                az = float(a @ z)

                degenerate = az <= 1e-10 * max(a_hinv_a, 1e-300)
                t_primal = s / az if not degenerate else np.inf
                t_dual = np.inf
                k_block = -1
                for k in range(len(W_rows)):
                    if W_kind[k] == "in" and r[k] > 1e-13:
                        tk = u[k] / r[k]
                        if tk < t_dual:
                            t_dual, k_block = tk, k
                t = min(t_primal, t_dual)
                if not np.isfinite(t):
                    return False  # dual ray: no feasible point satisfies a'x <= b

                x = x - t * z
                u_incoming += t
                for k in range(len(u)):
                    u[k] -= t * r[k]
                if t_dual < t_primal:
                    # blocking multiplier hit zero: drop it, keep pushing on a
                    for lst in (W_rows, W_hinv, W_kind, W_idx):
                        del lst[k_block]
                    del u[k_block]
                    continue
                W_rows.append(a)
                W_hinv.append(hinv_a)
                W_kind.append(kind)
                W_idx.append(idx)
                u.append(u_incoming)
                return True

        # equalities first; flip rows violated from below so the step
        # mechanics always push a'x down onto the boundary
        for j in range(m_eq):
            a, b = A_eq[j], float(b_eq[j])
            s = float(a @ x) - b
            if abs(s) <= self.feas_tol:
                a_dir, b_dir = (a, b) if s >= 0 else (-a, -b)
            elif s > 0:
                a_dir, b_dir = a, b
            else:
                a_dir, b_dir = -a, -b
            if not add_constraint(a_dir, b_dir, "eq", j):
                status = "max_iter" if iters > self.max_iter else "infeasible"
                return QpResult(status, iterations=iters)

        while True:
            if iters > self.max_iter:
                return QpResult("max_iter", iterations=iters)
            viol = A_in @ x - b_in if m_in else np.zeros(0)
            p = int(np.argmax(viol)) if m_in else -1
            if m_in == 0 or viol[p] <= self.feas_tol:
                break
            if not add_constraint(A_in[p], float(b_in[p]), "in", p):
                status = "max_iter" if iters > self.max_iter else "infeasible"
                return QpResult(status, iterations=iters)

        return self._finish(x, g, A_in, b_in, A_eq, b_eq, W_kind, W_idx, u, iters)

    def _finish(self, x, g, A_in, b_in, A_eq, b_eq, W_kind, W_idx, u, iters) -> QpResult:
        lam_in = np.zeros(len(b_in))
        for kind, idx, ui in zip(W_kind, W_idx, u):
            if kind == "in":
                lam_in[idx] += ui
        grad = self.H @ x + g
        if len(b_in):
            grad = grad + A_in.T @ lam_in
        lam_eq = np.zeros(len(b_eq))
        if len(b_eq):
            # signed equality multipliers straight from stationarity
            lam_eq, *_ = np.linalg.lstsq(A_eq.T, -grad, rcond=None)
            grad = grad + A_eq.T @ lam_eq
        stationarity = float(np.max(np.abs(grad))) if grad.size else 0.0
        primal = 0.0
        if len(b_in):
            primal = max(primal, float(np.max(A_in @ x - b_in)))
        if len(b_eq):
            primal = max(primal, float(np.max(np.abs(A_eq @ x - b_eq))))
        dual = float(-np.min(lam_in)) if len(b_in) else 0.0
        comp = float(np.abs(lam_in @ (A_in @ x - b_in))) if len(b_in) else 0.0
        cost = float(0.5 * x @ self.H @ x + g @ x)
        return QpResult("optimal", x=x, cost=cost, iterations=iters,
                        stationarity=stationarity, primal_violation=max(primal, 0.0),
                        dual_violation=max(dual, 0.0), comp_gap=comp,
                        multipliers_in=lam_in, multipliers_eq=lam_eq)
