"""TV-regularized convex decoders and their primal-dual solver stack.

All three decoders minimize an l1 norm of finite differences subject to a
box constraint on running sums of the reconstruction error:

  class1_col   min ||(D^b)^T z||_1   s.t. ||D^-r (z - q)||_inf <= delta/2
  class2_2d    min ||D^T Z||_1 + ||Z D||_1
                                     s.t. ||D^-1 (Z - q) D^-T||_max <= delta/2
  class3_col   min ||D_1^b z||_1     s.t. the class-1 box, plus a much tighter
                                     box on the last r running sums

Solving in z directly is hopeless because D^{b+r} is terribly conditioned, so
everything is rewritten in the variable x = D^-r (z - q) (the state of the
encoder).  The constraint becomes a plain box on x and the ill-conditioned
matrix moves inside a proximal subproblem:

  y-step   soft-threshold (closed form)
  x-step   prox of tau * ||A x + c||_1 + 1/2 ||x - v||^2, solved by a few
           ADMM sweeps whose ridge system (I + rho A^T A) is banded and
           factorized once
  extrapolation step

The 2D x-step is a generalized Sylvester equation that diagonalizes in the
eigenbasis of the tridiagonal matrix D^T D, which reduces it to an
entrywise division.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "SolverConfig",
    "DecodeProblem",
    "DecodeResult",
    "SolverDivergenceError",
    "load_solver_config",
    "decode_naive",
    "decode_class1_column",
    "decode_class1_columns",
    "decode_class2",
    "decode_class3_column",
    "decode_class3_columns",
    "solve_primal_dual",
    "solve_admm_subproblem",
]


class SolverDivergenceError(RuntimeError):
    """Residuals grew for many consecutive iterations; the run was aborted."""


@dataclass
class SolverConfig:
    # admm_rho = 300 keeps the inner prox accurate enough for the outer loop
    # to reach tol 1e-7 within a few thousand iterations; with rho near 1 the
    # outer residual plateaus two orders higher on column problems.
    tau: float = 0.99
    sigma: float = 0.99
    theta: float = 1.0
    outer_tol: float = 1e-7
    outer_max_iters: int = 100_000
    admm_rho: float = 300.0
    admm_iters: int = 10
    feasibility_tol: float = 1e-6

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("step sizes must be positive")
        if self.tau * self.sigma >= 1.0:
            raise ValueError("need tau*sigma < 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")


_CONFIG_FIELDS = {
    "tau": float,
    "sigma": float,
    "theta": float,
    "outer_tol": float,
    "outer_max_iters": int,
    "admm_rho": float,
    "admm_iters": int,
    "feasibility_tol": float,
}


def load_solver_config(path, base: SolverConfig | None = None) -> SolverConfig:
    """Read ``key = value`` lines into a SolverConfig; '#' starts a comment."""
    cfg = base if base is not None else SolverConfig()
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown solver option {key!r}")
            overrides[key] = _CONFIG_FIELDS[key](value)
    return replace(cfg, **overrides)


@dataclass
class DecodeProblem:
    """One convex program instance, in the encoder-state variable."""

    q: np.ndarray
    beta: int
    r: int
    delta: float
    klass: str  # class1_col | class2_2d | class3_col
    n: int
    boundary_bound: float | None = None
    experimental: bool = False  # unlock 2D orders beyond beta = r = 1

    def __post_init__(self):
        if self.klass in ("class1_col", "class3_col") and self.r < self.beta:
            raise ValueError("column decoders need constraint order r >= beta")
        if self.klass == "class3_col" and self.boundary_bound is None:
            self.boundary_bound = (1.0 / (2.0 * self.n)) ** self.r * self.delta


@dataclass
class DecodeResult:
    x_hat: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    feasible: bool
    constraint_slack: float
    converged: bool = True
    residual_history: np.ndarray | None = None


def decode_naive(q):
    """The trivial feasible point: return the dequantized levels themselves."""
    return np.asarray(q, dtype=float).copy()


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# ---------------------------------------------------------------------------
# column problems (classes 1 and 3)
# ---------------------------------------------------------------------------

_COLUMN_OPS_CACHE: dict = {}


def _sparse_forward_diff(n):
    return sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], format="csr")


def _sparse_circulant_diff(n):
    d = _sparse_forward_diff(n).tolil()
    d[0, n - 1] = -1.0
    return d.tocsr()


def _column_ops(n, beta, r, circulant, rho):
    """Objective matrix B, composite A = B D^r, and the factorized ridge."""
    key = (n, beta, r, bool(circulant), float(rho))
    hit = _COLUMN_OPS_CACHE.get(key)
    if hit is not None:
        return hit
    d = _sparse_forward_diff(n)
    if circulant:
        b = _sparse_circulant_diff(n) ** beta
    else:
        b = (d.T) ** beta
    a = (b @ d**r).tocsr()
    ridge = (sp.identity(n, format="csc") + rho * (a.T @ a)).tocsc()
    ops = (b.tocsr(), a, a.T.tocsr(), spla.splu(ridge))
    _COLUMN_OPS_CACHE[key] = ops
    return ops


def _admm_prox_sweeps(v, cvec, a, at, lu, w, s, tau, rho, iters):
    """ADMM sweeps for min_x tau ||A x + c||_1 + 1/2 ||x - v||^2.

    ``w`` and ``s`` are the split variable and scaled dual, warm-started and
    mutated in place across calls.
    """
    x = v
    for _ in range(iters):
        rhs = v + rho * (at @ (w - cvec - s))
        x = lu.solve(rhs)
        ax = a @ x
        np.copyto(w, _soft(ax + cvec + s, tau / rho))
        s += ax + cvec - w
    return x


def _cp_columns(q2d, bounds, beta, r, delta, circulant, cfg, record=False):
    """Chambolle-Pock loop for a batch of independent column problems.

    ``q2d`` is (N, k); ``bounds`` is the per-entry box radius, shape (N, 1).
    Returns the state variable x (N, k) plus solver statistics.
    """
    n, k = q2d.shape
    b, a, at, lu = _column_ops(n, beta, r, circulant, cfg.admm_rho)
    cvec = np.asarray(b @ q2d)
    tau, sigma, theta, rho = cfg.tau, cfg.sigma, cfg.theta, cfg.admm_rho

    x = np.zeros((n, k))
    y = np.zeros((n, k))
    xbar = x.copy()
    w = cvec.copy()
    s = np.zeros((n, k))

    history = [] if record else None
    sig_bounds = sigma * bounds
    best = np.inf
    grew = 0
    p_res = d_res = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.outer_max_iters + 1):
        y_new = _soft(y + sigma * xbar, sig_bounds)
        v = x - tau * y_new
        x_new = _admm_prox_sweeps(
            v, cvec, a, at, lu, w, s, tau, rho, cfg.admm_iters
        )
        p_res = float(np.max(np.abs(xbar - x_new + (y - y_new) / sigma)))
        d_res = float(np.max(np.abs(x - x_new))) / tau
        xbar = x_new + theta * (x_new - x)
        x, y = x_new, y_new
        scale = 1.0 + max(float(np.max(np.abs(x))), float(np.max(np.abs(y))))
        res = max(p_res, d_res) / scale
        if history is not None:
            history.append(res)
        if res < cfg.outer_tol:
            converged = True
            break
        if res > best:
            grew += 1
            if grew >= 50 and res > 1e3 * best:
                raise SolverDivergenceError(
                    f"residual grew for {grew} consecutive iterations "
                    f"(now {res:.3g}, best {best:.3g})"
                )
        else:
            grew = 0
            best = res
    x = np.clip(x, -bounds, bounds)
    hist = np.asarray(history) if history is not None else None
    return x, p_res, d_res, it, converged, hist


def _column_objective(z2d, beta, circulant):
    n = z2d.shape[0]
    b, _, _, _ = _column_ops(n, beta, 1, circulant, 1.0)
    # the cached entry for r=1 carries the right objective matrix B
    return np.sum(np.abs(np.asarray(b @ z2d)), axis=0)


def _cumsum_r(x2d, r):
    for _ in range(r):
        x2d = np.cumsum(x2d, axis=0)
    return x2d


def _diff_r(x2d, r):
    zero = np.zeros((1, x2d.shape[1]))
    for _ in range(r):
        x2d = np.diff(x2d, axis=0, prepend=zero)
    return x2d


def _finish_columns(q2d, x, bounds, beta, r, circulant, cfg, stats):
    p_res, d_res, iters, converged, hist = stats
    z = _diff_r(x, r) + q2d
    obj = _column_objective(z, beta, circulant)
    xrec = _cumsum_r(z - q2d, r)
    slack = np.max(np.maximum(np.abs(xrec) - bounds, 0.0), axis=0)
    feas = slack <= cfg.feasibility_tol
    return z, obj, slack, feas, p_res, d_res, iters, converged, hist


def _column_result(z, obj, slack, feas, p, d, iters, conv, hist, col=0):
    return DecodeResult(
        x_hat=z[:, col],
        objective=float(obj[col]),
        primal_residual=p,
        dual_residual=d,
        iterations=iters,
        feasible=bool(feas[col]),
        constraint_slack=float(slack[col]),
        converged=conv,
        residual_history=hist,
    )


def decode_class1_column(q, beta=1, r=1, delta=None, cfg=None, record=False):
    """Reconstruct one column from its adaptive quantization.

    ``delta`` is the alphabet step; the result is guaranteed feasible (the
    state variable is clamped to the box before mapping back).
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise ValueError("expected a vector; use decode_class1_columns")
    zs, results = decode_class1_columns(q[:, None], beta, r, delta, cfg, record)
    return results[0]


def decode_class1_columns(Q, beta=1, r=1, delta=None, cfg=None, record=False):
    """Batch variant: every column of ``Q`` is an independent problem."""
    if delta is None:
        raise ValueError("delta (alphabet step) is required")
    cfg = cfg if cfg is not None else SolverConfig()
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if r < beta:
        raise ValueError("need r >= beta")
    bounds = np.full((n, 1), delta / 2.0)
    x, *stats = _cp_columns(Q, bounds, beta, r, delta, False, cfg, record)
    z, obj, slack, feas, p, d, iters, conv, hist = _finish_columns(
        Q, x, bounds, beta, r, False, cfg, stats
    )
    results = [
        _column_result(z, obj, slack, feas, p, d, iters, conv, hist, j)
        for j in range(Q.shape[1])
    ]
    return z, results


def decode_class3_column(
    q, beta=1, r=2, delta=None, boundary_bound=None, cfg=None, record=False
):
    """Class-3 decoder: circulant TV objective plus the tight boundary box."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise ValueError("expected a vector; use decode_class3_columns")
    zs, results = decode_class3_columns(
        q[:, None], beta, r, delta, boundary_bound, cfg, record
    )
    return results[0]


def decode_class3_columns(
    Q, beta=1, r=2, delta=None, boundary_bound=None, cfg=None, record=False
):
    if delta is None:
        raise ValueError("delta (alphabet step) is required")
    cfg = cfg if cfg is not None else SolverConfig()
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if r < beta:
        raise ValueError("need r >= beta")
    if boundary_bound is None:
        boundary_bound = (1.0 / (2.0 * n)) ** r * delta
    bounds = np.full((n, 1), delta / 2.0)
    bounds[n - r :] = boundary_bound
    x, *stats = _cp_columns(Q, bounds, beta, r, delta, True, cfg, record)
    z, obj, slack, feas, p, d, iters, conv, hist = _finish_columns(
        Q, x, bounds, beta, r, True, cfg, stats
    )
    results = [
        _column_result(z, obj, slack, feas, p, d, iters, conv, hist, j)
        for j in range(Q.shape[1])
    ]
    return z, results


def solve_admm_subproblem(v, q, beta, r, tau, cfg=None, circulant_tv=False):
    """Prox of tau * ||(D^b)^T D^r x + (D^b)^T q||_1 at v, by ADMM sweeps.

    With ``circulant_tv`` the objective difference is the circulant one (the
    class-3 flavor).  tau = 0 short-circuits to v.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    v = np.asarray(v, dtype=float)
    if tau == 0.0:
        return v.copy()
    squeeze = v.ndim == 1
    v2 = v[:, None] if squeeze else v
    q2 = np.asarray(q, dtype=float)
    q2 = q2[:, None] if q2.ndim == 1 else q2
    n = v2.shape[0]
    b, a, at, lu = _column_ops(n, beta, r, circulant_tv, cfg.admm_rho)
    cvec = np.asarray(b @ q2)
    w = cvec.copy()
    s = np.zeros_like(v2)
    try:
        x = _admm_prox_sweeps(
            v2, cvec, a, at, lu, w, s, tau, cfg.admm_rho, cfg.admm_iters
        )
    except RuntimeError as exc:  # factorization failure surfaces conditioning
        raise RuntimeError(
            f"inner ridge solve failed for N={n}, beta={beta}, r={r}: {exc}"
        ) from exc
    return x[:, 0] if squeeze else x


# ---------------------------------------------------------------------------
# the 2D problem (class 2)
# ---------------------------------------------------------------------------

_EIG_CACHE: dict = {}


def _dtd_eig(n):
    """Eigendecomposition of the tridiagonal D^T D (diag 2..2,1, off -1)."""
    hit = _EIG_CACHE.get(n)
    if hit is None:
        diag = np.full(n, 2.0)
        diag[-1] = 1.0
        off = np.full(n - 1, -1.0)
        lam, u = eigh_tridiagonal(diag, off)
        hit = (lam, u)
        _EIG_CACHE[n] = hit
    return hit


def _dn(x):  # D X          (vertical forward difference)
    return np.diff(x, axis=-2, prepend=0.0)


def _dnt(x):  # D^T X
    return -np.diff(x, axis=-2, append=0.0)


def _dmt_right(x):  # X D^T      (horizontal forward difference)
    return np.diff(x, axis=-1, prepend=0.0)


def _dm_right(x):  # X D
    return -np.diff(x, axis=-1, append=0.0)


def _kn(x):  # D^T D X
    return _dnt(_dn(x))


def _km_right(x):  # X D^T D
    return _dm_right(_dmt_right(x))


def _diff_pow(x, k, fn):
    for _ in range(k):
        x = fn(x)
    return x


def _make_2d_operators(beta, r, rho, n, m):
    """Split operators A1, A2, their adjoints, and a ridge solver.

    For beta = r = 1 the ridge (I + rho (A1^T A1 + A2^T A2)) diagonalizes in
    the eigenbases of the two tridiagonal D^T D matrices; for the
    experimental general orders it is solved by conjugate gradients with the
    same stencil operators.
    """

    def a1(xx):  # (D^b)^T D^r X (D^r)^T
        return _diff_pow(_diff_pow(_diff_pow(xx, r, _dn), beta, _dnt), r, _dmt_right)

    def a1t(ww):
        return _diff_pow(_diff_pow(_diff_pow(ww, beta, _dn), r, _dnt), r, _dm_right)

    def a2(xx):  # D^r X (D^r)^T D^b
        return _diff_pow(_diff_pow(_diff_pow(xx, r, _dn), r, _dmt_right), beta, _dm_right)

    def a2t(ww):
        return _diff_pow(_diff_pow(_diff_pow(ww, r, _dnt), r, _dm_right), beta, _dmt_right)

    def c1_of(qs):  # (D^b)^T q
        return _diff_pow(qs, beta, _dnt)

    def c2_of(qs):  # q D^b
        return _diff_pow(qs, beta, _dm_right)

    if beta == 1 and r == 1:
        lam_n, u_n = _dtd_eig(n)
        lam_m, u_m = _dtd_eig(m)
        denom = 1.0 + rho * (
            np.square(lam_n)[:, None] * lam_m[None, :]
            + lam_n[:, None] * np.square(lam_m)[None, :]
        )

        def ridge_solve(rhs):
            t = u_n.T @ rhs @ u_m
            t /= denom
            return u_n @ t @ u_m.T

    else:

        def ridge_op(xx):
            return xx + rho * (a1t(a1(xx)) + a2t(a2(xx)))

        def ridge_solve(rhs, tol=1e-12, max_iter=400):
            # plain CG; the +I term keeps the system well conditioned
            xx = np.zeros_like(rhs)
            res = rhs - ridge_op(xx)
            p = res.copy()
            rs = np.sum(res * res)
            thresh = tol * max(np.sum(rhs * rhs), 1e-300)
            for _ in range(max_iter):
                ap = ridge_op(p)
                alpha = rs / np.sum(p * ap)
                xx += alpha * p
                res -= alpha * ap
                rs_new = np.sum(res * res)
                if rs_new < thresh:
                    break
                p = res + (rs_new / rs) * p
                rs = rs_new
            return xx

    return a1, a1t, a2, a2t, c1_of, c2_of, ridge_solve


def _cp_2d(qs, delta, cfg, beta=1, r=1, record=False):
    """Primal-dual loop for a batch of 2D patch problems of shape (P, n, m)."""
    p, n, m = qs.shape
    rho = cfg.admm_rho
    a1, a1t, a2, a2t, c1_of, c2_of, ridge_solve = _make_2d_operators(
        beta, r, rho, n, m
    )
    c1 = c1_of(qs)
    c2 = c2_of(qs)
    tau, sigma, theta = cfg.tau, cfg.sigma, cfg.theta
    bound = delta / 2.0

    x = np.zeros_like(qs)
    y = np.zeros_like(qs)
    xbar = x.copy()
    w1 = c1.copy()
    w2 = c2.copy()
    s1 = np.zeros_like(qs)
    s2 = np.zeros_like(qs)

    history = [] if record else None
    best = np.inf
    grew = 0
    p_res = d_res = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.outer_max_iters + 1):
        y_new = _soft(y + sigma * xbar, sigma * bound)
        v = x - tau * y_new
        xx = v
        for _ in range(cfg.admm_iters):
            rhs = v + rho * (a1t(w1 - c1 - s1) + a2t(w2 - c2 - s2))
            xx = ridge_solve(rhs)
            z1 = a1(xx)
            z2 = a2(xx)
            np.copyto(w1, _soft(z1 + c1 + s1, tau / rho))
            np.copyto(w2, _soft(z2 + c2 + s2, tau / rho))
            s1 += z1 + c1 - w1
            s2 += z2 + c2 - w2
        x_new = xx
        p_res = float(np.max(np.abs(xbar - x_new + (y - y_new) / sigma)))
        d_res = float(np.max(np.abs(x - x_new))) / tau
        xbar = x_new + theta * (x_new - x)
        x, y = x_new, y_new
        scale = 1.0 + max(float(np.max(np.abs(x))), float(np.max(np.abs(y))))
        res = max(p_res, d_res) / scale
        if history is not None:
            history.append(res)
        if res < cfg.outer_tol:
            converged = True
            break
        if res > best:
            grew += 1
            if grew >= 50 and res > 1e3 * best:
                raise SolverDivergenceError(
                    f"residual grew for {grew} consecutive iterations "
                    f"(now {res:.3g}, best {best:.3g})"
                )
        else:
            grew = 0
            best = res
    x = np.clip(x, -bound, bound)
    hist = np.asarray(history) if history is not None else None
    return x, p_res, d_res, it, converged, hist


def decode_class2(q, delta=None, cfg=None, beta=1, r=1, experimental=False,
                  record=False):
    """Reconstruct a patch quantized by the 2D scheme.

    The supported scope is beta = r = 1; higher orders run only with
    ``experimental=True`` (same iteration, conjugate-gradient ridge solve).
    """
    if delta is None:
        raise ValueError("delta (alphabet step) is required")
    if (beta != 1 or r != 1) and not experimental:
        raise NotImplementedError(
            "the 2D decoder's supported scope is beta = r = 1; pass "
            "experimental=True to run other orders anyway"
        )
    cfg = cfg if cfg is not None else SolverConfig()
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise ValueError("expected a 2D patch")
    _, results = decode_class2_batch(q[None, :, :], delta, cfg, beta, r, record)
    return results[0]


def decode_class2_batch(qs, delta, cfg=None, beta=1, r=1, record=False):
    """Decode a stack of equally sized 2D patches in lockstep."""
    cfg = cfg if cfg is not None else SolverConfig()
    qs = np.asarray(qs, dtype=float)
    x, p_res, d_res, iters, conv, hist = _cp_2d(qs, delta, cfg, beta, r, record)
    z = _diff_pow(_diff_pow(x, r, _dn), r, _dmt_right) + qs
    obj = np.sum(np.abs(_diff_pow(z, beta, _dnt)), axis=(-2, -1)) + np.sum(
        np.abs(_diff_pow(z, beta, _dm_right)), axis=(-2, -1)
    )
    xrec = z - qs
    for _ in range(r):
        xrec = np.cumsum(xrec, axis=-2)
    for _ in range(r):
        xrec = np.cumsum(xrec, axis=-1)
    slack = np.maximum(np.max(np.abs(xrec), axis=(-2, -1)) - delta / 2.0, 0.0)
    feas = slack <= cfg.feasibility_tol
    results = [
        DecodeResult(
            x_hat=z[i],
            objective=float(obj[i]),
            primal_residual=p_res,
            dual_residual=d_res,
            iterations=iters,
            feasible=bool(feas[i]),
            constraint_slack=float(slack[i]),
            converged=conv,
            residual_history=hist,
        )
        for i in range(qs.shape[0])
    ]
    return z, results


def solve_primal_dual(problem: DecodeProblem, cfg: SolverConfig | None = None,
                      record=False) -> DecodeResult:
    """Solve one DecodeProblem with the primal-dual stack."""
    cfg = cfg if cfg is not None else SolverConfig()
    if problem.klass == "class1_col":
        return decode_class1_column(
            problem.q, problem.beta, problem.r, problem.delta, cfg, record
        )
    if problem.klass == "class3_col":
        return decode_class3_column(
            problem.q,
            problem.beta,
            problem.r,
            problem.delta,
            problem.boundary_bound,
            cfg,
            record,
        )
    if problem.klass == "class2_2d":
        return decode_class2(
            problem.q,
            problem.delta,
            cfg,
            problem.beta,
            problem.r,
            problem.experimental,
            record,
        )
    raise ValueError(f"unknown problem class {problem.klass!r}")
