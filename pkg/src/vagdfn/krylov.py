"""Preconditioned Krylov solvers (CG, GMRES without restart, BiCGStab).

The solvers only talk to a :class:`VectorSpace`: mat-vec, inner product and
preconditioner application on (possibly distributed) vectors.  The parallel
engine provides a space whose inner products are global reductions, so the
same code runs sequentially and on every worker.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import ConvergenceError, InvalidParameterError, SingularSystemError

METHODS = ("cg", "gmres", "bicgstab", "direct")
PRECONDITIONERS = ("none", "jacobi", "ilu0")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "cg"
    preconditioner: str = "jacobi"
    tolerance: float = 1e-10
    max_iterations: int = 5000

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise InvalidParameterError(f"unknown preconditioner {self.preconditioner!r}")
        if not self.tolerance > 0.0:
            raise InvalidParameterError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be at least 1")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


# ------------------------------------------------------------ exact sums
@njit(cache=True, nogil=True)
def _split(a):
    c = 134217729.0 * a  # 2**27 + 1
    hi = c - (c - a)
    return hi, a - hi


@njit(cache=True, nogil=True)
def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True, nogil=True)
def _grow(partials, n, x):
    """Add ``x`` to the non-overlapping expansion ``partials[:n]`` exactly."""
    i = 0
    for j in range(n):
        y = partials[j]
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo != 0.0:
            partials[i] = lo
            i += 1
        x = hi
    partials[i] = x
    return i + 1


@njit(cache=True, nogil=True)
def dot_partials(x, y):
    """Non-overlapping partials whose exact sum is ``x . y``.

    Products are split exactly (Dekker) and accumulated into a Shewchuk
    expansion, so the result carries no rounding at all.
    """
    partials = np.empty(256)
    n = 0
    for k in range(len(x)):
        p, e = _two_prod(x[k], y[k])
        if not math.isfinite(p):
            partials[0] = p
            return partials[:1].copy()
        n = _grow(partials, n, p)
        if e != 0.0:
            n = _grow(partials, n, e)
        if n > 200:
            # compress: re-add the partials into a fresh expansion
            tmp = partials[:n].copy()
            n = 0
            for v in tmp:
                n = _grow(partials, n, v)
    return partials[:n].copy()


def exact_dot(x, y) -> float:
    """Correctly rounded inner product, independent of summation order."""
    return math.fsum(dot_partials(np.ascontiguousarray(x, float), np.ascontiguousarray(y, float)))


# ---------------------------------------------------------------- kernels
@njit(cache=True, nogil=True)
def csr_matvec(ptr, idx, val, x, out):
    for i in range(len(ptr) - 1):
        acc = 0.0
        for p in range(ptr[i], ptr[i + 1]):
            acc += val[p] * x[idx[p]]
        out[i] = acc


@njit(cache=True, nogil=True)
def _ilu0(ptr, idx, val, diag_pos):
    """In-place ILU(0) of a CSR matrix with sorted column indices."""
    n = len(ptr) - 1
    lu = val.copy()
    marker = -np.ones(n, np.int64)
    for i in range(n):
        for p in range(ptr[i], ptr[i + 1]):
            marker[idx[p]] = p
        for p in range(ptr[i], diag_pos[i]):
            k = idx[p]
            if lu[diag_pos[k]] == 0.0:
                return lu, k
            lu[p] /= lu[diag_pos[k]]
            lik = lu[p]
            for q in range(diag_pos[k] + 1, ptr[k + 1]):
                tgt = marker[idx[q]]
                if tgt >= 0:
                    lu[tgt] -= lik * lu[q]
        for p in range(ptr[i], ptr[i + 1]):
            marker[idx[p]] = -1
        if lu[diag_pos[i]] == 0.0:
            return lu, i
    return lu, -1


@njit(cache=True, nogil=True)
def _ilu_solve(ptr, idx, lu, diag_pos, r, out):
    n = len(ptr) - 1
    for i in range(n):
        acc = r[i]
        for p in range(ptr[i], diag_pos[i]):
            acc -= lu[p] * out[idx[p]]
        out[i] = acc
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for p in range(diag_pos[i] + 1, ptr[i + 1]):
            acc -= lu[p] * out[idx[p]]
        out[i] = acc / lu[diag_pos[i]]


def _sorted_csr(a) -> sp.csr_matrix:
    a = sp.csr_matrix(a)
    a.sum_duplicates()
    a.sort_indices()
    return a


def _diag_positions(a: sp.csr_matrix) -> np.ndarray:
    n = a.shape[0]
    pos = np.full(n, -1, dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(a.indptr))
    hit = a.indices == rows
    pos[rows[hit]] = np.flatnonzero(hit)
    if np.any(pos < 0):
        raise SingularSystemError("matrix has a structurally zero diagonal entry")
    return pos


class Preconditioner:
    def apply(self, r: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class Identity(Preconditioner):
    def apply(self, r):
        return r.copy()


class Jacobi(Preconditioner):
    def __init__(self, diag):
        diag = np.asarray(diag, float)
        if np.any(diag == 0.0):
            raise SingularSystemError("zero diagonal entry in Jacobi preconditioner")
        self.inv = 1.0 / diag

    def apply(self, r):
        return self.inv * r


class ILU0(Preconditioner):
    """Incomplete LU with the sparsity pattern of the matrix, natural order."""

    def __init__(self, a):
        a = _sorted_csr(a)
        if a.shape[0] != a.shape[1]:
            raise InvalidParameterError("ILU(0) needs a square matrix")
        self.ptr = a.indptr.astype(np.int64)
        self.idx = a.indices.astype(np.int64)
        self.diag = _diag_positions(a)
        self.lu, bad = _ilu0(self.ptr, self.idx, a.data.astype(float), self.diag)
        if bad >= 0:
            raise SingularSystemError(f"zero pivot in ILU(0) at row {bad}")

    def apply(self, r):
        out = np.empty_like(r)
        _ilu_solve(self.ptr, self.idx, self.lu, self.diag, np.ascontiguousarray(r, float), out)
        return out


def make_preconditioner(name: str, a) -> Preconditioner:
    if name == "none":
        return Identity()
    if name == "jacobi":
        return Jacobi(sp.csr_matrix(a).diagonal())
    if name == "ilu0":
        return ILU0(a)
    raise InvalidParameterError(f"unknown preconditioner {name!r}")


# ------------------------------------------------------------------ spaces
class VectorSpace:
    """Sequential vector space over a square CSR matrix."""

    def __init__(self, a, preconditioner: str = "none", deterministic: bool = True):
        a = _sorted_csr(a)
        self.a = a
        self._ptr = a.indptr.astype(np.int64)
        self._idx = a.indices.astype(np.int64)
        self._val = a.data.astype(float)
        self.n = a.shape[0]
        self.deterministic = deterministic
        self.precond = make_preconditioner(preconditioner, a)

    def matvec(self, x):
        out = np.empty(self.n)
        csr_matvec(self._ptr, self._idx, self._val, np.ascontiguousarray(x, float), out)
        return out

    def dot(self, x, y) -> float:
        if self.deterministic:
            return exact_dot(x, y)
        return float(np.dot(x, y))

    def norm(self, x) -> float:
        return math.sqrt(max(self.dot(x, x), 0.0))

    def apply_precond(self, r):
        return self.precond.apply(r)

    def zeros(self):
        return np.zeros(self.n)

    def dots(self, pairs):
        """Several inner products (one reduction in distributed spaces)."""
        return [self.dot(x, y) for x, y in pairs]


# ----------------------------------------------------------------- solvers
def _check_done(space, b, x, tol, bnorm):
    r = b - space.matvec(x)
    return r, space.norm(r) / bnorm


def cg(space, b, x0=None, tol=1e-10, max_iter=5000) -> SolveResult:
    x = space.zeros() if x0 is None else np.array(x0, float)
    bnorm = space.norm(b)
    if bnorm == 0.0:
        return SolveResult(space.zeros(), 0, 0.0, [0.0])
    r = b - space.matvec(x)
    res = space.norm(r) / bnorm
    history = [res]
    if res <= tol:
        return SolveResult(x, 0, res, history)
    z = space.apply_precond(r)
    p = z.copy()
    rz = space.dot(r, z)
    for it in range(1, max_iter + 1):
        ap = space.matvec(p)
        pap = space.dot(p, ap)
        if pap <= 0.0 or not math.isfinite(pap):
            raise ConvergenceError("CG breakdown: matrix is not positive definite", history)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = space.norm(r) / bnorm
        history.append(res)
        if res <= tol:
            r, true_res = _check_done(space, b, x, tol, bnorm)
            if true_res <= tol:
                history[-1] = true_res
                return SolveResult(x, it, true_res, history)
            # residual replacement and restart of the search direction
            z = space.apply_precond(r)
            p = z.copy()
            rz = space.dot(r, z)
            continue
        z = space.apply_precond(r)
        rz_new = space.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations (residual {res:.3e})", history)


def bicgstab(space, b, x0=None, tol=1e-10, max_iter=5000) -> SolveResult:
    """Right-preconditioned BiCGStab."""
    x = space.zeros() if x0 is None else np.array(x0, float)
    bnorm = space.norm(b)
    if bnorm == 0.0:
        return SolveResult(space.zeros(), 0, 0.0, [0.0])
    r = b - space.matvec(x)
    res = space.norm(r) / bnorm
    history = [res]
    if res <= tol:
        return SolveResult(x, 0, res, history)
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = space.zeros()
    p = space.zeros()
    for it in range(1, max_iter + 1):
        rho_new = space.dot(r_hat, r)
        if rho_new == 0.0:
            r_hat = r.copy()
            rho_new = space.dot(r_hat, r)
            p = space.zeros()
            v = space.zeros()
            rho = alpha = omega = 1.0
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        ph = space.apply_precond(p)
        v = space.matvec(ph)
        denom = space.dot(r_hat, v)
        if denom == 0.0:
            raise ConvergenceError("BiCGStab breakdown", history)
        alpha = rho / denom
        s = r - alpha * v
        x += alpha * ph
        res = space.norm(s) / bnorm
        if res <= tol:
            r, true_res = _check_done(space, b, x, tol, bnorm)
            history.append(true_res)
            if true_res <= tol:
                return SolveResult(x, it, true_res, history)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v = space.zeros()
            p = space.zeros()
            continue
        sh = space.apply_precond(s)
        t = space.matvec(sh)
        tt, ts = space.dots([(t, t), (t, s)])
        omega = ts / tt if tt > 0.0 else 0.0
        x += omega * sh
        r = s - omega * t
        res = space.norm(r) / bnorm
        history.append(res)
        if res <= tol:
            r, true_res = _check_done(space, b, x, tol, bnorm)
            if true_res <= tol:
                history[-1] = true_res
                return SolveResult(x, it, true_res, history)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v = space.zeros()
            p = space.zeros()
        elif omega == 0.0:
            raise ConvergenceError("BiCGStab stagnation (omega = 0)", history)
    raise ConvergenceError(f"BiCGStab did not converge in {max_iter} iterations (residual {res:.3e})", history)


def gmres(space, b, x0=None, tol=1e-10, max_iter=5000) -> SolveResult:
    """Right-preconditioned GMRES without restart (modified Gram-Schmidt).

    The Krylov basis grows until convergence or ``max_iter``.  Should the
    recurrence residual and the true residual disagree at convergence, the
    cycle is resumed from the true residual.
    """
    x = space.zeros() if x0 is None else np.array(x0, float)
    bnorm = space.norm(b)
    if bnorm == 0.0:
        return SolveResult(space.zeros(), 0, 0.0, [0.0])
    r = b - space.matvec(x)
    beta = space.norm(r)
    history = [beta / bnorm]
    if history[0] <= tol:
        return SolveResult(x, 0, history[0], history)
    total = 0
    while True:
        basis, zs, cols, cs, sn = [r / beta], [], [], [], []
        g = [beta]
        for _ in range(max_iter - total):
            k = len(zs)
            z = space.apply_precond(basis[k])
            zs.append(z)
            w = space.matvec(z)
            col = np.zeros(k + 2)
            for i in range(k + 1):
                col[i] = space.dot(w, basis[i])
                w = w - col[i] * basis[i]
            wn = space.norm(w)
            col[k + 1] = wn
            for i in range(k):
                hi = cs[i] * col[i] + sn[i] * col[i + 1]
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1]
                col[i] = hi
            rr = math.hypot(col[k], col[k + 1])
            if rr == 0.0:
                raise ConvergenceError("GMRES breakdown", history)
            cs.append(col[k] / rr)
            sn.append(col[k + 1] / rr)
            col[k] = rr
            col[k + 1] = 0.0
            cols.append(col)
            g.append(-sn[k] * g[k])
            g[k] = cs[k] * g[k]
            res = abs(g[k + 1]) / bnorm
            history.append(res)
            if res <= tol or wn == 0.0:
                break
            basis.append(w / wn)
        m = len(zs)
        y = np.zeros(m)
        for i in range(m - 1, -1, -1):
            acc = g[i]
            for j in range(i + 1, m):
                acc -= cols[j][i] * y[j]
            y[i] = acc / cols[i][i]
        for i in range(m):
            x += y[i] * zs[i]
        total += m
        r, true_res = _check_done(space, b, x, tol, bnorm)
        if true_res <= tol:
            history[-1] = true_res
            return SolveResult(x, total, true_res, history)
        if total >= max_iter:
            raise ConvergenceError(
                f"GMRES did not converge in {max_iter} iterations (residual {true_res:.3e})", history)
        beta = space.norm(r)


SOLVERS = {"cg": cg, "gmres": gmres, "bicgstab": bicgstab}


def direct_solve(a, b) -> SolveResult:
    from scipy.sparse.linalg import splu

    a = sp.csc_matrix(a)
    try:
        lu = splu(a)
    except RuntimeError as exc:
        raise SingularSystemError(f"direct factorization failed: {exc}") from exc
    x = lu.solve(np.asarray(b, float))
    bnorm = np.linalg.norm(b)
    res = float(np.linalg.norm(b - a @ x) / bnorm) if bnorm > 0 else 0.0
    return SolveResult(x, 1, res, [res])


def solve_linear(a, b, config: SolverConfig, deterministic: bool = True) -> SolveResult:
    """Solve ``a x = b`` sequentially with the configured method."""
    if config.method == "direct":
        return direct_solve(a, b)
    space = VectorSpace(a, config.preconditioner, deterministic)
    return SOLVERS[config.method](space, np.asarray(b, float), tol=config.tolerance,
                                  max_iter=config.max_iterations)
