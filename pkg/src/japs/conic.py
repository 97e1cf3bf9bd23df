"""Barrier solver for the canonical convex subproblem class used by the
transmit-beamforming stage:

    maximize   sum_t w_t * ln(f_t(X)) + <C, X> + offset
    subject to g_i(X) <= b_i,   X_k Hermitian PSD,

where X = (X_1, ..., X_K) are Hermitian blocks and every f_t, g_i is a real
affine functional  sum_k Re tr(K_k X_k) + const.

Method: path-following on  psi_t = -t * objective - sum ln(slack_i)
- sum ln det X_k, with a damped Newton inner loop (backtracking by halving,
Armijo 1e-4) and geometric growth of t.  The ln terms of the objective are
self-concordant and are folded directly into the Newton model, so no
exponential-cone machinery is needed.  Works natively on complex Hermitian
blocks via an orthonormal real basis; a real-symmetric embedding is provided
as a cross-check path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Infeasible(RuntimeError):
    """No strictly feasible point found."""


class LineSearchStall(RuntimeError):
    """Newton cannot make progress; the problem is ill-conditioned."""


class MaxIterations(RuntimeError):
    """Iteration budget exhausted before reaching the target gap."""


@dataclass
class AffineFunctional:
    """Real affine functional of the Hermitian blocks.

    coeffs[k] is a Hermitian matrix (or None for a zero contribution);
    value(blocks) = sum_k Re tr(coeffs[k] blocks[k]) + const.
    """

    coeffs: list
    const: float = 0.0

    def value(self, blocks) -> float:
        total = self.const
        for k, c in enumerate(self.coeffs):
            if c is not None:
                total += float(np.real(np.trace(c @ blocks[k])))
        return total


@dataclass
class LogAffineSdp:
    """Canonical problem data.  field is 'complex' or 'real' (symmetric)."""

    block_dims: list
    log_terms: list            # [(weight >= 0, AffineFunctional), ...]
    linear_objective: list     # per-block Hermitian matrices or None
    inequalities: list         # [(AffineFunctional, upper bound), ...]
    offset: float = 0.0
    field: str = "complex"

    def __post_init__(self):
        def check(mat, k):
            n = self.block_dims[k]
            if mat.shape != (n, n):
                raise ValueError("coefficient not conformal to its block")
            if np.max(np.abs(mat - mat.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
                raise ValueError("coefficient matrix is not Hermitian")

        for w, fn in self.log_terms:
            if w < 0:
                raise ValueError("log-term weight must be nonnegative")
            for k, c in enumerate(fn.coeffs):
                if c is not None:
                    check(c, k)
        for k, c in enumerate(self.linear_objective):
            if c is not None:
                check(c, k)
        for fn, _ in self.inequalities:
            for k, c in enumerate(fn.coeffs):
                if c is not None:
                    check(c, k)


@dataclass
class ConicSolution:
    blocks: list
    objective: float
    kkt_residuals: dict
    iterations: int
    ineq_multipliers: np.ndarray = None
    psd_multipliers: list = None


_BASIS_CACHE = {}


def hermitian_basis(n: int, complex_field: bool = True) -> np.ndarray:
    """Orthonormal basis of Hermitian (or real symmetric) n x n matrices
    under the inner product Re tr(A^H B)."""
    key = (n, complex_field)
    if key in _BASIS_CACHE:
        return _BASIS_CACHE[key]
    mats = []
    dtype = complex if complex_field else float
    for i in range(n):
        e = np.zeros((n, n), dtype=dtype)
        e[i, i] = 1.0
        mats.append(e)
    r = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for k in range(i + 1, n):
            e = np.zeros((n, n), dtype=dtype)
            e[i, k] = e[k, i] = r
            mats.append(e)
            if complex_field:
                e2 = np.zeros((n, n), dtype=complex)
                e2[i, k] = 1j * r
                e2[k, i] = -1j * r
                mats.append(e2)
    out = np.stack(mats)
    _BASIS_CACHE[key] = out
    return out


class _Workspace:
    """Vectorized view of a LogAffineSdp over the per-block bases."""

    def __init__(self, prob: LogAffineSdp):
        self.prob = prob
        cx = prob.field == "complex"
        self.bases = [hermitian_basis(n, cx) for n in prob.block_dims]
        self.sizes = [b.shape[0] for b in self.bases]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.dim = int(self.offsets[-1])

        self.Fc, self.f0 = self._stack([fn for _, fn in prob.log_terms])
        self.w = np.array([w for w, _ in prob.log_terms], dtype=float)
        self.Gc, g0 = self._stack([fn for fn, _ in prob.inequalities])
        bounds = np.array([b for _, b in prob.inequalities], dtype=float)
        self.b = bounds - g0  # fold functional constants into the bounds
        self.c = self._vectorize_blocks(prob.linear_objective)

    def _coords(self, mat, k):
        return np.einsum("ij,aji->a", mat, self.bases[k]).real

    def _vectorize_blocks(self, mats):
        v = np.zeros(self.dim)
        for k, m in enumerate(mats):
            if m is not None:
                v[self.offsets[k]:self.offsets[k + 1]] = self._coords(m, k)
        return v

    def _stack(self, fns):
        rows = np.zeros((len(fns), self.dim))
        consts = np.zeros(len(fns))
        for i, fn in enumerate(fns):
            rows[i] = self._vectorize_blocks(fn.coeffs)
            consts[i] = fn.const
        return rows, consts

    def vec(self, blocks) -> np.ndarray:
        return np.concatenate([self._coords(blocks[k], k)
                               for k in range(len(self.bases))])

    def mats(self, x) -> list:
        out = []
        for k, basis in enumerate(self.bases):
            xk = x[self.offsets[k]:self.offsets[k + 1]]
            out.append(np.einsum("a,aij->ij", xk, basis))
        return out

    # --- pieces of psi_t ---------------------------------------------------

    def parts(self, x):
        """(f values, slacks, cholesky factors) or None if x is infeasible."""
        f = self.Fc @ x + self.f0 if len(self.w) else np.zeros(0)
        if np.any(f <= 0.0):
            return None
        s = self.b - self.Gc @ x if len(self.b) else np.zeros(0)
        if np.any(s <= 0.0):
            return None
        chols = []
        for mat in self.mats(x):
            try:
                chols.append(np.linalg.cholesky(mat))
            except np.linalg.LinAlgError:
                return None
        return f, s, chols

    def objective(self, x, f) -> float:
        val = float(self.c @ x) + self.prob.offset
        if len(self.w):
            val += float(self.w @ np.log(f))
        return val

    def psi(self, t, x, f, s, chols) -> float:
        val = -t * self.objective(x, f)
        if len(s):
            val -= float(np.sum(np.log(s)))
        for L in chols:
            val -= 2.0 * float(np.sum(np.log(np.diag(L).real)))
        return val

    def grad_hess_split(self, x, f, s, chols):
        """Objective and barrier pieces so psi_t derivatives assemble as
        (t * g_obj + g_bar, t * H_obj + H_bar) for any t."""
        g_obj = -self.c.copy()
        H_obj = np.zeros((self.dim, self.dim))
        if len(self.w):
            g_obj -= (self.w / f) @ self.Fc
            H_obj += (self.Fc.T * (self.w / f ** 2)) @ self.Fc
        g_bar = np.zeros(self.dim)
        H_bar = np.zeros((self.dim, self.dim))
        if len(s):
            g_bar += (1.0 / s) @ self.Gc
            H_bar += (self.Gc.T * (1.0 / s ** 2)) @ self.Gc
        for k, basis in enumerate(self.bases):
            L = chols[k]
            xi = np.linalg.inv(L)
            xinv = xi.conj().T @ xi
            sl = slice(self.offsets[k], self.offsets[k + 1])
            g_bar[sl] -= np.einsum("ij,aji->a", xinv, basis).real
            p = np.matmul(xinv, np.matmul(basis, xinv))
            H_bar[sl, sl] += np.einsum("aij,bji->ab", basis, p).real
        return g_obj, H_obj, g_bar, H_bar

    def grad_hess(self, t, x, f, s, chols):
        g_obj, H_obj, g_bar, H_bar = self.grad_hess_split(x, f, s, chols)
        return t * g_obj + g_bar, t * H_obj + H_bar


def _center(ws: _Workspace, x, t, newton_tol, max_steps, counter):
    """Damped Newton to the analytic center of psi_t; returns the new x."""
    parts = ws.parts(x)
    if parts is None:
        raise Infeasible("centering started from an infeasible point")
    for _ in range(max_steps):
        counter[0] += 1
        f, s, chols = parts
        g, H = ws.grad_hess(t, x, f, s, chols)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            H = H + (1e-12 * np.trace(H) / max(ws.dim, 1)) * np.eye(ws.dim)
            step = np.linalg.solve(H, -g)
        decrement = float(-g @ step)
        if decrement < 0.0:
            # numerical loss of positive definiteness; regularize and retry
            H = H + (1e-10 * np.trace(H) / max(ws.dim, 1)) * np.eye(ws.dim)
            step = np.linalg.solve(H, -g)
            decrement = float(-g @ step)
            if decrement < 0.0:
                raise LineSearchStall("Newton direction is not a descent direction")
        if 0.5 * decrement <= newton_tol:
            return x, parts
        psi0 = ws.psi(t, x, f, s, chols)
        # allowance for cancellation noise: psi ~ t * objective can be huge
        noise = 16.0 * np.finfo(float).eps * abs(psi0)
        alpha = 1.0
        while True:
            cand = x + alpha * step
            cand_parts = ws.parts(cand)
            if cand_parts is not None:
                psi1 = ws.psi(t, cand, *cand_parts)
                if psi1 <= psi0 - 1e-4 * alpha * decrement + noise:
                    x, parts = cand, cand_parts
                    break
            alpha *= 0.5
            if alpha < 1e-18:
                if 0.5 * decrement <= 1e-3:
                    # within float noise of the center; good enough
                    return x, parts
                raise LineSearchStall("backtracking line search stalled")
    if 0.5 * decrement <= 1e-3:
        return x, parts
    raise MaxIterations("Newton loop did not center within the step budget")


def _phase1(ws: _Workspace, x0, counter, max_stages=60):
    """Minimize the max constraint violation; returns a strictly feasible x."""
    n = ws.dim
    rows = []
    consts = []
    if len(ws.b):
        rows.append(np.hstack([-ws.Gc, np.ones((len(ws.b), 1))]))
        consts.append(ws.b)
    if len(ws.w):
        rows.append(np.hstack([ws.Fc, np.ones((len(ws.w), 1))]))
        consts.append(ws.f0)
    A = np.vstack(rows) if rows else np.zeros((0, n + 1))
    a0 = np.concatenate(consts) if consts else np.zeros(0)

    def viol(x):
        v = 0.0
        if len(ws.b):
            v = max(v, float(np.max(ws.Gc @ x - ws.b)))
        if len(ws.w):
            v = max(v, float(np.max(-(ws.Fc @ x + ws.f0))))
        return v

    s = viol(x0) * 1.1 + 1e-6
    z = np.concatenate([x0, [s]])
    t = 1.0
    nu = float(A.shape[0] + sum(ws.prob.block_dims))
    for stage in range(max_stages):
        for _ in range(400):
            counter[0] += 1
            x = z[:n]
            if viol(x) < 0.0 and ws.parts(x) is not None:
                return x
            margins = A @ z + a0
            chols = []
            ok = np.all(margins > 0)
            if ok:
                for mat in ws.mats(x):
                    try:
                        chols.append(np.linalg.cholesky(mat))
                    except np.linalg.LinAlgError:
                        ok = False
                        break
            if not ok:
                raise Infeasible("phase-I barrier left the feasible region")
            g = np.zeros(n + 1)
            g[-1] = t
            g -= (1.0 / margins) @ A
            H = (A.T * (1.0 / margins ** 2)) @ A
            for k, basis in enumerate(ws.bases):
                L = chols[k]
                xi = np.linalg.inv(L)
                xinv = xi.conj().T @ xi
                sl = slice(ws.offsets[k], ws.offsets[k + 1])
                g[sl] -= np.einsum("ij,aji->a", xinv, basis).real
                p = np.matmul(xinv, np.matmul(basis, xinv))
                H[sl, sl] += np.einsum("aij,bji->ab", basis, p).real
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                H = H + (1e-12 * np.trace(H) / (n + 1)) * np.eye(n + 1)
                step = np.linalg.solve(H, -g)
            decrement = float(-g @ step)
            if 0.5 * decrement <= 1e-9:
                break

            def phase_psi(zz):
                mm = A @ zz + a0
                if np.any(mm <= 0):
                    return None
                val = t * zz[-1] - float(np.sum(np.log(mm)))
                for mat in ws.mats(zz[:n]):
                    try:
                        L = np.linalg.cholesky(mat)
                    except np.linalg.LinAlgError:
                        return None
                    val -= 2.0 * float(np.sum(np.log(np.diag(L).real)))
                return val

            psi0 = phase_psi(z)
            noise = 16.0 * np.finfo(float).eps * abs(psi0)
            alpha = 1.0
            stalled = False
            while True:
                cand = z + alpha * step
                psi1 = phase_psi(cand)
                if psi1 is not None and psi1 <= psi0 - 1e-4 * alpha * decrement + noise:
                    z = cand
                    break
                alpha *= 0.5
                if alpha < 1e-18:
                    stalled = True
                    break
            if stalled:
                break
            x = z[:n]
            if viol(x) < 0.0 and ws.parts(x) is not None:
                return x
        if z[-1] <= 0.0 and ws.parts(z[:n]) is not None:
            return z[:n]
        # centered point: achievable violation is within nu/t of z[-1]
        if z[-1] - nu / t > 0.0:
            raise Infeasible("no strictly feasible point exists "
                             f"(min violation >= {z[-1] - nu / t:.3e})")
        t *= 10.0
    raise Infeasible("phase-I could not find a strictly feasible point")


def strictly_feasible_start(prob: LogAffineSdp) -> list:
    """Scaled-identity starting blocks, shrunk until every inequality has a
    comfortable slack and every log argument is positive."""
    ws = _Workspace(prob)
    traces = np.zeros(len(prob.inequalities))
    for i, (fn, _) in enumerate(prob.inequalities):
        traces[i] = sum(float(np.trace(c).real)
                        for c in fn.coeffs if c is not None)
    sigma = 1.0
    scales = [b / (2.0 * t_i) for t_i, b in zip(traces, ws.b) if t_i > 0 and b > 0]
    if scales:
        sigma = min(scales)
    dtype = complex if prob.field == "complex" else float
    for _ in range(200):
        blocks = [sigma * np.eye(n, dtype=dtype) for n in prob.block_dims]
        x = ws.vec(blocks)
        slacks = ws.b - ws.Gc @ x if len(ws.b) else np.zeros(0)
        logs = ws.Fc @ x + ws.f0 if len(ws.w) else np.ones(1)
        thresh = 1e-3 * np.abs(ws.b) if len(ws.b) else np.zeros(0)
        if np.all(slacks >= thresh) and np.all(slacks > 0) and np.all(logs > 0):
            return blocks
        sigma *= 0.5
    raise Infeasible("no scaled-identity point is strictly feasible")


def solve(prob: LogAffineSdp, tol: float, *, start=None, newton_tol=1e-9,
          growth=10.0, max_newton=20000, stationarity_tol=None) -> ConicSolution:
    """Path-following barrier solve to duality-gap estimate <= tol.

    stationarity_tol relaxes only the final stationarity polish (callers
    that need objective accuracy but not an equally tight gradient residual
    pass a looser value); it defaults to tol.
    """
    ws = _Workspace(prob)
    nu = float(len(prob.inequalities) + sum(prob.block_dims))

    x = None
    if start is not None:
        cand = ws.vec(start)
        if ws.parts(cand) is not None:
            x = cand
    if x is None:
        try:
            blocks = strictly_feasible_start(prob)
            cand = ws.vec(blocks)
            if ws.parts(cand) is not None:
                x = cand
        except Infeasible:
            x = None
    counter = [0]
    if x is None:
        sigma = 1.0
        x0 = ws.vec([sigma * np.eye(n, dtype=complex if prob.field == "complex" else float)
                     for n in prob.block_dims])
        x = _phase1(ws, x0, counter)

    t = 1.0
    while True:
        if counter[0] > max_newton:
            raise MaxIterations("total Newton budget exhausted")
        x, parts = _center(ws, x, t, newton_tol, 500, counter)
        if nu / t <= tol:
            break
        t *= growth

    # polish: the reported stationarity is ||grad psi||/t, bounded by
    # sqrt(2 * decrement * lmax(H)) / t, so tighten the Newton target once if
    # the measured value misses the requirement (skipped when the caller only
    # needs objective accuracy)
    stat_tol = tol if stationarity_tol is None else stationarity_tol
    if np.isfinite(stat_tol):
        f, s, chols = parts
        g, H = ws.grad_hess(t, x, f, s, chols)
        if float(np.linalg.norm(g)) / t > stat_tol:
            lam_max = float(np.linalg.eigvalsh(H)[-1])
            target = 0.25 * (stat_tol * t) ** 2 / max(lam_max, 1e-300)
            if target < newton_tol:
                try:
                    x, parts = _center(ws, x, t, max(target, 1e-18), 60, counter)
                except (LineSearchStall, MaxIterations):
                    pass

    f, s, chols = parts
    g, _H = ws.grad_hess(t, x, f, s, chols)
    lam = 1.0 / (t * s) if len(s) else np.zeros(0)
    blocks = ws.mats(x)
    psd_mult = []
    for L in chols:
        xi = np.linalg.inv(L)
        psd_mult.append((xi.conj().T @ xi) / t)
    stationarity = float(np.linalg.norm(g) / t)
    comp = float(np.sum(lam * s)) + sum(
        float(np.real(np.trace(pm @ blk))) for pm, blk in zip(psd_mult, blocks))
    residuals = {
        "stationarity": stationarity,
        "primal_feasibility": 0.0,
        "complementarity": comp,
    }
    return ConicSolution(
        blocks=blocks, objective=ws.objective(x, f), kkt_residuals=residuals,
        iterations=counter[0], ineq_multipliers=lam, psd_multipliers=psd_mult)


def kkt_residual(prob: LogAffineSdp, blocks, multipliers) -> dict:
    """Stationarity / primal / complementarity residuals of a candidate.

    multipliers = (lam, psd) with lam the inequality multipliers and psd the
    PSD-cone dual blocks.  All three are ~0 iff the candidate is optimal.
    """
    lam, psd = multipliers
    lam = np.asarray(lam, dtype=float)
    ws = _Workspace(prob)
    x = ws.vec(blocks)
    f = ws.Fc @ x + ws.f0 if len(ws.w) else np.zeros(0)
    if np.any(f <= 0):
        raise ValueError("log argument nonpositive at the candidate")
    grad = ws.c.copy()
    if len(ws.w):
        grad += (ws.w / f) @ ws.Fc
    if len(lam):
        grad -= lam @ ws.Gc
    grad += np.concatenate([ws._coords(pm, k) for k, pm in enumerate(psd)])
    stationarity = float(np.linalg.norm(grad))

    s = ws.b - ws.Gc @ x if len(ws.b) else np.zeros(0)
    primal = 0.0
    if len(s):
        primal = max(primal, float(np.max(-s)))
    for blk in blocks:
        primal = max(primal, float(max(0.0, -np.linalg.eigvalsh(blk).min())))
    primal = max(primal, 0.0)

    comp = float(np.sum(lam * s)) if len(s) else 0.0
    comp += sum(float(np.real(np.trace(pm @ blk))) for pm, blk in zip(psd, blocks))
    return {"stationarity": stationarity, "primal_feasibility": primal,
            "complementarity": abs(comp)}


def real_embedding(prob: LogAffineSdp) -> LogAffineSdp:
    """Real-symmetric 2n x 2n embedding of a complex problem; functional
    values and the optimum objective are preserved."""
    if prob.field != "complex":
        raise ValueError("problem is already real")

    def emb(mat):
        if mat is None:
            return None
        re, im = mat.real, mat.imag
        return 0.5 * np.block([[re, -im], [im, re]])

    def emb_fn(fn):
        return AffineFunctional([emb(c) for c in fn.coeffs], fn.const)

    return LogAffineSdp(
        block_dims=[2 * n for n in prob.block_dims],
        log_terms=[(w, emb_fn(fn)) for w, fn in prob.log_terms],
        linear_objective=[emb(c) for c in prob.linear_objective],
        inequalities=[(emb_fn(fn), b) for fn, b in prob.inequalities],
        offset=prob.offset, field="real")


def embed_blocks(blocks) -> list:
    """Map complex Hermitian blocks into the real embedding's variables."""
    out = []
    for mat in blocks:
        re, im = mat.real, mat.imag
        out.append(np.block([[re, -im], [im, re]]))
    return out


def debug_dump(prob: LogAffineSdp, path: str):
    """Plain-text dump of the canonical problem for external cross-checks.

    Format: one section per item; matrices are written row-major, complex
    entries as 're im' pairs.
    """
    def write_mat(fh, mat):
        fh.write(f"shape {mat.shape[0]} {mat.shape[1]}\n")
        for row in np.atleast_2d(mat):
            fh.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" if np.iscomplexobj(mat)
                              else f"{z:.17g}" for z in row) + "\n")

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"field {prob.field}\n")
        fh.write("block_dims " + " ".join(map(str, prob.block_dims)) + "\n")
        fh.write(f"offset {prob.offset:.17g}\n")
        fh.write(f"log_terms {len(prob.log_terms)}\n")
        for w, fn in prob.log_terms:
            fh.write(f"weight {w:.17g} const {fn.const:.17g}\n")
            for c in fn.coeffs:
                if c is None:
                    fh.write("zero\n")
                else:
                    write_mat(fh, c)
        fh.write("linear_objective\n")
        for c in prob.linear_objective:
            if c is None:
                fh.write("zero\n")
            else:
                write_mat(fh, c)
        fh.write(f"inequalities {len(prob.inequalities)}\n")
        for fn, b in prob.inequalities:
            fh.write(f"bound {b:.17g} const {fn.const:.17g}\n")
            for c in fn.coeffs:
                if c is None:
                    fh.write("zero\n")
                else:
                    write_mat(fh, c)
