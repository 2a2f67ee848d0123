"""Hot numeric kernels for the interior-point solver.

The whole damped-Newton log-barrier loop runs over flat arrays so it can be
compiled with numba.  Set ``ADMARKET_DISABLE_NUMBA=1`` to run the identical
code as plain numpy/Python (useful for debugging and as a fallback where
numba is unavailable); results agree up to floating-point scheduling noise.
``benchmarks/bench_solver.py`` compares the two paths.

Variable layout: z = [p (n) | beta (n) | y (m support arcs)] with equality
rows out-balance and in-balance (2n of them).  Inequalities handled by the
barrier: u_ij*beta_i <= p_j on every arc, 1 <= p_i <= pmax, y >= 0.
"""

from __future__ import annotations

import math
import os

import numpy as np

USING_NUMBA = False

STATUS_CONVERGED = 0
STATUS_ITERATION_LIMIT = 1
STATUS_NUMERICAL_FAILURE = 2


def _hardmin_beta(n, esrc, edst, eu, p):
    beta = np.full(n, np.inf)
    for k in range(esrc.shape[0]):
        v = p[edst[k]] / eu[k]
        if v < beta[esrc[k]]:
            beta[esrc[k]] = v
    return beta


def _reported_objective(n, esrc, edst, eu, ssrc, slogu, p, y):
    """Objective with beta pushed to its hard minimum (best value for the
    current prices); this is what convergence is measured against."""
    beta = _hardmin_beta(n, esrc, edst, eu, p)
    total = 0.0
    for i in range(n):
        total += p[i] * (math.log(p[i]) - math.log(beta[i]))
    for a in range(ssrc.shape[0]):
        total -= y[a] * slogu[a]
    return total


def _primal_residual(n, ssrc, sdst, p, y):
    res = 0.0
    outflow = np.zeros(n)
    inflow = np.zeros(n)
    for a in range(ssrc.shape[0]):
        outflow[ssrc[a]] += y[a]
        inflow[sdst[a]] += y[a]
    for i in range(n):
        r1 = abs(outflow[i] - p[i])
        r2 = abs(inflow[i] - p[i])
        if r1 > res:
            res = r1
        if r2 > res:
            res = r2
    return res


def _normalized_state(n, esrc, edst, eu, ssrc, sdst, slogu, p, y):
    """Objective and balance residual of the min-price-1 representative of
    the current iterate.  The iterate may sit far up the scaling ray, where
    the absolute objective drowns in float cancellation; the normalized
    copy is the point actually reported, so convergence is judged there."""
    alpha = p[0]
    for i in range(n):
        if p[i] < alpha:
            alpha = p[i]
    pn = p / alpha
    yn = y / alpha
    f_norm = _reported_objective(n, esrc, edst, eu, ssrc, slogu, pn, yn)
    res_norm = _primal_residual(n, ssrc, sdst, pn, yn)
    return f_norm, res_norm, alpha


def _project_balance(n, esrc, edst, eu, ssrc, sdst, p, beta, y, pmax):
    """Minimum-norm restoration of the balance equalities.

    The equalities carry no barrier term, so solve inaccuracies accumulate
    there invisibly; this projects (p, y) back onto {out = in = p} via the
    normal equations of the balance matrix, guarding the step so no barrier
    slack changes sign."""
    M = ssrc.shape[0]
    outflow = np.zeros(n)
    inflow = np.zeros(n)
    for a in range(M):
        outflow[ssrc[a]] += y[a]
        inflow[sdst[a]] += y[a]
    worst = 0.0
    scale = 1.0
    for i in range(n):
        if p[i] > scale:
            scale = p[i]
        r1 = abs(outflow[i] - p[i])
        r2 = abs(inflow[i] - p[i])
        if r1 > worst:
            worst = r1
        if r2 > worst:
            worst = r2
    if worst <= 1e-14 * scale:
        return
    g = np.zeros((2 * n, 2 * n))
    r = np.zeros(2 * n)
    for i in range(n):
        g[i, i] += 1.0
        g[n + i, n + i] += 1.0
        g[i, n + i] += 1.0
        g[n + i, i] += 1.0
        g[i, i] += 1e-10
        g[n + i, n + i] += 1e-10
        r[i] = outflow[i] - p[i]
        r[n + i] = inflow[i] - p[i]
    for a in range(M):
        i = ssrc[a]
        j = sdst[a]
        g[i, i] += 1.0
        g[n + j, n + j] += 1.0
        g[i, n + j] += 1.0
        g[n + j, i] += 1.0
    lam = np.linalg.solve(g, r)
    dp = np.zeros(n)
    dy = np.zeros(M)
    for i in range(n):
        dp[i] = lam[i] + lam[n + i]
    for a in range(M):
        dy[a] = -(lam[ssrc[a]] + lam[n + sdst[a]])
    # apply the largest fraction of the correction that keeps every barrier
    # slack strictly positive (checked on the candidate, not predicted)
    K = esrc.shape[0]
    sigma = 1.0
    for _ in range(8):
        good = True
        for i in range(n):
            v = p[i] + sigma * dp[i]
            if v <= 1.0 or v >= pmax:
                good = False
        if good:
            for a in range(M):
                if y[a] + sigma * dy[a] <= 0.0:
                    good = False
        if good:
            for k in range(K):
                if p[edst[k]] + sigma * dp[edst[k]] - eu[k] * beta[esrc[k]] <= 0.0:
                    good = False
        if good:
            for i in range(n):
                p[i] += sigma * dp[i]
            for a in range(M):
                y[a] += sigma * dy[a]
            return
        sigma *= 0.25


def _barrier_value(n, esrc, edst, eu, ssrc, slogu, p, beta, y, mu, pmax):
    """phi_mu(z); returns 1e300 outside the domain."""
    big = 1e300
    val = 0.0
    for i in range(n):
        if p[i] <= 1.0 or p[i] >= pmax or beta[i] <= 0.0:
            return big
        val += p[i] * (math.log(p[i]) - math.log(beta[i]))
        val -= mu * (math.log(p[i] - 1.0) + math.log(pmax - p[i]))
    for k in range(esrc.shape[0]):
        s = p[edst[k]] - eu[k] * beta[esrc[k]]
        if s <= 0.0:
            return big
        val -= mu * math.log(s)
    for a in range(ssrc.shape[0]):
        if y[a] <= 0.0:
            return big
        val -= y[a] * slogu[a]
        val -= mu * math.log(y[a])
    return val


def _barrier_solve(
    n,
    esrc,
    edst,
    eu,
    elogu,
    ssrc,
    sdst,
    slogu,
    p,
    beta,
    y,
    tol,
    max_newton,
    pmax,
    mu0,
    shrink,
):
    K = esrc.shape[0]
    M = ssrc.shape[0]
    N = 2 * n + M
    nineq = K + 2 * n + M
    dim = N + 2 * n

    # The optimal value is 0, so the reported objective of the hard-min
    # point is itself the optimality gap; mu only has to fall far enough
    # for that gap to clear the tolerance.  The floor is a safety margin
    # two orders below the centering estimate gap ~ nineq * mu.
    mu_floor = tol / nineq / 100.0
    mu = mu0
    if mu < mu_floor:
        mu = mu_floor
    theta = 1e-12  # dual regularization keeps the KKT matrix nonsingular

    iters = 0
    status = STATUS_ITERATION_LIMIT
    decrement = 1e300
    f_rep, res, alpha_scale = _normalized_state(
        n, esrc, edst, eu, ssrc, sdst, slogu, p, y
    )
    stalled_at_floor = 0
    stage_steps = 0
    # keep the best iterate seen; late barrier stages can degrade the
    # point numerically without noticing
    best_p = p.copy()
    best_beta = beta.copy()
    best_y = y.copy()
    best_f = f_rep
    best_res = res
    best_score = abs(f_rep) + res

    while iters < max_newton:
        kkt = np.zeros((dim, dim))
        rhs = np.zeros(dim)

        # gradient and Hessian of objective + barrier
        for i in range(n):
            s2 = p[i] - 1.0
            s3 = pmax - p[i]
            rhs[i] -= math.log(p[i]) + 1.0 - math.log(beta[i]) - mu / s2 + mu / s3
            rhs[n + i] -= -p[i] / beta[i]
            kkt[i, i] += 1.0 / p[i] + mu / (s2 * s2) + mu / (s3 * s3)
            kkt[i, n + i] += -1.0 / beta[i]
            kkt[n + i, i] += -1.0 / beta[i]
            kkt[n + i, n + i] += p[i] / (beta[i] * beta[i])
        for k in range(K):
            i = esrc[k]
            j = edst[k]
            s = p[j] - eu[k] * beta[i]
            w = mu / (s * s)
            rhs[j] -= -mu / s
            rhs[n + i] -= mu * eu[k] / s
            kkt[j, j] += w
            kkt[j, n + i] += -w * eu[k]
            kkt[n + i, j] += -w * eu[k]
            kkt[n + i, n + i] += w * eu[k] * eu[k]
        for a in range(M):
            rhs[2 * n + a] -= -slogu[a] - mu / y[a]
            kkt[2 * n + a, 2 * n + a] += mu / (y[a] * y[a])

        # small primal regularization for strict definiteness
        for c in range(N):
            kkt[c, c] += 1e-13

        # equality rows: out-balance then in-balance
        for a in range(M):
            kkt[N + ssrc[a], 2 * n + a] = 1.0
            kkt[2 * n + a, N + ssrc[a]] = 1.0
            kkt[N + n + sdst[a], 2 * n + a] = 1.0
            kkt[2 * n + a, N + n + sdst[a]] = 1.0
        for i in range(n):
            kkt[N + i, i] = -1.0
            kkt[i, N + i] = -1.0
            kkt[N + n + i, i] = -1.0
            kkt[i, N + n + i] = -1.0
            kkt[N + i, N + i] = -theta
            kkt[N + n + i, N + n + i] = -theta

        outflow = np.zeros(n)
        inflow = np.zeros(n)
        for a in range(M):
            outflow[ssrc[a]] += y[a]
            inflow[sdst[a]] += y[a]
        for i in range(n):
            rhs[N + i] = -(outflow[i] - p[i])
            rhs[N + n + i] = -(inflow[i] - p[i])

        sol = np.linalg.solve(kkt, rhs)
        # one pass of iterative refinement: the rhs mixes O(mu/s) gradient
        # entries with O(1) balance rows, so a relatively accurate solve can
        # still leave absolute errors in the balance directions
        resid = rhs - kkt @ sol
        sol = sol + np.linalg.solve(kkt, resid)
        bad = False
        for c in range(dim):
            if not np.isfinite(sol[c]):
                bad = True
        if bad:
            status = STATUS_NUMERICAL_FAILURE
            break

        dp = sol[0:n]
        dbeta = sol[n : 2 * n]
        dy = sol[2 * n : N]

        # Newton decrement from the objective+barrier gradient part
        dec = 0.0
        for c in range(N):
            dec += rhs[c] * sol[c]
        if dec < 0.0:
            dec = 0.0
        decrement = dec

        # fraction-to-boundary step bound
        alpha = 1.0
        for i in range(n):
            if dbeta[i] < 0.0:
                bound = -beta[i] / dbeta[i]
                if 0.99 * bound < alpha:
                    alpha = 0.99 * bound
            if dp[i] < 0.0:
                bound = -(p[i] - 1.0) / dp[i]
                if 0.99 * bound < alpha:
                    alpha = 0.99 * bound
            if dp[i] > 0.0:
                bound = (pmax - p[i]) / dp[i]
                if 0.99 * bound < alpha:
                    alpha = 0.99 * bound
        for a in range(M):
            if dy[a] < 0.0:
                bound = -y[a] / dy[a]
                if 0.99 * bound < alpha:
                    alpha = 0.99 * bound
        for k in range(K):
            i = esrc[k]
            j = edst[k]
            s = p[j] - eu[k] * beta[i]
            ds = dp[j] - eu[k] * dbeta[i]
            if ds < 0.0:
                bound = -s / ds
                if 0.99 * bound < alpha:
                    alpha = 0.99 * bound

        phi0 = _barrier_value(n, esrc, edst, eu, ssrc, slogu, p, beta, y, mu, pmax)
        ok = False
        for _ in range(50):
            pn = p + alpha * dp
            bn = beta + alpha * dbeta
            yn = y + alpha * dy
            phi1 = _barrier_value(
                n, esrc, edst, eu, ssrc, slogu, pn, bn, yn, mu, pmax
            )
            if phi1 <= phi0 - 1e-4 * alpha * dec + 1e-14 * (1.0 + abs(phi0)):
                ok = True
                break
            alpha *= 0.5
        if ok:
            for i in range(n):
                p[i] = pn[i]
                beta[i] = bn[i]
            for a in range(M):
                y[a] = yn[a]
            _project_balance(n, esrc, edst, eu, ssrc, sdst, p, beta, y, pmax)
        iters += 1
        stage_steps += 1

        f_rep, res, alpha_scale = _normalized_state(
            n, esrc, edst, eu, ssrc, sdst, slogu, p, y
        )
        score = abs(f_rep) + res
        if score < best_score:
            best_score = score
            best_f = f_rep
            best_res = res
            for i in range(n):
                best_p[i] = p[i]
                best_beta[i] = beta[i]
            for a in range(M):
                best_y[a] = y[a]
        scale = 1.0
        for i in range(n):
            if p[i] / alpha_scale > scale:
                scale = p[i] / alpha_scale
        # a feasible point's objective is >= 0; tolerate only evaluation
        # noise below zero, since a clearly negative value means the
        # balance equalities are corrupted and the value is meaningless
        if -0.1 * tol <= f_rep <= tol and res <= 0.1 * tol * scale:
            status = STATUS_CONVERGED
            break

        # advance the barrier schedule once the subproblem is centered
        # enough (or stops making progress); when the objective target is
        # already met shrink harder, but never jump so far that the slacks
        # (still sized for the old mu) make the Newton system singular
        advance = False
        if abs(f_rep) <= tol and mu > mu_floor * 1.0001:
            mu = mu / (shrink * shrink)
            if mu < mu_floor:
                mu = mu_floor
            advance = True
        elif (not ok) or dec * 0.5 <= 0.25 * mu or stage_steps >= 25:
            if mu <= mu_floor * 1.0001:
                stalled_at_floor += 1
                if stalled_at_floor >= 6:
                    break
            else:
                mu = mu / shrink
                if mu < mu_floor:
                    mu = mu_floor
                advance = True
        if advance:
            stage_steps = 0
            # pull the iterate back down the scaling ray; everything about
            # the problem is ray-invariant but float precision is not
            if alpha_scale > 4.0:
                ratio = alpha_scale / 2.0
                for i in range(n):
                    p[i] /= ratio
                    beta[i] /= ratio
                for a in range(M):
                    y[a] /= ratio

    if status == STATUS_CONVERGED:
        return p, beta, y, status, iters, mu, f_rep, res, decrement
    return best_p, best_beta, best_y, status, iters, mu, best_f, best_res, decrement


def _apply_jit():
    global _hardmin_beta, _reported_objective, _primal_residual
    global _normalized_state, _project_balance, _barrier_value, _barrier_solve
    global USING_NUMBA
    from numba import njit

    opts = dict(cache=True, fastmath=False, nogil=True, error_model="numpy")
    _hardmin_beta = njit(**opts)(_hardmin_beta)
    _reported_objective = njit(**opts)(_reported_objective)
    _primal_residual = njit(**opts)(_primal_residual)
    _normalized_state = njit(**opts)(_normalized_state)
    _project_balance = njit(**opts)(_project_balance)
    _barrier_value = njit(**opts)(_barrier_value)
    _barrier_solve = njit(**opts)(_barrier_solve)
    USING_NUMBA = True


if os.environ.get("ADMARKET_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes"):
    try:
        _apply_jit()
    except ImportError:  # pragma: no cover - numba is a normal dependency
        pass

barrier_solve = _barrier_solve
hardmin_beta = _hardmin_beta
reported_objective = _reported_objective
primal_residual = _primal_residual
