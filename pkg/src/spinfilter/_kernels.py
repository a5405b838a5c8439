"""Compiled inner loops for the true state and the augmented filter.

Each kernel advances its state in place over one chunk of steps and stores
decimated snapshots whenever the global step index is a multiple of
``stride``. The return value is ``(code, index, n_recorded)``: ``code`` is
one of the ``OK``/``NONFINITE``/``NORM``/``SIMPLEX`` constants and
``index`` the chunk-local step at which the first violation occurred.

``simplex_resid`` accumulates ``max |sum dP|`` before clamping in slot 0
and ``max |sum P - 1|`` after renormalisation in slot 1.
"""

import numpy as np
from numba import njit

OK = 0
NONFINITE = 1
NORM = 2
SIMPLEX = 3

REASONS = {
    NONFINITE: "non-finite state",
    NORM: "Bloch norm overshoot",
    SIMPLEX: "posterior left the simplex",
}


@njit(cache=True)
def truth_chunk(r, b, alpha, eta, dW, dt, norm_tol, dY, step0, stride, rec, rec_pos):
    asum = alpha[0] + alpha[1] + alpha[2]
    se0, se1, se2 = np.sqrt(eta[0]), np.sqrt(eta[1]), np.sqrt(eta[2])
    sig0 = 2.0 * eta[0] * np.sqrt(alpha[0]) * dt
    sig1 = 2.0 * eta[1] * np.sqrt(alpha[1]) * dt
    sig2 = 2.0 * eta[2] * np.sqrt(alpha[2]) * dt
    k0, k1, k2 = np.sqrt(eta[0] * alpha[0]), np.sqrt(eta[1] * alpha[1]), np.sqrt(eta[2] * alpha[2])
    d0, d1, d2 = asum - alpha[0], asum - alpha[1], asum - alpha[2]
    x, y, z = r[0], r[1], r[2]
    for i in range(dW.shape[0]):
        w0, w1, w2 = dW[i, 0], dW[i, 1], dW[i, 2]
        dY[i, 0] = se0 * w0 + sig0 * x
        dY[i, 1] = se1 * w1 + sig1 * y
        dY[i, 2] = se2 * w2 + sig2 * z
        o0, o1, o2 = k0 * w0, k1 * w1, k2 * w2
        r2 = x * x + y * y + z * z
        ro = x * o0 + y * o1 + z * o2
        # r x (r x o) = r (r.o) - o r^2
        nx = x + 2.0 * ((b[1] * z - b[2] * y - d0 * x) * dt + o0 * (1.0 - r2) - (x * ro - o0 * r2))
        ny = y + 2.0 * ((b[2] * x - b[0] * z - d1 * y) * dt + o1 * (1.0 - r2) - (y * ro - o1 * r2))
        nz = z + 2.0 * ((b[0] * y - b[1] * x - d2 * z) * dt + o2 * (1.0 - r2) - (z * ro - o2 * r2))
        norm = np.sqrt(nx * nx + ny * ny + nz * nz)
        if not np.isfinite(norm):
            r[0], r[1], r[2] = x, y, z
            return NONFINITE, i, rec_pos
        if norm > 1.0:
            if norm > 1.0 + norm_tol:
                r[0], r[1], r[2] = x, y, z
                return NORM, i, rec_pos
            nx /= norm
            ny /= norm
            nz /= norm
        x, y, z = nx, ny, nz
        if (step0 + i + 1) % stride == 0:
            rec[rec_pos, 0] = x
            rec[rec_pos, 1] = y
            rec[rec_pos, 2] = z
            rec_pos += 1
    r[0], r[1], r[2] = x, y, z
    return OK, dW.shape[0], rec_pos


@njit(cache=True)
def filter_chunk(R, B, P, alpha, eta, dY, dt, norm_tol, p_tol, ensemble_innovation,
                 step0, stride, rec, rec_pos, simplex_resid):
    n_cand = R.shape[0]
    asum = alpha[0] + alpha[1] + alpha[2]
    sa0, sa1, sa2 = np.sqrt(alpha[0]), np.sqrt(alpha[1]), np.sqrt(alpha[2])
    pr0, pr1, pr2 = 2.0 * eta[0] * sa0 * dt, 2.0 * eta[1] * sa1 * dt, 2.0 * eta[2] * sa2 * dt
    d0, d1, d2 = asum - alpha[0], asum - alpha[1], asum - alpha[2]
    dP = np.empty(n_cand)
    for i in range(dY.shape[0]):
        y0, y1, y2 = dY[i, 0], dY[i, 1], dY[i, 2]
        # ensemble mean Bloch vector; <sigma + sigma^dag>_E = 2 * m
        m0 = 0.0
        m1 = 0.0
        m2 = 0.0
        for k in range(n_cand):
            m0 += P[k] * R[k, 0]
            m1 += P[k] * R[k, 1]
            m2 += P[k] * R[k, 2]
        # sqrt(eta alpha) dV_n = sqrt(alpha_n) (dY_n - eta_n sqrt(alpha_n) <.>_E dt)
        v0 = sa0 * (y0 - pr0 * m0)
        v1 = sa1 * (y1 - pr1 * m1)
        v2 = sa2 * (y2 - pr2 * m2)
        total_dp = 0.0
        for k in range(n_cand):
            x, y, z = R[k, 0], R[k, 1], R[k, 2]
            dp = P[k] * (2.0 * (x - m0) * v0 + 2.0 * (y - m1) * v1 + 2.0 * (z - m2) * v2)
            dP[k] = dp
            total_dp += dp
            if ensemble_innovation:
                o0, o1, o2 = v0, v1, v2
            else:
                o0 = sa0 * (y0 - pr0 * x)
                o1 = sa1 * (y1 - pr1 * y)
                o2 = sa2 * (y2 - pr2 * z)
            r2 = x * x + y * y + z * z
            ro = x * o0 + y * o1 + z * o2
            bk0, bk1, bk2 = B[k, 0], B[k, 1], B[k, 2]
            nx = x + 2.0 * ((bk1 * z - bk2 * y - d0 * x) * dt + o0 * (1.0 - r2) - (x * ro - o0 * r2))
            ny = y + 2.0 * ((bk2 * x - bk0 * z - d1 * y) * dt + o1 * (1.0 - r2) - (y * ro - o1 * r2))
            nz = z + 2.0 * ((bk0 * y - bk1 * x - d2 * z) * dt + o2 * (1.0 - r2) - (z * ro - o2 * r2))
            norm = np.sqrt(nx * nx + ny * ny + nz * nz)
            if not np.isfinite(norm):
                return NONFINITE, i, rec_pos
            if norm > 1.0:
                if norm > 1.0 + norm_tol:
                    return NORM, i, rec_pos
                nx /= norm
                ny /= norm
                nz /= norm
            R[k, 0], R[k, 1], R[k, 2] = nx, ny, nz
        if abs(total_dp) > simplex_resid[0]:
            simplex_resid[0] = abs(total_dp)
        total = 0.0
        for k in range(n_cand):
            p = P[k] + dP[k]
            if not np.isfinite(p):
                return NONFINITE, i, rec_pos
            if p < -p_tol or p > 1.0 + p_tol:
                return SIMPLEX, i, rec_pos
            if p < 0.0:
                p = 0.0
            P[k] = p
            total += p
        if total <= 0.0:
            return SIMPLEX, i, rec_pos
        norm_sum = 0.0
        for k in range(n_cand):
            P[k] /= total
            norm_sum += P[k]
        if abs(norm_sum - 1.0) > simplex_resid[1]:
            simplex_resid[1] = abs(norm_sum - 1.0)
        if (step0 + i + 1) % stride == 0:
            for k in range(n_cand):
                rec[rec_pos, k] = P[k]
            rec_pos += 1
    return OK, dY.shape[0], rec_pos
