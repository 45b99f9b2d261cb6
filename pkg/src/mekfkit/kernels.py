"""Compiled batch kernels for the Monte Carlo inner loop.

Each kernel performs, for every run of a batch, the same arithmetic as the
numpy reference in :mod:`mekfkit.engine` / :mod:`mekfkit.spacecraft`, and
updates the arrays in place.  Runs never interact, so a run's result is
independent of which other runs share its batch.

Error-definition codes: 0 body, 1 ref, 2 right SE(3), 3 left SE(3).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .engine import COND_LIMIT, ErrorDef, ErrorModel, MeasMode

KIND = {ErrorDef.BODY: 0, ErrorDef.REF: 1, ErrorDef.RIGHT_SE3: 2, ErrorDef.LEFT_SE3: 3}


def model_codes(model: ErrorModel):
    return KIND[model.error], model.measurement is MeasMode.INVARIANT


@njit(cache=True)
def _quat_mul(a, b, out):
    x = a[3] * b[0] + b[3] * a[0] - (a[1] * b[2] - a[2] * b[1])
    y = a[3] * b[1] + b[3] * a[1] - (a[2] * b[0] - a[0] * b[2])
    z = a[3] * b[2] + b[3] * a[2] - (a[0] * b[1] - a[1] * b[0])
    w = a[3] * b[3] - (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
    n = np.sqrt(x * x + y * y + z * z + w * w)
    if w < 0:
        n = -n
    out[0] = x / n
    out[1] = y / n
    out[2] = z / n
    out[3] = w / n


@njit(cache=True)
def _exp_quat(a0, a1, a2, out):
    th = np.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
    if th < 1e-8:
        x, y, z, w = 0.5 * a0, 0.5 * a1, 0.5 * a2, 1.0
    else:
        s = np.sin(0.5 * th) / th
        x, y, z, w = a0 * s, a1 * s, a2 * s, np.cos(0.5 * th)
    n = np.sqrt(x * x + y * y + z * z + w * w)
    if w < 0:
        n = -n
    out[0] = x / n
    out[1] = y / n
    out[2] = z / n
    out[3] = w / n


@njit(cache=True)
def _quat_to_matrix(q, A):
    e0, e1, e2, q4 = q[0], q[1], q[2], q[3]
    s = q4 * q4 - (e0 * e0 + e1 * e1 + e2 * e2)
    A[0, 0] = s + 2 * e0 * e0
    A[1, 1] = s + 2 * e1 * e1
    A[2, 2] = s + 2 * e2 * e2
    A[0, 1] = 2 * e0 * e1 + 2 * q4 * e2
    A[1, 0] = 2 * e0 * e1 - 2 * q4 * e2
    A[0, 2] = 2 * e0 * e2 - 2 * q4 * e1
    A[2, 0] = 2 * e0 * e2 + 2 * q4 * e1
    A[1, 2] = 2 * e1 * e2 + 2 * q4 * e0
    A[2, 1] = 2 * e1 * e2 - 2 * q4 * e0


@njit(cache=True)
def _put_skew(M, r0, c0, v0, v1, v2, sign):
    M[r0 + 0, c0 + 0] = 0.0
    M[r0 + 1, c0 + 1] = 0.0
    M[r0 + 2, c0 + 2] = 0.0
    M[r0 + 0, c0 + 1] = -sign * v2
    M[r0 + 0, c0 + 2] = sign * v1
    M[r0 + 1, c0 + 0] = sign * v2
    M[r0 + 1, c0 + 2] = -sign * v0
    M[r0 + 2, c0 + 0] = -sign * v1
    M[r0 + 2, c0 + 1] = sign * v0


@njit(cache=True)
def propagate_batch(kind, q, beta, P, gyro, dt, qv, qu):
    """In-place covariance and quaternion propagation over one interval."""
    n = q.shape[0]
    F = np.zeros((6, 6))
    G = np.zeros((6, 6))
    Phi = np.zeros((6, 6))
    T = np.zeros((6, 6))
    A = np.zeros((3, 3))
    W = np.zeros((3, 3))
    B = np.zeros((3, 3))
    dq = np.zeros(4)
    qn = np.zeros(4)
    qc = np.array([qv, qv, qv, qu, qu, qu])
    for j in range(n):
        w0 = gyro[j, 0] - beta[j, 0]
        w1 = gyro[j, 1] - beta[j, 1]
        w2 = gyro[j, 2] - beta[j, 2]
        F[:, :] = 0.0
        G[:, :] = 0.0
        if kind == 0 or kind == 2:
            _put_skew(F, 0, 0, w0, w1, w2, -1.0)
            for i in range(3):
                F[i, 3 + i] = -1.0
                G[i, i] = -1.0
                G[3 + i, 3 + i] = 1.0
            if kind == 2:
                _put_skew(W, 0, 0, w0, w1, w2, 1.0)
                _put_skew(B, 0, 0, beta[j, 0], beta[j, 1], beta[j, 2], 1.0)
                for r in range(3):
                    for c in range(3):
                        acc = 0.0
                        for k in range(3):
                            acc += B[r, k] * W[k, c]
                        F[3 + r, c] = acc
                        F[3 + r, 3 + c] = B[r, c]
                        G[3 + r, c] = B[r, c]
        else:
            _quat_to_matrix(q[j], A)
            if kind == 1:
                for r in range(3):
                    for c in range(3):
                        F[r, 3 + c] = -A[c, r]
                        G[r, c] = -A[c, r]
                    G[3 + r, 3 + r] = 1.0
            else:
                v0 = A[0, 0] * w0 + A[1, 0] * w1 + A[2, 0] * w2
                v1 = A[0, 1] * w0 + A[1, 1] * w1 + A[2, 1] * w2
                v2 = A[0, 2] * w0 + A[1, 2] * w1 + A[2, 2] * w2
                _put_skew(F, 3, 3, v0, v1, v2, 1.0)
                for r in range(3):
                    F[r, 3 + r] = -1.0
                    for c in range(3):
                        G[r, c] = -A[c, r]
                        G[3 + r, 3 + c] = A[c, r]
        # Phi = I + F dt + (F dt)^2 / 2
        for r in range(6):
            for c in range(6):
                acc = 0.0
                for k in range(6):
                    acc += (F[r, k] * dt) * (F[k, c] * dt)
                Phi[r, c] = F[r, c] * dt + 0.5 * acc
            Phi[r, r] += 1.0
        # T = Phi P
        Pj = P[j]
        for r in range(6):
            for c in range(6):
                acc = 0.0
                for k in range(6):
                    acc += Phi[r, k] * Pj[k, c]
                T[r, c] = acc
        # P = T Phi^T + G Qc G^T dt, symmetrized
        for r in range(6):
            for c in range(6):
                acc = 0.0
                for k in range(6):
                    acc += T[r, k] * Phi[c, k]
                qd = 0.0
                for k in range(6):
                    qd += G[r, k] * qc[k] * G[c, k]
                F[r, c] = acc + qd * dt
        for r in range(6):
            for c in range(r, 6):
                s = 0.5 * (F[r, c] + F[c, r])
                Pj[r, c] = s
                Pj[c, r] = s
        _exp_quat(w0 * dt, w1 * dt, w2 * dt, dq)
        _quat_mul(dq, q[j], qn)
        q[j, :] = qn


@njit(cache=True)
def _chol_inv(S, m, L, Sinv):
    """Inverse of an SPD matrix via Cholesky; returns False if not positive definite."""
    for i in range(m):
        for j in range(i + 1):
            s = S[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 0.0:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
        for j in range(i + 1, m):
            L[i, j] = 0.0
    # Sinv = L^-T L^-1, column by column
    for c in range(m):
        y = np.zeros(m)
        for i in range(m):
            s = 1.0 if i == c else 0.0
            for k in range(i):
                s -= L[i, k] * y[k]
            y[i] = s / L[i, i]
        for i in range(m - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, m):
                s -= L[k, i] * Sinv[k, c]
            Sinv[i, c] = s / L[i, i]
    return True


@njit(cache=True)
def update_batch(kind, invariant, q, beta, P, b, r, R, rejected):
    """In-place measurement update with ``m`` simultaneous vector observations.

    ``b`` is ``(n, m, 3)``, ``r`` is ``(m, 3)`` and ``R`` is ``(m, 3, 3)``.
    """
    n = q.shape[0]
    m_obs = r.shape[0]
    m = 3 * m_obs
    A = np.zeros((3, 3))
    H = np.zeros((m, 6))
    nu = np.zeros(m)
    Rf = np.zeros((m, m))
    HP = np.zeros((m, 6))
    S = np.zeros((m, m))
    L = np.zeros((m, m))
    Sinv = np.zeros((m, m))
    K = np.zeros((6, m))
    IKH = np.zeros((6, 6))
    Pn = np.zeros((6, 6))
    dq = np.zeros(4)
    qn = np.zeros(4)
    ref = kind == 1 or kind == 3
    for j in range(n):
        _quat_to_matrix(q[j], A)
        H[:, :] = 0.0
        Rf[:, :] = 0.0
        for o in range(m_obs):
            o3 = 3 * o
            p0 = A[0, 0] * r[o, 0] + A[0, 1] * r[o, 1] + A[0, 2] * r[o, 2]
            p1 = A[1, 0] * r[o, 0] + A[1, 1] * r[o, 1] + A[1, 2] * r[o, 2]
            p2 = A[2, 0] * r[o, 0] + A[2, 1] * r[o, 1] + A[2, 2] * r[o, 2]
            if ref and invariant:
                for i in range(3):
                    nu[o3 + i] = (A[0, i] * b[j, o, 0] + A[1, i] * b[j, o, 1] + A[2, i] * b[j, o, 2]) - r[o, i]
                _put_skew(H, o3, 0, r[o, 0], r[o, 1], r[o, 2], 1.0)
                # R' = A^T R A
                for x in range(3):
                    for y in range(3):
                        acc = 0.0
                        for u in range(3):
                            for v in range(3):
                                acc += A[u, x] * R[o, u, v] * A[v, y]
                        Rf[o3 + x, o3 + y] = acc
            else:
                nu[o3 + 0] = b[j, o, 0] - p0
                nu[o3 + 1] = b[j, o, 1] - p1
                nu[o3 + 2] = b[j, o, 2] - p2
                if ref:
                    # A [r x]
                    r0, r1, r2 = r[o, 0], r[o, 1], r[o, 2]
                    for i in range(3):
                        H[o3 + i, 0] = A[i, 1] * r2 - A[i, 2] * r1
                        H[o3 + i, 1] = -A[i, 0] * r2 + A[i, 2] * r0
                        H[o3 + i, 2] = A[i, 0] * r1 - A[i, 1] * r0
                elif invariant:
                    _put_skew(H, o3, 0, b[j, o, 0], b[j, o, 1], b[j, o, 2], 1.0)
                else:
                    _put_skew(H, o3, 0, p0, p1, p2, 1.0)
                for x in range(3):
                    for y in range(3):
                        Rf[o3 + x, o3 + y] = R[o, x, y]
        Pj = P[j]
        for x in range(m):
            for c in range(6):
                acc = 0.0
                for k in range(6):
                    acc += H[x, k] * Pj[k, c]
                HP[x, c] = acc
        finite = True
        for x in range(m):
            for y in range(m):
                acc = 0.0
                for k in range(6):
                    acc += HP[x, k] * H[y, k]
                S[x, y] = acc + Rf[x, y]
                if not np.isfinite(S[x, y]):
                    finite = False
        for x in range(m):
            for y in range(x + 1, m):
                s = 0.5 * (S[x, y] + S[y, x])
                S[x, y] = s
                S[y, x] = s
        ok = finite and _chol_inv(S, m, L, Sinv)
        if ok:
            # Frobenius condition number bounds the 2-norm one from above
            fs = 0.0
            fi = 0.0
            for x in range(m):
                for y in range(m):
                    fs += S[x, y] * S[x, y]
                    fi += Sinv[x, y] * Sinv[x, y]
            if np.sqrt(fs * fi) >= COND_LIMIT:
                ok = np.linalg.cond(S) < COND_LIMIT
        rejected[j] = not ok
        if not ok:
            continue
        # K = (S^-1 H P)^T
        for c in range(6):
            for x in range(m):
                acc = 0.0
                for y in range(m):
                    acc += Sinv[x, y] * HP[y, c]
                K[c, x] = acc
        d = np.zeros(6)
        for c in range(6):
            acc = 0.0
            for x in range(m):
                acc += K[c, x] * nu[x]
            d[c] = acc
        for r_ in range(6):
            for c in range(6):
                acc = 0.0
                for x in range(m):
                    acc += K[r_, x] * H[x, c]
                IKH[r_, c] = (1.0 if r_ == c else 0.0) - acc
        for r_ in range(6):
            for c in range(6):
                acc = 0.0
                for k in range(6):
                    acc += IKH[r_, k] * Pj[k, c]
                Pn[r_, c] = acc
        for r_ in range(6):
            for c in range(r_, 6):
                s = 0.5 * (Pn[r_, c] + Pn[c, r_])
                Pj[r_, c] = s
                Pj[c, r_] = s
        # retraction
        _exp_quat(d[0], d[1], d[2], dq)
        if ref:
            _quat_mul(q[j], dq, qn)
        else:
            _quat_mul(dq, q[j], qn)
        b0, b1, b2 = beta[j, 0], beta[j, 1], beta[j, 2]
        if kind == 2:
            beta[j, 0] = b0 + d[3] + (b1 * d[2] - b2 * d[1])
            beta[j, 1] = b1 + d[4] + (b2 * d[0] - b0 * d[2])
            beta[j, 2] = b2 + d[5] + (b0 * d[1] - b1 * d[0])
        elif kind == 3:
            for i in range(3):
                beta[j, i] = beta[j, i] + (A[i, 0] * d[3] + A[i, 1] * d[4] + A[i, 2] * d[5])
        else:
            beta[j, 0] = b0 + d[3]
            beta[j, 1] = b1 + d[4]
            beta[j, 2] = b2 + d[5]
        q[j, :] = qn


@njit(cache=True)
def _truth_rates(q, w, J, Jinv, pos, mu, gravity, dq, dw):
    # kinematics: (w/2, 0) ⊗ q
    h0, h1, h2 = 0.5 * w[0], 0.5 * w[1], 0.5 * w[2]
    dq[0] = q[3] * h0 - (h1 * q[2] - h2 * q[1])
    dq[1] = q[3] * h1 - (h2 * q[0] - h0 * q[2])
    dq[2] = q[3] * h2 - (h0 * q[1] - h1 * q[0])
    dq[3] = -(h0 * q[0] + h1 * q[1] + h2 * q[2])
    Jw = J @ w
    tq = -np.cross(w, Jw)
    if gravity:
        nq = np.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
        A = np.zeros((3, 3))
        _quat_to_matrix(q / nq, A)
        rb = (A @ pos) * 1e3
        Jr = J @ rb
        rn = np.sqrt(rb[0] ** 2 + rb[1] ** 2 + rb[2] ** 2)
        tq = tq + 3 * mu * np.cross(rb, Jr) / rn**5
    dw[:] = Jinv @ tq


@njit(cache=True)
def truth_step_batch(q, omega, J, Jinv, pos0, pos_mid, pos1, h, mu, gravity):
    """In-place RK4 step of quaternion kinematics and Euler dynamics."""
    n = q.shape[0]
    k1q = np.zeros(4); k2q = np.zeros(4); k3q = np.zeros(4); k4q = np.zeros(4)
    k1w = np.zeros(3); k2w = np.zeros(3); k3w = np.zeros(3); k4w = np.zeros(3)
    for j in range(n):
        qj = q[j].copy()
        wj = omega[j].copy()
        _truth_rates(qj, wj, J, Jinv, pos0, mu, gravity, k1q, k1w)
        _truth_rates(qj + h / 2 * k1q, wj + h / 2 * k1w, J, Jinv, pos_mid, mu, gravity, k2q, k2w)
        _truth_rates(qj + h / 2 * k2q, wj + h / 2 * k2w, J, Jinv, pos_mid, mu, gravity, k3q, k3w)
        _truth_rates(qj + h * k3q, wj + h * k3w, J, Jinv, pos1, mu, gravity, k4q, k4w)
        qn = qj + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        wn = wj + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
        q[j, :] = qn / np.sqrt(qn[0] ** 2 + qn[1] ** 2 + qn[2] ** 2 + qn[3] ** 2)
        omega[j, :] = wn


@njit(cache=True)
def equivalent_rate_batch(q0, q1, dt, out):
    """Rotation vector of ``q1 ⊗ q0*`` divided by ``dt``, per run."""
    n = q0.shape[0]
    c = np.zeros(4)
    dq = np.zeros(4)
    for j in range(n):
        c[0] = -q0[j, 0]
        c[1] = -q0[j, 1]
        c[2] = -q0[j, 2]
        c[3] = q0[j, 3]
        _quat_mul(q1[j], c, dq)
        s = np.sqrt(dq[0] ** 2 + dq[1] ** 2 + dq[2] ** 2)
        if s < 1e-12:
            scale = 2.0
        else:
            scale = 2.0 * np.arctan2(s, dq[3]) / s
        for i in range(3):
            out[j, i] = scale * dq[i] / dt
