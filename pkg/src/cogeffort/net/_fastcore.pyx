# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled network kernels (hot-path backend).

Signature-for-signature twin of `_purecore`; see that module for semantics.
Plain C loops beat BLAS dispatch overhead at this pipeline's tiny batch and
layer sizes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt, tanh

cnp.import_array()

NAME = "cython"


cdef inline double _sigmoid(double x) noexcept nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double ex = exp(x)
    return ex / (1.0 + ex)


cdef void _matmul(double[:, ::1] a, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    # out = a @ w, overwriting out
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = w.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double av
    for i in range(n):
        for j in range(m):
            out[i, j] = 0.0
        for l in range(k):
            av = a[i, l]
            for j in range(m):
                out[i, j] += av * w[l, j]


cdef void _matmul_acc(double[:, ::1] a, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    # out += a @ w
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = w.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double av
    for i in range(n):
        for l in range(k):
            av = a[i, l]
            for j in range(m):
                out[i, j] += av * w[l, j]


cdef void _matmul_at(double[:, ::1] a, double[:, ::1] b, double[:, ::1] out) noexcept nogil:
    # out = a.T @ b with a (n, k), b (n, m), out (k, m)
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double av
    for l in range(k):
        for j in range(m):
            out[l, j] = 0.0
    for i in range(n):
        for l in range(k):
            av = a[i, l]
            for j in range(m):
                out[l, j] += av * b[i, j]


cdef void _matmul_bt(double[:, ::1] a, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    # out = a @ w.T with a (n, m), w (k, m), out (n, k)
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], k = w.shape[0]
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for l in range(m):
                acc += a[i, l] * w[j, l]
            out[i, j] = acc


cdef void _matmul_bt_acc(double[:, ::1] a, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    # out += a @ w.T
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], k = w.shape[0]
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for l in range(m):
                acc += a[i, l] * w[j, l]
            out[i, j] += acc


cdef void _colsum(double[:, ::1] a, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1]
    cdef Py_ssize_t i, j
    for j in range(m):
        out[j] = 0.0
    for i in range(n):
        for j in range(m):
            out[j] += a[i, j]


def affine_fwd(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], m = w.shape[1]
    y_arr = np.empty((n, m))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    _matmul(x, w, y)
    for i in range(n):
        for j in range(m):
            y[i, j] += b[j]
    return y_arr


def affine_bwd(double[:, ::1] x, double[:, ::1] w, double[:, ::1] dy):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], m = w.shape[1]
    dx_arr = np.empty((n, k))
    dw_arr = np.empty((k, m))
    db_arr = np.empty(m)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    _matmul_bt(dy, w, dx)
    _matmul_at(x, dy, dw)
    _colsum(dy, db)
    return dx_arr, dw_arr, db_arr


def relu_fwd(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    y_arr = np.empty((n, m))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            y[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return y_arr


def relu_bwd(double[:, ::1] y, double[:, ::1] dy):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1]
    dx_arr = np.empty((n, m))
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            dx[i, j] = dy[i, j] if y[i, j] > 0.0 else 0.0
    return dx_arr


def bn_train_fwd(double[:, ::1] x, double[::1] gamma, double[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    y_arr = np.empty((n, m))
    mean_arr = np.empty(m)
    var_arr = np.empty(m)
    xhat_arr = np.empty((n, m))
    cdef double[:, ::1] y = y_arr, xhat = xhat_arr
    cdef double[::1] mean = mean_arr, var = var_arr
    cdef Py_ssize_t i, j
    cdef double mu, acc, d, inv_sd
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += x[i, j]
        mu = acc / n
        mean[j] = mu
        acc = 0.0
        for i in range(n):
            d = x[i, j] - mu
            acc += d * d
        var[j] = acc / n
        inv_sd = 1.0 / sqrt(var[j] + eps)
        for i in range(n):
            xhat[i, j] = (x[i, j] - mu) * inv_sd
            y[i, j] = gamma[j] * xhat[i, j] + beta[j]
    return y_arr, mean_arr, var_arr, xhat_arr


def bn_train_bwd(double[:, ::1] xhat, double[::1] var, double[::1] gamma,
                 double[:, ::1] dy, double eps):
    cdef Py_ssize_t n = xhat.shape[0], m = xhat.shape[1]
    dx_arr = np.empty((n, m))
    dgamma_arr = np.empty(m)
    dbeta_arr = np.empty(m)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr, dbeta = dbeta_arr
    cdef Py_ssize_t i, j
    cdef double s_dxhat, s_dxhat_xhat, g, inv_sd, dh
    for j in range(m):
        g = gamma[j]
        s_dxhat = 0.0
        s_dxhat_xhat = 0.0
        dgamma[j] = 0.0
        dbeta[j] = 0.0
        for i in range(n):
            dgamma[j] += dy[i, j] * xhat[i, j]
            dbeta[j] += dy[i, j]
            dh = dy[i, j] * g
            s_dxhat += dh
            s_dxhat_xhat += dh * xhat[i, j]
        inv_sd = 1.0 / sqrt(var[j] + eps)
        for i in range(n):
            dh = dy[i, j] * g
            dx[i, j] = (inv_sd / n) * (n * dh - s_dxhat - xhat[i, j] * s_dxhat_xhat)
    return dx_arr, dgamma_arr, dbeta_arr


def bn_infer_fwd(double[:, ::1] x, double[::1] gamma, double[::1] beta,
                 double[::1] rmean, double[::1] rvar, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    y_arr = np.empty((n, m))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    cdef double inv_sd
    for j in range(m):
        inv_sd = 1.0 / sqrt(rvar[j] + eps)
        for i in range(n):
            y[i, j] = gamma[j] * (x[i, j] - rmean[j]) * inv_sd + beta[j]
    return y_arr


def gru_fwd(double[:, ::1] x, double[:, ::1] h,
            double[:, ::1] wz, double[:, ::1] wr, double[:, ::1] wh,
            double[:, ::1] uz, double[:, ::1] ur, double[:, ::1] uh,
            double[::1] bz, double[::1] br, double[::1] bh):
    cdef Py_ssize_t n = x.shape[0], u = h.shape[1]
    z_arr = np.empty((n, u))
    r_arr = np.empty((n, u))
    cand_arr = np.empty((n, u))
    hn_arr = np.empty((n, u))
    rh_arr = np.empty((n, u))
    cdef double[:, ::1] z = z_arr, r = r_arr, cand = cand_arr, hn = hn_arr, rh = rh_arr
    cdef Py_ssize_t i, j
    _matmul(x, wz, z)
    _matmul_acc(h, uz, z)
    _matmul(x, wr, r)
    _matmul_acc(h, ur, r)
    for i in range(n):
        for j in range(u):
            z[i, j] = _sigmoid(z[i, j] + bz[j])
            r[i, j] = _sigmoid(r[i, j] + br[j])
            rh[i, j] = r[i, j] * h[i, j]
    _matmul(x, wh, cand)
    _matmul_acc(rh, uh, cand)
    for i in range(n):
        for j in range(u):
            cand[i, j] = tanh(cand[i, j] + bh[j])
            hn[i, j] = (1.0 - z[i, j]) * h[i, j] + z[i, j] * cand[i, j]
    return hn_arr, z_arr, r_arr, cand_arr


def gru_bwd(double[:, ::1] x, double[:, ::1] h,
            double[:, ::1] z, double[:, ::1] r, double[:, ::1] cand,
            double[:, ::1] wz, double[:, ::1] wr, double[:, ::1] wh,
            double[:, ::1] uz, double[:, ::1] ur, double[:, ::1] uh,
            double[:, ::1] dh_new):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], u = h.shape[1]
    dsz_arr = np.empty((n, u))
    dsr_arr = np.empty((n, u))
    dsg_arr = np.empty((n, u))
    drh_arr = np.empty((n, u))
    rh_arr = np.empty((n, u))
    dh_arr = np.empty((n, u))
    dx_arr = np.empty((n, c))
    cdef double[:, ::1] dsz = dsz_arr, dsr = dsr_arr, dsg = dsg_arr
    cdef double[:, ::1] drh = drh_arr, rh = rh_arr, dh = dh_arr, dx = dx_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(u):
            dsz[i, j] = dh_new[i, j] * (cand[i, j] - h[i, j]) * z[i, j] * (1.0 - z[i, j])
            dsg[i, j] = dh_new[i, j] * z[i, j] * (1.0 - cand[i, j] * cand[i, j])
            dh[i, j] = dh_new[i, j] * (1.0 - z[i, j])
            rh[i, j] = r[i, j] * h[i, j]
    _matmul_bt(dsg, uh, drh)
    for i in range(n):
        for j in range(u):
            dsr[i, j] = drh[i, j] * h[i, j] * r[i, j] * (1.0 - r[i, j])
            dh[i, j] += drh[i, j] * r[i, j]
    _matmul_bt_acc(dsz, uz, dh)
    _matmul_bt_acc(dsr, ur, dh)
    _matmul_bt(dsz, wz, dx)
    _matmul_bt_acc(dsr, wr, dx)
    _matmul_bt_acc(dsg, wh, dx)

    dwz_arr = np.empty((c, u)); dwr_arr = np.empty((c, u)); dwh_arr = np.empty((c, u))
    duz_arr = np.empty((u, u)); dur_arr = np.empty((u, u)); duh_arr = np.empty((u, u))
    dbz_arr = np.empty(u); dbr_arr = np.empty(u); dbh_arr = np.empty(u)
    cdef double[:, ::1] dwz = dwz_arr, dwr = dwr_arr, dwh = dwh_arr
    cdef double[:, ::1] duz = duz_arr, dur = dur_arr, duh = duh_arr
    cdef double[::1] dbz = dbz_arr, dbr = dbr_arr, dbh = dbh_arr
    _matmul_at(x, dsz, dwz)
    _matmul_at(x, dsr, dwr)
    _matmul_at(x, dsg, dwh)
    _matmul_at(h, dsz, duz)
    _matmul_at(h, dsr, dur)
    _matmul_at(rh, dsg, duh)
    _colsum(dsz, dbz)
    _colsum(dsr, dbr)
    _colsum(dsg, dbh)
    return (dx_arr, dh_arr, dwz_arr, dwr_arr, dwh_arr, duz_arr, dur_arr,
            duh_arr, dbz_arr, dbr_arr, dbh_arr)


def lstm_fwd(double[:, ::1] x, double[:, ::1] h, double[:, ::1] c,
             double[:, ::1] wi, double[:, ::1] wf, double[:, ::1] wo, double[:, ::1] wg,
             double[:, ::1] ui, double[:, ::1] uf, double[:, ::1] uo, double[:, ::1] ug,
             double[::1] bi, double[::1] bf, double[::1] bo, double[::1] bg):
    cdef Py_ssize_t n = x.shape[0], u = h.shape[1]
    gi_arr = np.empty((n, u)); gf_arr = np.empty((n, u))
    go_arr = np.empty((n, u)); gg_arr = np.empty((n, u))
    cn_arr = np.empty((n, u)); tc_arr = np.empty((n, u)); hn_arr = np.empty((n, u))
    cdef double[:, ::1] gi = gi_arr, gf = gf_arr, go = go_arr, gg = gg_arr
    cdef double[:, ::1] cn = cn_arr, tc = tc_arr, hn = hn_arr
    cdef Py_ssize_t i, j
    _matmul(x, wi, gi); _matmul_acc(h, ui, gi)
    _matmul(x, wf, gf); _matmul_acc(h, uf, gf)
    _matmul(x, wo, go); _matmul_acc(h, uo, go)
    _matmul(x, wg, gg); _matmul_acc(h, ug, gg)
    for i in range(n):
        for j in range(u):
            gi[i, j] = _sigmoid(gi[i, j] + bi[j])
            gf[i, j] = _sigmoid(gf[i, j] + bf[j])
            go[i, j] = _sigmoid(go[i, j] + bo[j])
            gg[i, j] = tanh(gg[i, j] + bg[j])
            cn[i, j] = gf[i, j] * c[i, j] + gi[i, j] * gg[i, j]
            tc[i, j] = tanh(cn[i, j])
            hn[i, j] = go[i, j] * tc[i, j]
    return hn_arr, cn_arr, gi_arr, gf_arr, go_arr, gg_arr, tc_arr


def lstm_bwd(double[:, ::1] x, double[:, ::1] h, double[:, ::1] c,
             double[:, ::1] gi, double[:, ::1] gf, double[:, ::1] go,
             double[:, ::1] gg, double[:, ::1] tc,
             double[:, ::1] wi, double[:, ::1] wf, double[:, ::1] wo, double[:, ::1] wg,
             double[:, ::1] ui, double[:, ::1] uf, double[:, ::1] uo, double[:, ::1] ug,
             double[:, ::1] dh_new, double[:, ::1] dc_new):
    cdef Py_ssize_t n = x.shape[0], cc = x.shape[1], u = h.shape[1]
    dsi_arr = np.empty((n, u)); dsf_arr = np.empty((n, u))
    dso_arr = np.empty((n, u)); dsg_arr = np.empty((n, u))
    dc_prev_arr = np.empty((n, u))
    dx_arr = np.empty((n, cc)); dh_arr = np.empty((n, u))
    cdef double[:, ::1] dsi = dsi_arr, dsf = dsf_arr, dso = dso_arr, dsg = dsg_arr
    cdef double[:, ::1] dc_prev = dc_prev_arr, dx = dx_arr, dh = dh_arr
    cdef Py_ssize_t i, j
    cdef double dc
    for i in range(n):
        for j in range(u):
            dso[i, j] = dh_new[i, j] * tc[i, j] * go[i, j] * (1.0 - go[i, j])
            dc = dh_new[i, j] * go[i, j] * (1.0 - tc[i, j] * tc[i, j]) + dc_new[i, j]
            dsi[i, j] = dc * gg[i, j] * gi[i, j] * (1.0 - gi[i, j])
            dsf[i, j] = dc * c[i, j] * gf[i, j] * (1.0 - gf[i, j])
            dsg[i, j] = dc * gi[i, j] * (1.0 - gg[i, j] * gg[i, j])
            dc_prev[i, j] = dc * gf[i, j]
    _matmul_bt(dsi, wi, dx)
    _matmul_bt_acc(dsf, wf, dx)
    _matmul_bt_acc(dso, wo, dx)
    _matmul_bt_acc(dsg, wg, dx)
    _matmul_bt(dsi, ui, dh)
    _matmul_bt_acc(dsf, uf, dh)
    _matmul_bt_acc(dso, uo, dh)
    _matmul_bt_acc(dsg, ug, dh)

    dwi_arr = np.empty((cc, u)); dwf_arr = np.empty((cc, u))
    dwo_arr = np.empty((cc, u)); dwg_arr = np.empty((cc, u))
    dui_arr = np.empty((u, u)); duf_arr = np.empty((u, u))
    duo_arr = np.empty((u, u)); dug_arr = np.empty((u, u))
    dbi_arr = np.empty(u); dbf_arr = np.empty(u); dbo_arr = np.empty(u); dbg_arr = np.empty(u)
    cdef double[:, ::1] dwi = dwi_arr, dwf = dwf_arr, dwo = dwo_arr, dwg = dwg_arr
    cdef double[:, ::1] dui = dui_arr, duf = duf_arr, duo = duo_arr, dug = dug_arr
    cdef double[::1] dbi = dbi_arr, dbf = dbf_arr, dbo = dbo_arr, dbg = dbg_arr
    _matmul_at(x, dsi, dwi)
    _matmul_at(x, dsf, dwf)
    _matmul_at(x, dso, dwo)
    _matmul_at(x, dsg, dwg)
    _matmul_at(h, dsi, dui)
    _matmul_at(h, dsf, duf)
    _matmul_at(h, dso, duo)
    _matmul_at(h, dsg, dug)
    _colsum(dsi, dbi)
    _colsum(dsf, dbf)
    _colsum(dso, dbo)
    _colsum(dsg, dbg)
    return (dx_arr, dh_arr, dc_prev_arr, dwi_arr, dwf_arr, dwo_arr, dwg_arr,
            dui_arr, duf_arr, duo_arr, dug_arr, dbi_arr, dbf_arr, dbo_arr, dbg_arr)


def softmax_fwd(double[:, ::1] logits):
    cdef Py_ssize_t n = logits.shape[0], m = logits.shape[1]
    probs_arr = np.empty((n, m))
    cdef double[:, ::1] probs = probs_arr
    cdef Py_ssize_t i, j
    cdef double mx, acc
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, m):
            if logits[i, j] > mx:
                mx = logits[i, j]
        acc = 0.0
        for j in range(m):
            probs[i, j] = exp(logits[i, j] - mx)
            acc += probs[i, j]
        for j in range(m):
            probs[i, j] /= acc
    return probs_arr


def xent_fwd(double[:, ::1] probs, double[:, ::1] onehot):
    cdef Py_ssize_t n = probs.shape[0], m = probs.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, p
    for i in range(n):
        for j in range(m):
            if onehot[i, j] != 0.0:
                p = probs[i, j]
                if p < 1e-12:
                    p = 1e-12
                acc -= onehot[i, j] * log(p)
    return acc / n


def softmax_xent_bwd(double[:, ::1] probs, double[:, ::1] onehot):
    cdef Py_ssize_t n = probs.shape[0], m = probs.shape[1]
    dl_arr = np.empty((n, m))
    cdef double[:, ::1] dl = dl_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            dl[i, j] = (probs[i, j] - onehot[i, j]) / n
    return dl_arr


def dropout_fwd(double[:, ::1] x, double[:, ::1] mask, double scale):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    y_arr = np.empty((n, m))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            y[i, j] = x[i, j] * mask[i, j] * scale
    return y_arr


def dropout_bwd(double[:, ::1] dy, double[:, ::1] mask, double scale):
    cdef Py_ssize_t n = dy.shape[0], m = dy.shape[1]
    dx_arr = np.empty((n, m))
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            dx[i, j] = dy[i, j] * mask[i, j] * scale
    return dx_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double bc1 = 1.0 - pow(beta1, t)
    cdef double bc2 = 1.0 - pow(beta2, t)
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / bc1
        vhat = v[i] / bc2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
