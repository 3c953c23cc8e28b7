"""Pure-numpy network kernels (fallback backend).

Every function here has a twin in the compiled `_fastcore` extension with the
same signature and semantics. Inputs are float64 C-contiguous arrays; no
validation happens at this level (the ops layer owns contracts). Backward
passes return gradients for every differentiable input.
"""

import numpy as np

NAME = "python"


def affine_fwd(x, w, b):
    return x @ w + b


def affine_bwd(x, w, dy):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(y, dy):
    return np.where(y > 0.0, dy, 0.0)


def bn_train_fwd(x, gamma, beta, eps):
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    xhat = (x - mean) / np.sqrt(var + eps)
    return gamma * xhat + beta, mean, var, xhat


def bn_train_bwd(xhat, var, gamma, dy, eps):
    b = xhat.shape[0]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    inv_sd = 1.0 / np.sqrt(var + eps)
    dx = (inv_sd / b) * (b * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def bn_infer_fwd(x, gamma, beta, rmean, rvar, eps):
    return gamma * (x - rmean) / np.sqrt(rvar + eps) + beta


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_fwd(x, h, wz, wr, wh, uz, ur, uh, bz, br, bh):
    z = _sigmoid(x @ wz + h @ uz + bz)
    r = _sigmoid(x @ wr + h @ ur + br)
    cand = np.tanh(x @ wh + (r * h) @ uh + bh)
    h_new = (1.0 - z) * h + z * cand
    return h_new, z, r, cand


def gru_bwd(x, h, z, r, cand, wz, wr, wh, uz, ur, uh, dh_new):
    dsz = dh_new * (cand - h) * z * (1.0 - z)
    dsg = dh_new * z * (1.0 - cand * cand)
    dh = dh_new * (1.0 - z)

    dwh = x.T @ dsg
    dbh = dsg.sum(axis=0)
    drh = dsg @ uh.T
    duh = (r * h).T @ dsg
    dsr = drh * h * r * (1.0 - r)
    dh = dh + drh * r

    dwz = x.T @ dsz
    duz = h.T @ dsz
    dbz = dsz.sum(axis=0)
    dwr = x.T @ dsr
    dur = h.T @ dsr
    dbr = dsr.sum(axis=0)
    dh = dh + dsz @ uz.T + dsr @ ur.T
    dx = dsz @ wz.T + dsr @ wr.T + dsg @ wh.T
    return dx, dh, dwz, dwr, dwh, duz, dur, duh, dbz, dbr, dbh


def lstm_fwd(x, h, c, wi, wf, wo, wg, ui, uf, uo, ug, bi, bf, bo, bg):
    gi = _sigmoid(x @ wi + h @ ui + bi)
    gf = _sigmoid(x @ wf + h @ uf + bf)
    go = _sigmoid(x @ wo + h @ uo + bo)
    gg = np.tanh(x @ wg + h @ ug + bg)
    c_new = gf * c + gi * gg
    tc = np.tanh(c_new)
    h_new = go * tc
    return h_new, c_new, gi, gf, go, gg, tc


def lstm_bwd(x, h, c, gi, gf, go, gg, tc, wi, wf, wo, wg, ui, uf, uo, ug,
             dh_new, dc_new):
    dso = dh_new * tc * go * (1.0 - go)
    dc = dh_new * go * (1.0 - tc * tc) + dc_new
    dsi = dc * gg * gi * (1.0 - gi)
    dsf = dc * c * gf * (1.0 - gf)
    dsg = dc * gi * (1.0 - gg * gg)
    dc_prev = dc * gf

    dwi, dwf, dwo, dwg = x.T @ dsi, x.T @ dsf, x.T @ dso, x.T @ dsg
    dui, duf, duo, dug = h.T @ dsi, h.T @ dsf, h.T @ dso, h.T @ dsg
    dbi, dbf, dbo, dbg = dsi.sum(axis=0), dsf.sum(axis=0), dso.sum(axis=0), dsg.sum(axis=0)
    dx = dsi @ wi.T + dsf @ wf.T + dso @ wo.T + dsg @ wg.T
    dh = dsi @ ui.T + dsf @ uf.T + dso @ uo.T + dsg @ ug.T
    return (dx, dh, dc_prev, dwi, dwf, dwo, dwg, dui, duf, duo, dug,
            dbi, dbf, dbo, dbg)


def softmax_fwd(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def xent_fwd(probs, onehot):
    clipped = np.maximum(probs, 1e-12)
    return float(-(onehot * np.log(clipped)).sum() / probs.shape[0])


def softmax_xent_bwd(probs, onehot):
    return (probs - onehot) / probs.shape[0]


def dropout_fwd(x, mask, scale):
    return x * mask * scale


def dropout_bwd(dy, mask, scale):
    return dy * mask * scale


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """Bias-corrected Adam step, in place on flat p/m/v views."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
