"""Pure-numpy LIF time-loop kernels (fallback for the compiled extension).

Both backends implement the same contract:

forward_seq(x, w1, b1, w2, b2, beta, theta, alpha, relaxed)
    x: float64 [steps x batch x in]. Unrolls two dense LIF layers over the
    sequence from zero state. Returns (s2, upre1, s1, upre2) where s2 is the
    output spike train [steps x batch x out] and the middle tensors are the
    recordings the backward pass needs. With relaxed=True the hard threshold
    is replaced by its smooth arctangent squashing, making the whole map
    differentiable.

backward_seq(x, s1, upre1, upre2, gy, w1, w2, beta, theta, alpha, relaxed)
    Reverse-time gradient accumulation given gy = dL/ds2 per step. In spiking
    mode the threshold derivative is the arctangent surrogate and the reset
    path is treated as constant; in relaxed mode the exact derivative of the
    smooth forward is propagated, reset path included. Returns
    (dw1, db1, dw2, db2).
"""

import numpy as np

_HALF_PI = 0.5 * np.pi


def surrogate_grad(x, alpha):
    """Arctangent spike-derivative stand-in: peak alpha/2 at x=0, even, vanishing tails."""
    z = _HALF_PI * alpha * x
    return (0.5 * alpha) / (1.0 + z * z)


def relaxed_spike(x, alpha):
    """Smooth threshold whose derivative is exactly ``surrogate_grad``."""
    return 0.5 + np.arctan(_HALF_PI * alpha * x) / np.pi


def forward_seq(x, w1, b1, w2, b2, beta, theta, alpha, relaxed):
    x = np.ascontiguousarray(x, dtype=np.float64)
    steps, batch, _ = x.shape
    nh = w1.shape[0]
    no = w2.shape[0]
    upre1 = np.empty((steps, batch, nh))
    s1 = np.empty((steps, batch, nh))
    upre2 = np.empty((steps, batch, no))
    s2 = np.empty((steps, batch, no))
    u1 = np.zeros((batch, nh))
    u2 = np.zeros((batch, no))
    w1t = w1.T
    w2t = w2.T
    for t in range(steps):
        up1 = beta * u1 + x[t] @ w1t + b1
        sp1 = relaxed_spike(up1 - theta, alpha) if relaxed \
            else (up1 >= theta).astype(np.float64)
        u1 = up1 - theta * sp1
        upre1[t] = up1
        s1[t] = sp1
        up2 = beta * u2 + sp1 @ w2t + b2
        sp2 = relaxed_spike(up2 - theta, alpha) if relaxed \
            else (up2 >= theta).astype(np.float64)
        u2 = up2 - theta * sp2
        upre2[t] = up2
        s2[t] = sp2
    return s2, upre1, s1, upre2


def backward_seq(x, s1, upre1, upre2, gy, w1, w2, beta, theta, alpha, relaxed):
    x = np.ascontiguousarray(x, dtype=np.float64)
    steps, batch, nin = x.shape
    nh = w1.shape[0]
    no = w2.shape[0]
    dw1 = np.zeros_like(w1)
    db1 = np.zeros(nh)
    dw2 = np.zeros_like(w2)
    db2 = np.zeros(no)
    lam1 = np.zeros((batch, nh))
    lam2 = np.zeros((batch, no))
    for t in range(steps - 1, -1, -1):
        d2 = surrogate_grad(upre2[t] - theta, alpha)
        mu2 = beta * lam2
        if relaxed:
            lam2 = mu2 * (1.0 - theta * d2) + gy[t] * d2
        else:
            lam2 = mu2 + gy[t] * d2
        dw2 += lam2.T @ s1[t]
        db2 += lam2.sum(axis=0)
        gs1 = lam2 @ w2
        d1 = surrogate_grad(upre1[t] - theta, alpha)
        mu1 = beta * lam1
        if relaxed:
            lam1 = mu1 * (1.0 - theta * d1) + gs1 * d1
        else:
            lam1 = mu1 + gs1 * d1
        dw1 += lam1.T @ x[t]
        db1 += lam1.sum(axis=0)
    return dw1, db1, dw2, db2
