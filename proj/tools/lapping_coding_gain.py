#!/usr/bin/env python3
"""Regenerate the 4-point lapping constants in include/dkf/transform.hpp.

Fits the butterfly / scale / two-lift structure for maximum coding gain of
an AR(1) source (rho = 0.95) under 4-point DCT blocks, then rounds every
constant to 1/64.  Lapping at every block edge is modelled on a circular
signal so each block sees a prefilter on both of its edges.

    python3 tools/lapping_coding_gain.py
"""

import numpy as np
from scipy.optimize import minimize

N = 4
RHO = 0.95
BLOCKS = 4


def dct_matrix(n):
    c = np.zeros((n, n))
    for k in range(n):
        for i in range(n):
            c[k, i] = np.sqrt((1 if k == 0 else 2) / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    return c


def prefilter(s0, s1, p, q):
    def f(x):
        t3 = x[0] - x[3]
        t2 = x[1] - x[2]
        t1 = x[1] - t2 / 2
        t0 = x[0] - t3 / 2
        t2 *= s0
        t3 *= s1
        t3 += t2 * p
        t2 += t3 * q
        t0 += t3 / 2
        t1 += t2 / 2
        return np.array([t0, t1, t1 - t2, t0 - t3])

    return np.array([f(e) for e in np.eye(4)]).T


def coding_gain(pre):
    m = N * BLOCKS
    a = np.eye(m)
    for b in range(BLOCKS):
        idx = [(b * N - 2 + i) % m for i in range(4)]
        step = np.eye(m)
        step[np.ix_(idx, idx)] = pre
        a = step @ a
    t = np.kron(np.eye(BLOCKS), dct_matrix(N)) @ a
    r = np.array([[RHO ** min(abs(i - j), m - abs(i - j)) for j in range(m)] for i in range(m)])
    s = np.linalg.inv(t)
    # Subband variance weighted by the synthesis basis norm (biorthogonal gain).
    w = np.diag(t @ r @ t.T)[:N] * np.sum(s[:, :N] ** 2, axis=0)
    return -10 * np.log10(np.exp(np.mean(np.log(w))))


def main():
    res = minimize(lambda v: -coding_gain(prefilter(*v)), [1.3, 1.2, -0.2, 0.5], method="Nelder-Mead",
                   options={"maxiter": 4000, "xatol": 1e-6, "fatol": 1e-9})
    q64 = np.round(res.x * 64).astype(int)
    print(f"unlapped DCT gain      {coding_gain(np.eye(4)):.3f} dB")
    print(f"optimum (real)         {-res.fun:.3f} dB at s0={res.x[0]:.4f} s1={res.x[1]:.4f} p={res.x[2]:.4f} q={res.x[3]:.4f}")
    print(f"rounded to 1/64        {coding_gain(prefilter(*(q64 / 64))):.3f} dB")
    print(f"kLapS0 = {q64[0]}; kLapS1 = {q64[1]}; kLapP = {q64[2]}; kLapQ = {q64[3]};")


if __name__ == "__main__":
    main()
