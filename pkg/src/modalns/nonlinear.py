"""Modal advection via exact trigonometric convolution.

Products of two truncated theta-series are formed coefficient by
coefficient from

    cos p cos q = (cos(p+q) + cos(p-q)) / 2
    sin p sin q = (cos(p-q) - cos(p+q)) / 2
    sin p cos q = (sin(p+q) + sin(p-q)) / 2

and everything above mode K is dropped.  A slot that receives only products
of zeros stays exactly zero, which is what makes parity classes survive the
time loop bit for bit.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numba import njit

from .fields import (R, T, Z, ModalScalarField, ModalVectorField, theta_derivative_vector,
                     vector_ddr, vector_ddz)


@njit(cache=True, nogil=True)
def _convolve_kernel(ac, as_, bc, bs, live_a, live_b, oc, os_):
    nb, k1, m = ac.shape
    for b in range(nb):
        for p in range(k1):
            for q in range(k1):
                if not (live_a[b, p] and live_b[b, q]):
                    continue  # every product of this pair is zero
                n1, n2 = p + q, abs(p - q)
                for i in range(m):
                    cc = ac[b, p, i] * bc[b, q, i]
                    ss = as_[b, p, i] * bs[b, q, i]
                    sc = as_[b, p, i] * bc[b, q, i]
                    cs = ac[b, p, i] * bs[b, q, i]
                    if n1 < k1:
                        oc[b, n1, i] += 0.5 * (cc - ss)
                        if n1 > 0:
                            os_[b, n1, i] += 0.5 * (sc + cs)
                    oc[b, n2, i] += 0.5 * (cc + ss)
                    if p > q:
                        os_[b, n2, i] += 0.5 * (sc - cs)
                    elif q > p:
                        os_[b, n2, i] += 0.5 * (cs - sc)


def convolve_stacks(ac, as_, bc, bs) -> tuple[np.ndarray, np.ndarray]:
    """Product of two modal stacks indexed ``[..., k, :, :]`` on axis ``-3``.

    Leading axes broadcast.  Each output point accumulates its ``(p, q)``
    pairs in a fixed order, so the result is deterministic.
    """
    shape = np.broadcast_shapes(ac.shape, as_.shape, bc.shape, bs.shape)
    k1 = shape[-3]
    flat = (-1, k1, shape[-2] * shape[-1])
    ins = [np.ascontiguousarray(np.broadcast_to(x, shape), dtype=float).reshape(flat)
           for x in (ac, as_, bc, bs)]
    live_a = (ins[0] != 0).any(axis=2) | (ins[1] != 0).any(axis=2)
    live_b = (ins[2] != 0).any(axis=2) | (ins[3] != 0).any(axis=2)
    oc, os_ = np.zeros_like(ins[0]), np.zeros_like(ins[0])
    _convolve_kernel(*ins, live_a, live_b, oc, os_)
    return oc.reshape(shape), os_.reshape(shape)


def convolve_modes(a: ModalScalarField, b: ModalScalarField) -> ModalScalarField:
    if a.grid != b.grid or a.K != b.K:
        raise ValueError("operands must share grid and K")
    c, s = convolve_stacks(a.cos, a.sin, b.cos, b.sin)
    return ModalScalarField(a.grid, c, s)


def advect(u: ModalVectorField, w: ModalVectorField) -> ModalVectorField:
    """Modal coefficients of ``(u . grad) w`` in cylindrical components.

    The theta term uses the basis-rotating derivative of ``w``, which
    supplies ``-u^th w^th / r`` on e_r and ``+u^th w^r / r`` on e_theta.
    """
    if u.grid != w.grid or u.K != w.K:
        raise ValueError("operands must share grid and K")
    inv_r = 1.0 / u.grid.rr
    a_c = np.stack([u.cos[R], u.cos[T] * inv_r, u.cos[Z]])[:, None]
    a_s = np.stack([u.sin[R], u.sin[T] * inv_r, u.sin[Z]])[:, None]
    dr_w, dt_w, dz_w = vector_ddr(w), theta_derivative_vector(w), vector_ddz(w)
    b_c = np.stack([dr_w.cos, dt_w.cos, dz_w.cos])
    b_s = np.stack([dr_w.sin, dt_w.sin, dz_w.sin])
    oc, os_ = convolve_stacks(a_c, a_s, b_c, b_s)
    cos = oc[0] + oc[1] + oc[2]
    sin = os_[0] + os_[1] + os_[2]
    return ModalVectorField(u.grid, cos, sin)


def hierarchy_forcing(h, n: int) -> ModalVectorField:
    """``-sum_{i=1}^{n-1} advect(u_i, u_{n-i})`` over profile orders.

    ``h`` is a profile hierarchy or a plain sequence of fields indexed by
    order.
    """
    orders: Sequence[ModalVectorField] = getattr(h, "orders", h)
    if n < 1:
        raise ValueError("forcing is defined for orders n >= 1")
    if len(orders) < n:
        raise ValueError(f"hierarchy holds orders 0..{len(orders) - 1}; order {n - 1} needed")
    ref = orders[0]
    out = ModalVectorField.zeros(ref.grid, ref.K)
    for i in range(1, n):
        out = out - advect(orders[i], orders[n - i])
    return out
