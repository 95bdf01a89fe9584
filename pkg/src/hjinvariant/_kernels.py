"""Hot sweep kernels for the grid solvers.

Every kernel performs one Jacobi sweep: it reads the previous iterate and
writes a fresh array, so per-node work is independent and results are
bit-identical for any thread count (the only cross-node reductions are
max-type, which are exact under any evaluation order).
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from numba import njit, prange

__all__ = ["sl_sweep", "fd_sweep_affine", "fd_sweep_sampled"]


@njit(parallel=True, cache=True)
def sl_sweep(values, out, obstacle, corner_idx, corner_w, n_dist, n_ctrl, beta, lower):
    """One semi-Lagrangian sweep.

    corner_idx/corner_w have shape (n_dist*n_ctrl, K, N): per action combo,
    the K multilinear stencil corners of each node's foot point.  Combos are
    laid out disturbance-major.  Returns (sup residual, min nodewise delta).
    """
    n_nodes = values.shape[0]
    n_corners = corner_idx.shape[1]
    res = 0.0
    min_delta = 1e300
    for node in prange(n_nodes):
        if lower:
            opt = -1e300
            for kd in range(n_dist):
                inner = 1e300
                for ku in range(n_ctrl):
                    c = kd * n_ctrl + ku
                    acc = 0.0
                    for k in range(n_corners):
                        acc += corner_w[c, k, node] * values[corner_idx[c, k, node]]
                    if acc < inner:
                        inner = acc
                if inner > opt:
                    opt = inner
        else:
            opt = 1e300
            for ku in range(n_ctrl):
                inner = -1e300
                for kd in range(n_dist):
                    c = kd * n_ctrl + ku
                    acc = 0.0
                    for k in range(n_corners):
                        acc += corner_w[c, k, node] * values[corner_idx[c, k, node]]
                    if acc > inner:
                        inner = acc
                if inner < opt:
                    opt = inner
        cand = beta * opt
        h = obstacle[node]
        new = h if h > cand else cand
        out[node] = new
        delta = new - values[node]
        res = max(res, abs(delta))
        min_delta = min(min_delta, delta)
    return res, min_delta


@njit(parallel=True, cache=True)
def fd_sweep_affine(
    values, out, obstacle, drift, ctrl_mat, dist_mat,
    u_center, u_radius, d_center, d_radius,
    alpha, inv_dx, counts, strides, gamma, dt, pbar_buf,
):
    """One Lax-Friedrichs sweep with the closed-form affine Hamiltonian.

    drift: (N, n); ctrl_mat: (N, n, m); dist_mat: (N, n, l); alpha: (n, N)
    per-node dissipation bounds; pbar_buf: (N, n) scratch for the central
    difference gradients.  The affine Hamiltonian is identical for the
    sup-inf and inf-sup orderings, so there is no kind parameter.  Returns
    the sup-norm of the variational-inequality residual.
    """
    n_nodes = values.shape[0]
    n = counts.shape[0]
    m = ctrl_mat.shape[2]
    l = dist_mat.shape[2]
    res = 0.0
    for node in prange(n_nodes):
        v = values[node]
        ham = 0.0
        diss = 0.0
        for i in range(n):
            stride = strides[i]
            idx_i = (node // stride) % counts[i]
            # Zero-order ghost extension at faces: the missing neighbor
            # repeats the face value, keeping face dissipation active and the
            # sweep monotone.
            vm = values[node - stride] if idx_i > 0 else v
            vp = values[node + stride] if idx_i < counts[i] - 1 else v
            dm = (v - vm) * inv_dx[i]
            dp = (vp - v) * inv_dx[i]
            p = 0.5 * (dm + dp)
            pbar_buf[node, i] = p
            ham += p * drift[node, i]
            diss += 0.5 * alpha[i, node] * (dp - dm)
        for j in range(m):
            c = 0.0
            for i in range(n):
                c += pbar_buf[node, i] * ctrl_mat[node, i, j]
            ham += c * u_center[j] - abs(c) * u_radius[j]
        for j in range(l):
            e = 0.0
            for i in range(n):
                e += pbar_buf[node, i] * dist_mat[node, i, j]
            ham += e * d_center[j] + abs(e) * d_radius[j]
        hhat = ham + diss
        r1 = gamma * v - hhat
        r2 = v - obstacle[node]
        r = r1 if r1 < r2 else r2
        out[node] = v - dt * r
        res = max(res, abs(r))
    return res


@njit(parallel=True, cache=True)
def fd_sweep_sampled(
    values, out, obstacle, flow, n_dist, n_ctrl,
    alpha, inv_dx, counts, strides, gamma, dt, lower, pbar_buf,
):
    """One Lax-Friedrichs sweep with the sampled minimax Hamiltonian.

    flow: (n_dist*n_ctrl, N, n) precomputed f(x, u, d) per action combo,
    disturbance-major.  Returns the sup-norm of the VI residual.
    """
    n_nodes = values.shape[0]
    n = counts.shape[0]
    res = 0.0
    for node in prange(n_nodes):
        v = values[node]
        diss = 0.0
        for i in range(n):
            stride = strides[i]
            idx_i = (node // stride) % counts[i]
            vm = values[node - stride] if idx_i > 0 else v
            vp = values[node + stride] if idx_i < counts[i] - 1 else v
            dm = (v - vm) * inv_dx[i]
            dp = (vp - v) * inv_dx[i]
            pbar_buf[node, i] = 0.5 * (dm + dp)
            diss += 0.5 * alpha[i, node] * (dp - dm)
        if lower:
            ham = -1e300
            for kd in range(n_dist):
                inner = 1e300
                for ku in range(n_ctrl):
                    c = kd * n_ctrl + ku
                    val = 0.0
                    for i in range(n):
                        val += pbar_buf[node, i] * flow[c, node, i]
                    if val < inner:
                        inner = val
                if inner > ham:
                    ham = inner
        else:
            ham = 1e300
            for ku in range(n_ctrl):
                inner = -1e300
                for kd in range(n_dist):
                    c = kd * n_ctrl + ku
                    val = 0.0
                    for i in range(n):
                        val += pbar_buf[node, i] * flow[c, node, i]
                    if val > inner:
                        inner = val
                if inner < ham:
                    ham = inner
        hhat = ham + diss
        r1 = gamma * v - hhat
        r2 = v - obstacle[node]
        r = r1 if r1 < r2 else r2
        out[node] = v - dt * r
        res = max(res, abs(r))
    return res
