"""Pure-numpy versions of the hot loops; used when the compiled extension is
unavailable or disabled with ``ADAPTIVE_LQR_PURE=1``.

Signatures and semantics match ``_kernels.pyx`` exactly.
"""
import numpy as np


def rollout(a, b, l, q, r, noise, states, inputs, costs, gram, cross, accumulate, limit):
    """Run ``x(t+1) = A x + B L x + w(t+1)`` over ``len(noise)`` steps.

    ``states[0]`` must hold the initial state; rows ``1..T`` are filled. When
    ``accumulate`` is true the regressor ``z = [x; u]`` statistics are added
    into ``gram`` and ``cross`` in place. Returns ``(steps, diverged)``.
    """
    p = a.shape[0]
    steps = noise.shape[0]
    for i in range(steps):
        x = states[i]
        u = l @ x
        inputs[i] = u
        costs[i] = x @ q @ x + u @ r @ u
        x_next = a @ x + b @ u + noise[i]
        states[i + 1] = x_next
        if accumulate:
            z = np.concatenate((x, u))
            gram += np.outer(z, z)
            cross += np.outer(x_next, z)
        norm = np.sqrt(x_next @ x_next)
        if not norm <= limit:
            return i + 1, True
    return steps, False


def decompose_terms(a0, b0, lstar, k, m, states, inputs, noise):
    """Exact regret decomposition terms for the first ``n = len(inputs)`` steps.

    Returns ``(z, s, t, z_zeta, zs_xi)``: ``z`` from the defining double sum
    (evaluated by a backward recursion), ``s`` and ``t`` from their defining
    sums, ``z_zeta`` the same ``Z`` through the ``(K - K_j) xi_j`` form, and
    ``zs_xi = sum_k w(k)' K xi_k``.
    """
    n = inputs.shape[0]
    p = a0.shape[0]
    d = a0 + b0 @ lstar
    dev = inputs[:n] - states[:n] @ lstar.T  # (L_k - L*) x(k)
    bdev = dev @ b0.T  # Delta_k x(k)

    xi = np.zeros((n + 1, p))
    for j in range(1, n + 1):
        xi[j] = d @ xi[j - 1] + 2.0 * bdev[j - 1]
    zs_xi = 0.0
    for j in range(1, n + 1):
        zs_xi += noise[j - 1] @ k @ xi[j]

    kj = k.copy()
    g = np.zeros(p)
    s = t = z = z_zeta = 0.0
    for i in range(n - 1, -1, -1):
        x = states[i]
        dk = a0 @ x + b0 @ inputs[i]
        dx = d @ x
        s += dx @ kj @ dx - dk @ kj @ dk
        t += dev[i] @ m @ dev[i]
        kj = d.T @ kj @ d
        if i >= 1:
            w = noise[i - 1]
            gap = k - kj
            g = gap @ w + d.T @ g
            z += 2.0 * (bdev[i - 1] @ g)
            z_zeta += (gap @ xi[i]) @ w
    return z, s, t, z_zeta, zs_xi
