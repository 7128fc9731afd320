"""Pure Python/numpy versions of the compiled kernels.

The function signatures mirror ``_kernels.pyx`` exactly; ``qtherm._backend``
picks whichever is importable.
"""
import math

import numpy as np

MAX_QL_SWEEPS = 60


def householder_tridiag(a):
    """Reduce a Hermitian matrix to real symmetric tridiagonal form.

    Returns (d, e, Q) with a = Q T Q^H, T = tridiag(e, d, e), e real >= 0.
    """
    a = np.array(a, dtype=np.complex128, copy=True)
    n = a.shape[0]
    q = np.eye(n, dtype=np.complex128)
    for k in range(n - 2):
        x = a[k + 1:, k]
        alpha = np.sqrt(np.vdot(x, x).real)
        if alpha == 0.0:
            continue
        x0 = x[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        vn = np.sqrt(np.vdot(v, v).real)
        if vn == 0.0:
            continue
        v /= vn
        # a <- H a H with H = 1 - 2 v v^H acting on rows/cols k+1:
        sub = a[k + 1:, :]
        sub -= 2.0 * np.outer(v, v.conj() @ sub)
        sub = a[:, k + 1:]
        sub -= 2.0 * np.outer(sub @ v, v.conj())
        qs = q[:, k + 1:]
        qs -= 2.0 * np.outer(qs @ v, v.conj())
    d = a.diagonal().real.copy()
    off = np.array([a[k + 1, k] for k in range(n - 1)], dtype=np.complex128)
    # diagonal phase gauge makes the off-diagonal real and nonnegative
    phases = np.ones(n, dtype=np.complex128)
    e = np.abs(off)
    for k in range(n - 1):
        if e[k] > 0:
            phases[k + 1] = phases[k] * off[k] / e[k]
        else:
            phases[k + 1] = phases[k]
    q = q * phases[None, :]
    return d, e, q


def tql_implicit(d, e, z):
    """Implicit QL with Wilkinson-type shifts on a real symmetric tridiagonal.

    ``d`` (n) and ``e`` (n-1) are consumed; rotations are accumulated into the
    columns of ``z`` in place. Returns the eigenvalues (unsorted).
    """
    n = d.shape[0]
    d = np.array(d, dtype=np.float64, copy=True)
    ee = np.zeros(n)
    ee[: n - 1] = e
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(ee[m]) <= 2.2e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > MAX_QL_SWEEPS:
                raise RuntimeError("QL iteration did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * ee[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + ee[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * ee[i]
                b = c * ee[i]
                r = math.hypot(f, g)
                ee[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    ee[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * zi1
                z[:, i] = c * z[:, i] - s * zi1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            ee[l] = g
            ee[m] = 0.0
    return d


def tridiag_ql_eigh(a):
    """Eigen-decomposition of a Hermitian matrix, ascending eigenvalues."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[0]
    if n == 1:
        return a.real.diagonal().copy(), np.ones((1, 1), dtype=np.complex128)
    d, e, q = householder_tridiag(a)
    z = q.copy()
    w = tql_implicit(d, e, z)
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(z[:, order])


def sample_paths(s_ops, rho_vec, dim, uniforms):
    """Sequential outcome sampling for a repeated-measurement process.

    ``s_ops`` has shape (m, D, D) with D = dim**2 (Schroedinger-picture
    superoperators, column-stacked), ``rho_vec`` the vectorized initial state,
    ``uniforms`` an (N, n) array in [0, 1). Returns (labels, logp) where logp
    is the log-probability of each sampled word.
    """
    s_ops = np.asarray(s_ops, dtype=np.complex128)
    m = s_ops.shape[0]
    n_traj, n = uniforms.shape
    diag = np.arange(dim) * (dim + 1)
    labels = np.empty((n_traj, n), dtype=np.int64)
    logp = np.zeros(n_traj)
    # batched over trajectories: state vectors (N, D)
    v = np.tile(np.asarray(rho_vec, dtype=np.complex128), (n_traj, 1))
    rows = np.arange(n_traj)
    for k in range(n):
        cand = np.einsum("aij,nj->nai", s_ops, v)
        probs = cand[:, :, diag].sum(axis=2).real
        probs = np.clip(probs, 0.0, None)
        tot = probs.sum(axis=1)
        cum = np.cumsum(probs, axis=1)
        target = uniforms[:, k] * tot
        lab = (cum <= target[:, None]).sum(axis=1)
        lab = np.minimum(lab, m - 1)
        # never pick a zero-probability outcome because of round-off
        for r in np.nonzero(probs[rows, lab] <= 0.0)[0]:
            lab[r] = int(np.argmax(probs[r] > 0.0))
        p = probs[rows, lab]
        labels[:, k] = lab
        logp += np.log(p)
        v = cand[rows, lab, :] / p[:, None]
    return labels, logp
