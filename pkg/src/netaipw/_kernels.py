"""Compiled inner loops: Gibbs sweeps and local-neighborhood enumeration.

All kernels consume pre-drawn uniforms so that numpy's Generator stays the
single source of randomness.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def covariate_sweep(L, indptr, indices, tau, rho, nu, u):
    """One ascending sweep over nodes, resampling ``L[i, 0..p-1]`` in order."""
    n, p = L.shape
    sums = np.zeros(p)
    c = 0
    for i in range(n):
        for l in range(p):
            sums[l] = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            j = indices[t]
            for l in range(p):
                sums[l] += L[j, l]
        for k in range(p):
            z = tau[k]
            for l in range(p):
                if l != k:
                    z += rho[k, l] * L[i, l]
                z += nu[k, l] * sums[l]
            L[i, k] = 1 if u[c] < _expit(z) else 0
            c += 1


@njit(cache=True)
def autologistic_sweep(x, static, coupling, indptr, indices, u):
    """Ascending sweep of ``x_i ~ Bern(expit(static_i + coupling * sum_j x_j))``."""
    n = x.shape[0]
    for i in range(n):
        s = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            s += x[indices[t]]
        x[i] = 1 if u[i] < _expit(static[i] + coupling * s) else 0


@njit(cache=True)
def autologistic_rb_mean(x, static, coupling, indptr, indices, burn, keep, u):
    """Run ``burn + keep`` sweeps and return the per-node average of the full
    conditional success probability over the kept sweeps (Rao-Blackwellized).

    ``x`` is updated in place; ``u`` holds ``(burn + keep) * n`` uniforms.
    """
    n = x.shape[0]
    acc = np.zeros(n)
    c = 0
    for sweep in range(burn + keep):
        for i in range(n):
            s = 0.0
            for t in range(indptr[i], indptr[i + 1]):
                s += x[indices[t]]
            p = _expit(static[i] + coupling * s)
            if sweep >= burn:
                acc[i] += p
            x[i] = 1 if u[c] < p else 0
            c += 1
    if keep > 0:
        for i in range(n):
            acc[i] /= keep
    return acc


@njit(cache=True)
def local_partition(h, pair_i, pair_j, coupling):
    """Enumerate all ``2^m`` configurations of a local block.

    Energy of a configuration ``a`` is ``sum_k a_k h_k + coupling * sum_pairs
    a_p a_q``. Returns ``(log Z, marginals, E[sum_pairs a_p a_q])``.
    """
    m = h.shape[0]
    npairs = pair_i.shape[0]
    total = 1 << m
    energies = np.empty(total)
    for code in range(total):
        e = 0.0
        for k in range(m):
            if (code >> k) & 1:
                e += h[k]
        for q in range(npairs):
            if ((code >> pair_i[q]) & 1) and ((code >> pair_j[q]) & 1):
                e += coupling
        energies[code] = e
    mx = energies.max()
    z = 0.0
    for code in range(total):
        energies[code] = np.exp(energies[code] - mx)
        z += energies[code]
    marg = np.zeros(m)
    epair = 0.0
    for code in range(total):
        w = energies[code] / z
        for k in range(m):
            if (code >> k) & 1:
                marg[k] += w
        cnt = 0
        for q in range(npairs):
            if ((code >> pair_i[q]) & 1) and ((code >> pair_j[q]) & 1):
                cnt += 1
        epair += w * cnt
    return mx + np.log(z), marg, epair


@njit(cache=True)
def local_gibbs_hits(h, nbr_ptr, nbr_idx, coupling, target, x0, sweeps, u):
    """Gibbs-sample a local block and record whether each sweep ends at ``target``.

    ``nbr_ptr``/``nbr_idx`` give within-block neighbors in local indexing.
    """
    m = h.shape[0]
    x = x0.copy()
    hits = np.zeros(sweeps, dtype=np.int8)
    c = 0
    for s in range(sweeps):
        for k in range(m):
            acc = h[k]
            for t in range(nbr_ptr[k], nbr_ptr[k + 1]):
                acc += coupling * x[nbr_idx[t]]
            x[k] = 1 if u[c] < _expit(acc) else 0
            c += 1
        same = 1
        for k in range(m):
            if x[k] != target[k]:
                same = 0
                break
        hits[s] = same
    return hits


@njit(cache=True)
def observed_block_logprob(s_ptr, s_idx, p_ptr, pair_i, pair_j, G, T, A, coupling, cap):
    """Log-probability of the observed treatments on every node's block.

    Block ``b`` holds nodes ``s_idx[s_ptr[b]:s_ptr[b+1]]`` with within-block
    pairs ``pair_i/pair_j`` (local indices). ``T`` is each node's treated
    pair-neighbor count over the whole graph, so the out-of-block part of the
    field is ``T - (in-block treated pair-neighbors)``. Blocks above ``cap``
    get NaN. Returns ``(logp, marginals, boundary, epair, obs_pairs)``.
    """
    nb = s_ptr.shape[0] - 1
    logp = np.full(nb, np.nan)
    epair = np.full(nb, np.nan)
    obs_pairs = np.zeros(nb)
    marg = np.full(s_idx.shape[0], np.nan)
    bnd = np.zeros(s_idx.shape[0])
    for b in range(nb):
        lo = s_ptr[b]
        m = s_ptr[b + 1] - lo
        plo = p_ptr[b]
        np_ = p_ptr[b + 1] - plo
        inside = np.zeros(m)
        cnt = 0.0
        for q in range(np_):
            u = pair_i[plo + q]
            v = pair_j[plo + q]
            inside[u] += A[s_idx[lo + v]]
            inside[v] += A[s_idx[lo + u]]
            if A[s_idx[lo + u]] == 1 and A[s_idx[lo + v]] == 1:
                cnt += 1.0
        obs_pairs[b] = cnt
        h = np.empty(m)
        for k in range(m):
            node = s_idx[lo + k]
            bnd[lo + k] = T[node] - inside[k]
            h[k] = G[node] + coupling * bnd[lo + k]
        if m > cap:
            continue
        logz, mg, ep = local_partition(h, pair_i[plo:plo + np_], pair_j[plo:plo + np_],
                                       coupling)
        e = coupling * cnt
        for k in range(m):
            marg[lo + k] = mg[k]
            if A[s_idx[lo + k]] == 1:
                e += h[k]
        logp[b] = e - logz
        epair[b] = ep
    return logp, marg, bnd, epair, obs_pairs
