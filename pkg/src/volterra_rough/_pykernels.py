"""Pure-Python (numpy) implementations of the hot sweep kernels.

Mirrors ``_ckernels.pyx`` function by function.  Ties in every max
reduction resolve to the first tuple in lexicographic order;
NaN ratios (0/0 on degenerate tuples) are skipped.
"""

from __future__ import annotations

import itertools

import numpy as np

BACKEND_NAME = "python"


def _k(family, power, tau, r):
    gap = tau - r
    if family == 1:
        return np.ones_like(gap)
    out = gap ** (-power)
    if family == 2:
        out = out * np.exp(-gap)
    return out


# ratios within this relative gap of the maximum count as ties; both backends
# round pow differently, so exact ties in theory arrive a few ulps apart
TIE_RTOL = 1e-12


def _argmax_first(v):
    if v.size == 0:
        return 0.0, -1
    j = int(np.argmax(v))
    return float(v[j]), j


def _drop_nan(r):
    # 0/0 on degenerate tuples carries no information about the sup
    return np.where(np.isnan(r), -np.inf, r)


def _first_near(v, m):
    """First index with ``v >= m (1 - TIE_RTOL)``, or -1."""
    hit = np.flatnonzero(v >= m * (1.0 - TIE_RTOL))
    return int(hit[0]) if hit.size else -1


def kernel_audit(family, power, gamma, pts, etas, betas, band):
    """Sweep ``s < r < q < tau`` for the five kernel bounds.

    Returns ``(vals, idx, skipped, n_tuples)`` where ``vals[i]`` holds one
    constant per swept exponent and ``idx[i]`` the attaining index tuples.
    """
    n = pts.size
    combos = np.asarray(list(itertools.combinations(range(n), 4)), dtype=np.int64).reshape(-1, 4)
    s, r, q, tau = (pts[combos[:, i]] for i in range(4))
    keep = (tau - r) >= band
    skipped = int(np.count_nonzero(~keep))
    combos = combos[keep]
    s, r, q, tau = s[keep], r[keep], q[keep], tau[keep]
    k_tr = _k(family, power, tau, r)
    k_qr = _k(family, power, q, r)
    k_ts = _k(family, power, tau, s)
    k_qs = _k(family, power, q, s)
    d2 = np.abs(k_tr - k_qr)
    d3 = np.abs(k_tr - k_ts)
    d4 = np.abs(k_tr - k_qr - k_ts + k_qs)
    ratios = [[np.abs(k_tr) * (tau - r) ** gamma]]
    ratios.append([d2 / ((q - r) ** (-gamma - e) * (tau - q) ** e) for e in etas])
    ratios.append([d3 / ((tau - r) ** (-gamma - e) * (r - s) ** e) for e in etas])
    ratios.append([d4 / ((q - r) ** (-gamma - b) * (r - s) ** b) for b in betas])
    ratios.append([d4 / ((q - r) ** (-gamma - e) * (tau - q) ** e) for e in etas])
    vals, idx = [], []
    for group in ratios:
        gv = np.zeros(len(group))
        gi = np.full((len(group), 4), -1, dtype=np.int64)
        for j, v in enumerate(group):
            m, a = _argmax_first(v)
            gv[j] = m
            if a >= 0:
                gi[j] = combos[a]
        vals.append(gv)
        idx.append(gi)
    return vals, idx, skipped, int(combos.shape[0])


def _min_form(b, c, e, alpha, gamma, zeta):
    """``[b**(-gamma-zeta) * c**alpha] ^ e**(alpha-gamma-zeta)``; ``b == 0`` keeps only the second branch."""
    with np.errstate(divide="ignore"):
        first = np.where(b > 0, np.where(b > 0, b, 1.0) ** (-gamma - zeta) * c**alpha, np.inf)
    return np.minimum(first, e ** (alpha - gamma - zeta))


def max_ratio_1(values, b, c, e, alpha, gamma):
    """Max of ``values / ([b**-gamma c**alpha] ^ e**(alpha-gamma))`` and its first argmax."""
    if values.size == 0:
        return 0.0, -1
    with np.errstate(divide="ignore", invalid="ignore"):
        r = _drop_nan(values / _min_form(b, c, e, alpha, gamma, 0.0))
    m = float(np.max(r))
    return m, _first_near(r, m)


def max_ratio_h(values, a, b, c, e, alpha, gamma, etas, zetas):
    """Max of ``values / h_{eta,zeta}`` over tuples and the sweep.

    ``h = a**eta * b**(zeta-eta) * ([b**(-gamma-zeta) c**alpha] ^ e**(alpha-gamma-zeta))``
    where ``a`` is the gap of the moving arguments, ``b`` the distance from
    the smallest upper argument to ``t``, ``c = t - s`` and ``e`` the
    distance from the smallest upper argument to ``s``.  Returns
    ``(max, tuple_index, eta_index, zeta_index)``.
    """
    if values.size == 0:
        return 0.0, -1, -1, -1

    def ratios():
        for iz, z in enumerate(zetas):
            mf = _min_form(b, c, e, alpha, gamma, z)
            for ie, eta in enumerate(etas):
                with np.errstate(divide="ignore", invalid="ignore"):
                    r = values / (a**eta * b ** (z - eta) * mf)
                yield ie, iz, _drop_nan(r)

    best = max(float(np.max(r)) for _, _, r in ratios())
    # near-ties resolve lexicographically: tuple first, then eta, then zeta
    keys = [(_first_near(r, best), ie, iz) for ie, iz, r in ratios()]
    keys = [k for k in keys if k[0] >= 0]
    if not keys:
        return best, -1, -1, -1
    key = min(keys)
    return best, key[0], key[1], key[2]
