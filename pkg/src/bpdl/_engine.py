"""Compiled event loops.

Two engines sample the same process:

* ``faithful_loop`` proposes events at the envelope rates
  ``C*gbar*N, mbar*N, abar*Ubar*N^2`` and thins them (fictitious events
  advance the clock only).
* ``indexed_loop`` draws directly from the exact rates
  ``sum gamma(x_i), sum mu(x_i), sum alpha(x_i) S_i`` where
  ``S_i = sum_j U(x_i, x_j)`` (self term included) is kept up to date through
  a cell list; individuals are picked from binary sum trees.

Both loops mutate the state arrays in place and return a status code so the
Python side can grow buffers or rebuild the cell grid and re-enter.
"""

import numba
import numpy as np

from .kernels import k_eval, k_sample, radial_pdf
from .rng import exponential, randint, uniform_open

REACHED, BUDGET, EXTINCT, NEED_CAP, NEED_LINEAGE, REBUILD, DISPERSAL_STUCK = range(7)
BIRTH, NDEATH, CDEATH, FICTITIOUS, LOST = range(5)
NO_EVENT = -1

# iscal slots
N_, NEXT_ID, BIRTHS, NDEATHS, CDEATHS, FICT, LOSTS, EVENTS, LIN_LEN = range(9)
# fscal slots
T_, T_NEXT = 0, 1
# flag slots
F_RECORD, F_CONST_G, F_CONST_M = 0, 1, 2

UNBOUNDED, TORUS, BOX, LATTICE = 0, 1, 2, 3
MAX_DISPERSAL_TRIES = 10_000_000


# ---------------------------------------------------------------------------
# domain helpers


@numba.njit(inline="always", cache=True)
def wrap(dom, x):
    mode = int(dom[0])
    if mode == TORUS or mode == LATTICE:
        d = int(dom[1])
        for k in range(d):
            L = dom[2 + k]
            x[k] = x[k] - L * np.floor((x[k] + 0.5 * L) / L)


@numba.njit(inline="always", cache=True)
def inside(dom, x):
    if int(dom[0]) != BOX:
        return True
    d = int(dom[1])
    for k in range(d):
        if x[k] < dom[2 + d + k] or x[k] > dom[2 + 2 * d + k]:
            return False
    return True


@numba.njit(inline="always", cache=True)
def displacement(dom, x, y, z):
    """z = y - x (minimal image on periodic domains)."""
    mode = int(dom[0])
    d = int(dom[1])
    for k in range(d):
        z[k] = y[k] - x[k]
        if mode == TORUS or mode == LATTICE:
            L = dom[2 + k]
            z[k] -= L * np.floor(z[k] / L + 0.5)


@numba.njit(inline="always", cache=True)
def pair_u(dom, Ukp, x, y, z):
    displacement(dom, x, y, z)
    return k_eval(Ukp, z)


# Row accessors.  Taking ``pos[i]`` inside a compiled loop creates a view whose
# reference counting dominates the cost of a kernel evaluation, so the hot
# paths index rows explicitly.


@numba.njit(inline="always", cache=True)
def pair_u_row(dom, Ukp, x, pos, j, z):
    """U between the point ``x`` and row ``j`` of ``pos``."""
    mode = int(dom[0])
    per = mode == TORUS or mode == LATTICE
    r2 = 0.0
    for k in range(x.shape[0]):
        w = pos[j, k] - x[k]
        if per:
            L = dom[2 + k]
            w -= L * np.floor(w / L + 0.5)
        r2 += w * w
    return Ukp[1] * radial_pdf(Ukp, r2)


@numba.njit(inline="always", cache=True)
def pair_u_rows(dom, Ukp, pos, i, j):
    mode = int(dom[0])
    per = mode == TORUS or mode == LATTICE
    r2 = 0.0
    for k in range(pos.shape[1]):
        w = pos[j, k] - pos[i, k]
        if per:
            L = dom[2 + k]
            w -= L * np.floor(w / L + 0.5)
        r2 += w * w
    return Ukp[1] * radial_pdf(Ukp, r2)


@numba.njit(inline="always", cache=True)
def copy_row(src, i, dst):
    for k in range(dst.shape[0]):
        dst[k] = src[i, k]


@numba.njit(inline="always", cache=True)
def move_row(a, src, dst):
    for k in range(a.shape[1]):
        a[dst, k] = a[src, k]


# ---------------------------------------------------------------------------
# rate fields: [d, n_1..n_d, lo_1..lo_d, h_1..h_d, values (C order)]


@numba.njit(inline="always", cache=True)
def field_at(f, x):
    d = int(f[0])
    idx = 0
    for k in range(d):
        n = int(f[1 + k])
        if n == 1:
            c = 0
        else:
            c = int(np.floor((x[k] - f[1 + d + k]) / f[1 + 2 * d + k]))
            if c < 0:
                c = 0
            elif c >= n:
                c = n - 1
        idx = idx * n + c
    return f[1 + 3 * d + idx]


@numba.njit(inline="always", cache=True)
def field_row(f, pos, i):
    d = int(f[0])
    idx = 0
    for k in range(d):
        n = int(f[1 + k])
        if n == 1:
            c = 0
        else:
            c = int(np.floor((pos[i, k] - f[1 + d + k]) / f[1 + 2 * d + k]))
            if c < 0:
                c = 0
            elif c >= n:
                c = n - 1
        idx = idx * n + c
    return f[1 + 3 * d + idx]


# ---------------------------------------------------------------------------
# dispersal


@numba.njit(cache=True)
def disperse(Dkp, Dtkp, C, dom, src, i, s, z, out):
    """Draw a seed location around row ``i`` of ``src`` by thinning the envelope.

    Returns (inside, tries); tries is -1 when the thinning got stuck.
    """
    d = src.shape[1]
    tries = 0
    while True:
        tries += 1
        k_sample(Dtkp, d, s, z)
        den = C * k_eval(Dtkp, z)
        if den > 0.0:
            acc = k_eval(Dkp, z) / den
            if acc >= 1.0 or uniform_open(s) < acc:
                break
        if tries >= MAX_DISPERSAL_TRIES:
            return False, -1
    for k in range(d):
        out[k] = src[i, k] + z[k]
    wrap(dom, out)
    return inside(dom, out), tries


# ---------------------------------------------------------------------------
# sum trees (leaves at P + i, node k = children 2k, 2k+1)


@numba.njit(inline="always", cache=True)
def tree_set(tree, i, w):
    P = tree.shape[0] // 2
    k = P + i
    tree[k] = w
    k //= 2
    while k >= 1:
        tree[k] = tree[2 * k] + tree[2 * k + 1]
        k //= 2


@numba.njit(cache=True)
def tree_pick(tree, u, n):
    P = tree.shape[0] // 2
    k = 1
    while k < P:
        left = tree[2 * k]
        if u < left:
            k = 2 * k
        else:
            u -= left
            k = 2 * k + 1
    i = k - P
    if i >= n or tree[P + i] <= 0.0:
        # rounding at the right edge of the cumulative sum
        i = n - 1
        while i > 0 and tree[P + i] <= 0.0:
            i -= 1
    return i


# ---------------------------------------------------------------------------
# cell grid: [d, periodic, n_1..n_d, lo_1..lo_d, h_1..h_d]


@numba.njit(cache=True)
def cell_of_point(grid, x):
    d = int(grid[0])
    periodic = grid[1] > 0
    idx = 0
    for k in range(d):
        n = int(grid[2 + k])
        c = int(np.floor((x[k] - grid[2 + d + k]) / grid[2 + 2 * d + k]))
        if n == 1:
            c = 0
        elif periodic:
            c = c % n
        elif c < 0 or c >= n:
            return -1
        idx = idx * n + c
    return idx


@numba.njit(cache=True)
def _neighbor_cell(grid, cell, off):
    """Cell reached from ``cell`` by per-axis offsets in {-1,0,1}; -1 if none."""
    d = int(grid[0])
    periodic = grid[1] > 0
    # decode cell multi-index (C order)
    rem = cell
    out = 0
    stride = 1
    for k in range(d - 1, -1, -1):
        n = int(grid[2 + k])
        c = rem % n
        rem //= n
        o = off[k]
        if n == 1:
            if o != 0:
                return -1
            c2 = 0
        else:
            c2 = c + o
            if periodic:
                c2 %= n
            elif c2 < 0 or c2 >= n:
                return -1
        out += c2 * stride
        stride *= n
    return out


@numba.njit(cache=True)
def link(head, nxt, prv, cell_of, i, c):
    cell_of[i] = c
    prv[i] = -1
    nxt[i] = head[c]
    if head[c] >= 0:
        prv[head[c]] = i
    head[c] = i


@numba.njit(cache=True)
def unlink(head, nxt, prv, cell_of, i):
    c = cell_of[i]
    if c < 0:
        return
    if prv[i] >= 0:
        nxt[prv[i]] = nxt[i]
    else:
        head[c] = nxt[i]
    if nxt[i] >= 0:
        prv[nxt[i]] = prv[i]
    cell_of[i] = -1


@numba.njit(cache=True)
def relabel(head, nxt, prv, cell_of, src, dst):
    """Index ``src`` now lives at ``dst`` (after a swap-remove)."""
    c = cell_of[src]
    cell_of[dst] = c
    nxt[dst] = nxt[src]
    prv[dst] = prv[src]
    if c < 0:
        return
    if prv[src] >= 0:
        nxt[prv[src]] = dst
    else:
        head[c] = dst
    if nxt[src] >= 0:
        prv[nxt[src]] = dst


@numba.njit(cache=True)
def touch_neighbors(x, skip, sign, pos, S, head, nxt, cell_of_x, grid, dom, Ukp, alp, tree_c, n, z, off, seen):
    """Add ``sign * U(x_j, x)`` to ``S_j`` for every neighbour j != skip.

    Returns the sum of the kernel values.  ``cell_of_x`` < 0 means the point
    is off-grid, in which case every individual is scanned.  ``z``, ``off``
    and ``seen`` are scratch buffers of sizes d, d and 3^d.
    """
    d = x.shape[0]
    total = 0.0
    if cell_of_x < 0:
        for j in range(n):
            if j == skip:
                continue
            w = pair_u_row(dom, Ukp, x, pos, j, z)
            if w != 0.0:
                total += w
                if sign != 0:
                    S[j] += sign * w
                    tree_set(tree_c, j, field_row(alp, pos, j) * max(S[j], 0.0))
        return total
    n_off = 3**d
    for code in range(n_off):
        seen[code] = -2
    for code in range(n_off):
        r = code
        for k in range(d):
            off[k] = r % 3 - 1
            r //= 3
        c = _neighbor_cell(grid, cell_of_x, off)
        if c < 0:
            continue
        dup = False
        for q in range(code):
            if seen[q] == c:
                dup = True
                break
        seen[code] = c
        if dup:
            continue
        j = head[c]
        while j >= 0:
            if j != skip:
                w = pair_u_row(dom, Ukp, x, pos, j, z)
                if w != 0.0:
                    total += w
                    if sign != 0:
                        S[j] += sign * w
                        tree_set(tree_c, j, field_row(alp, pos, j) * max(S[j], 0.0))
            j = nxt[j]
    return total


@numba.njit(cache=True)
def build_index(pos, n, S, head, nxt, prv, cell_of, grid, dom, Ukp, gam, mu, alp, tree_b, tree_d, tree_c):
    """Relink every individual and recompute S and all trees from scratch.

    Returns the number of individuals that fell outside the grid.
    """
    head[:] = -1
    tree_b[:] = 0.0
    tree_d[:] = 0.0
    tree_c[:] = 0.0
    off_grid = 0
    d = pos.shape[1]
    x = np.empty(d)
    z = np.empty(d)
    off = np.zeros(d, dtype=np.int64)
    seen = np.empty(3**d, dtype=np.int64)
    for i in range(n):
        copy_row(pos, i, x)
        c = cell_of_point(grid, x)
        if c < 0:
            off_grid += 1
            cell_of[i] = -1
            continue
        link(head, nxt, prv, cell_of, i, c)
    if off_grid > 0:
        return off_grid
    u0 = Ukp[1] * radial_pdf(Ukp, 0.0)
    for i in range(n):
        copy_row(pos, i, x)
        S[i] = u0 + touch_neighbors(x, i, 0, pos, S, head, nxt, cell_of[i], grid, dom, Ukp, alp, tree_c, n,
                                    z, off, seen)
    P = tree_c.shape[0] // 2
    for i in range(n):
        tree_b[P + i] = field_row(gam, pos, i)
        tree_d[P + i] = field_row(mu, pos, i)
        tree_c[P + i] = field_row(alp, pos, i) * S[i]
    for k in range(P - 1, 0, -1):
        tree_b[k] = tree_b[2 * k] + tree_b[2 * k + 1]
        tree_d[k] = tree_d[2 * k] + tree_d[2 * k + 1]
        tree_c[k] = tree_c[2 * k] + tree_c[2 * k + 1]
    return 0


# ---------------------------------------------------------------------------
# shared bookkeeping


@numba.njit(cache=True)
def _record_birth(iscal, fscal, flags, pos, ids, n, y, parent_id, lin_bt, lin_dt, lin_pos, lin_par, lin_kind):
    new_id = iscal[NEXT_ID]
    iscal[NEXT_ID] += 1
    for q in range(y.shape[0]):
        pos[n, q] = y[q]
    ids[n] = new_id
    if flags[F_RECORD]:
        k = iscal[LIN_LEN]
        lin_bt[k] = fscal[T_]
        lin_dt[k] = np.inf
        for q in range(y.shape[0]):
            lin_pos[k, q] = y[q]
        lin_par[k] = parent_id
        lin_kind[k] = -1
        iscal[LIN_LEN] += 1
    iscal[N_] = n + 1
    iscal[BIRTHS] += 1


@numba.njit(cache=True)
def _record_death(iscal, fscal, flags, ids, i, kind, lin_dt, lin_kind, lin_base):
    if flags[F_RECORD]:
        k = ids[i] - lin_base
        if 0 <= k < lin_dt.shape[0]:
            lin_dt[k] = fscal[T_]
            lin_kind[k] = kind
    if kind == NDEATH:
        iscal[NDEATHS] += 1
    else:
        iscal[CDEATHS] += 1


@numba.njit(inline="always", cache=True)
def _set_event(ev, kind, t, index, parent, ident, y):
    ev[0] = kind
    ev[1] = t
    ev[2] = index
    ev[3] = parent
    ev[4] = ident
    for k in range(y.shape[0]):
        ev[5 + k] = y[k]


@numba.njit(inline="always", cache=True)
def _set_event_row(ev, kind, t, index, parent, ident, pos, i):
    ev[0] = kind
    ev[1] = t
    ev[2] = index
    ev[3] = parent
    ev[4] = ident
    for k in range(pos.shape[1]):
        ev[5 + k] = pos[i, k]


@numba.njit(inline="always", cache=True)
def _set_event_none(ev, kind, t):
    ev[0] = kind
    ev[1] = t
    ev[2] = -1
    ev[3] = -1
    ev[4] = -1


# ---------------------------------------------------------------------------
# faithful engine


@numba.njit(cache=True)
def faithful_loop(pos, ids, dom, gam, mu, alp, Ukp, Dkp, Dtkp, bars, flags, iscal, fscal, s,
                  lin_bt, lin_dt, lin_pos, lin_par, lin_kind, lin_base, t_stop, max_events, ev):
    gbar, mbar, abar, ubar, C = bars[0], bars[1], bars[2], bars[3], bars[4]
    d = pos.shape[1]
    z = np.empty(d)
    y = np.empty(d)
    done = 0
    while done < max_events:
        n = iscal[N_]
        if n == 0:
            return EXTINCT
        if n >= pos.shape[0]:
            return NEED_CAP
        if flags[F_RECORD] and iscal[LIN_LEN] >= lin_bt.shape[0]:
            return NEED_LINEAGE
        m1 = C * gbar * n
        m2 = mbar * n
        m3 = abar * ubar * n * n
        m = m1 + m2 + m3
        if np.isnan(fscal[T_NEXT]):
            fscal[T_NEXT] = fscal[T_] + exponential(s, m) if m > 0.0 else np.inf
        if fscal[T_NEXT] > t_stop:
            fscal[T_] = t_stop
            return REACHED
        fscal[T_] = fscal[T_NEXT]
        fscal[T_NEXT] = np.nan
        t = fscal[T_]
        done += 1
        iscal[EVENTS] += 1
        u = uniform_open(s) * m
        if u < m1:
            i = randint(s, n)
            k_sample(Dtkp, d, s, z)
            den = gbar * C * k_eval(Dtkp, z)
            acc = field_row(gam, pos, i) * k_eval(Dkp, z) / den if den > 0.0 else 0.0
            if uniform_open(s) < acc:
                for k in range(d):
                    y[k] = pos[i, k] + z[k]
                wrap(dom, y)
                if not inside(dom, y):
                    iscal[LOSTS] += 1
                    _set_event(ev, LOST, t, i, i, -1, y)
                    continue
                parent_id = ids[i]
                _record_birth(iscal, fscal, flags, pos, ids, n, y, parent_id,
                              lin_bt, lin_dt, lin_pos, lin_par, lin_kind)
                _set_event(ev, BIRTH, t, n, i, ids[n], y)
                continue
        elif u < m1 + m2:
            i = randint(s, n)
            if uniform_open(s) < field_row(mu, pos, i) / mbar:
                _set_event_row(ev, NDEATH, t, i, -1, ids[i], pos, i)
                _record_death(iscal, fscal, flags, ids, i, NDEATH, lin_dt, lin_kind, lin_base)
                move_row(pos, n - 1, i)
                ids[i] = ids[n - 1]
                iscal[N_] = n - 1
                continue
        else:
            i = randint(s, n)
            j = randint(s, n)
            acc = pair_u_rows(dom, Ukp, pos, i, j) * field_row(alp, pos, i) / (ubar * abar)
            if uniform_open(s) < acc:
                _set_event_row(ev, CDEATH, t, i, j, ids[i], pos, i)
                _record_death(iscal, fscal, flags, ids, i, CDEATH, lin_dt, lin_kind, lin_base)
                move_row(pos, n - 1, i)
                ids[i] = ids[n - 1]
                iscal[N_] = n - 1
                continue
        iscal[FICT] += 1
        _set_event_none(ev, FICTITIOUS, t)
    return BUDGET


# ---------------------------------------------------------------------------
# indexed engine


@numba.njit(cache=True)
def _remove_indexed(i, n, pos, ids, S, head, nxt, prv, cell_of, grid, dom, Ukp, alp,
                    tree_b, tree_d, tree_c, flags, x, z, off, seen):
    copy_row(pos, i, x)
    touch_neighbors(x, i, -1, pos, S, head, nxt, cell_of[i], grid, dom, Ukp, alp, tree_c, n, z, off, seen)
    unlink(head, nxt, prv, cell_of, i)
    last = n - 1
    if i != last:
        move_row(pos, last, i)
        ids[i] = ids[last]
        S[i] = S[last]
        relabel(head, nxt, prv, cell_of, last, i)
        tree_set(tree_c, i, tree_c[tree_c.shape[0] // 2 + last])
        if not flags[F_CONST_G]:
            tree_set(tree_b, i, tree_b[tree_b.shape[0] // 2 + last])
        if not flags[F_CONST_M]:
            tree_set(tree_d, i, tree_d[tree_d.shape[0] // 2 + last])
    tree_set(tree_c, last, 0.0)
    if not flags[F_CONST_G]:
        tree_set(tree_b, last, 0.0)
    if not flags[F_CONST_M]:
        tree_set(tree_d, last, 0.0)
    cell_of[last] = -1


@numba.njit(cache=True)
def indexed_loop(pos, ids, S, head, nxt, prv, cell_of, grid, dom, gam, mu, alp, Ukp, Dkp, Dtkp, bars,
                 flags, iscal, fscal, s, tree_b, tree_d, tree_c,
                 lin_bt, lin_dt, lin_pos, lin_par, lin_kind, lin_base, t_stop, max_events, ev):
    C = bars[4]
    d = pos.shape[1]
    z = np.empty(d)
    y = np.empty(d)
    x = np.empty(d)
    off = np.zeros(d, dtype=np.int64)
    seen = np.empty(3**d, dtype=np.int64)
    zero = np.zeros(d)
    u0 = Ukp[1] * radial_pdf(Ukp, 0.0)
    g0 = field_at(gam, zero)
    m0 = field_at(mu, zero)
    done = 0
    while done < max_events:
        n = iscal[N_]
        if n == 0:
            return EXTINCT
        if n >= pos.shape[0]:
            return NEED_CAP
        if flags[F_RECORD] and iscal[LIN_LEN] >= lin_bt.shape[0]:
            return NEED_LINEAGE
        rb = g0 * n if flags[F_CONST_G] else tree_b[1]
        rd = m0 * n if flags[F_CONST_M] else tree_d[1]
        rc = tree_c[1]
        m = rb + rd + rc
        if np.isnan(fscal[T_NEXT]):
            fscal[T_NEXT] = fscal[T_] + exponential(s, m) if m > 0.0 else np.inf
        if fscal[T_NEXT] > t_stop:
            fscal[T_] = t_stop
            return REACHED
        fscal[T_] = fscal[T_NEXT]
        fscal[T_NEXT] = np.nan
        t = fscal[T_]
        done += 1
        iscal[EVENTS] += 1
        u = uniform_open(s) * m
        if u < rb:
            i = randint(s, n) if flags[F_CONST_G] else tree_pick(tree_b, uniform_open(s) * rb, n)
            ok, tries = disperse(Dkp, Dtkp, C, dom, pos, i, s, z, y)
            if tries < 0:
                return DISPERSAL_STUCK
            if not ok:
                iscal[LOSTS] += 1
                _set_event(ev, LOST, t, i, i, -1, y)
                continue
            c = cell_of_point(grid, y)
            if c >= 0:
                Sy = u0 + touch_neighbors(y, -1, 1, pos, S, head, nxt, c, grid, dom, Ukp, alp, tree_c, n,
                                          z, off, seen)
            else:
                Sy = 0.0
            _record_birth(iscal, fscal, flags, pos, ids, n, y, ids[i],
                          lin_bt, lin_dt, lin_pos, lin_par, lin_kind)
            S[n] = Sy
            _set_event(ev, BIRTH, t, n, i, ids[n], y)
            if c < 0:
                cell_of[n] = -1
                return REBUILD
            link(head, nxt, prv, cell_of, n, c)
            tree_set(tree_c, n, field_at(alp, y) * Sy)
            if not flags[F_CONST_G]:
                tree_set(tree_b, n, field_at(gam, y))
            if not flags[F_CONST_M]:
                tree_set(tree_d, n, field_at(mu, y))
        elif u < rb + rd:
            i = randint(s, n) if flags[F_CONST_M] else tree_pick(tree_d, uniform_open(s) * rd, n)
            _set_event_row(ev, NDEATH, t, i, -1, ids[i], pos, i)
            _record_death(iscal, fscal, flags, ids, i, NDEATH, lin_dt, lin_kind, lin_base)
            _remove_indexed(i, n, pos, ids, S, head, nxt, prv, cell_of, grid, dom, Ukp, alp,
                            tree_b, tree_d, tree_c, flags, x, z, off, seen)
            iscal[N_] = n - 1
        else:
            i = tree_pick(tree_c, uniform_open(s) * rc, n)
            _set_event_row(ev, CDEATH, t, i, -1, ids[i], pos, i)
            _record_death(iscal, fscal, flags, ids, i, CDEATH, lin_dt, lin_kind, lin_base)
            _remove_indexed(i, n, pos, ids, S, head, nxt, prv, cell_of, grid, dom, Ukp, alp,
                            tree_b, tree_d, tree_c, flags, x, z, off, seen)
            iscal[N_] = n - 1
    return BUDGET


# ---------------------------------------------------------------------------
# brute-force references


@numba.njit(cache=True)
def competition_sums_brute(pos, n, dom, Ukp):
    """S_i = sum_j U(x_i, x_j) over all j (self included), by double loop."""
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += pair_u_rows(dom, Ukp, pos, i, j)
        out[i] = acc
    return out


@numba.njit(cache=True)
def competition_sum_at(pos, n, x, dom, Ukp):
    d = pos.shape[1]
    z = np.empty(d)
    acc = 0.0
    for j in range(n):
        acc += pair_u_row(dom, Ukp, x, pos, j, z)
    return acc


@numba.njit(cache=True)
def disperse_many(Dkp, Dtkp, C, dom, x, s, count, out, ok):
    d = x.shape[0]
    src = x.reshape(1, d)
    z = np.empty(d)
    y = np.empty(d)
    total_tries = 0
    for r in range(count):
        inside_, tries = disperse(Dkp, Dtkp, C, dom, src, 0, s, z, y)
        total_tries += tries
        ok[r] = inside_
        for k in range(d):
            out[r, k] = y[k]
    return total_tries


@numba.njit(cache=True)
def lifetime_pair_sums(pos, birth, death, t0, t, dom, Ukp, grid, out):
    """``out[i] += int S_i(s) ds`` over the part of i's lifetime inside ``[t0, t]``, self term excluded.

    Sweeps births and deaths in time order keeping the living individuals in
    a cell list, so each pair with overlapping lifetimes is visited once when
    its younger member appears.
    """
    m = pos.shape[0]
    d = pos.shape[1]
    start = np.empty(m)
    stop = np.empty(m)
    for i in range(m):
        start[i] = max(birth[i], t0)
        stop[i] = min(death[i], t)
    ob = np.argsort(start, kind="mergesort")
    od = np.argsort(stop, kind="mergesort")
    ncell = 1
    for k in range(d):
        ncell *= int(grid[2 + k])
    head = np.full(ncell, -1, dtype=np.int64)
    nxt = np.full(m, -1, dtype=np.int64)
    prv = np.full(m, -1, dtype=np.int64)
    cell_of = np.full(m, -1, dtype=np.int64)
    x = np.empty(d)
    z = np.empty(d)
    off = np.zeros(d, dtype=np.int64)
    n_off = 3**d
    seen = np.empty(n_off, dtype=np.int64)
    kd = 0
    for kb in range(m):
        i = ob[kb]
        if start[i] >= stop[i]:
            continue
        # retire everyone whose life ended at or before this birth
        while kd < m and stop[od[kd]] <= start[i]:
            j = od[kd]
            if cell_of[j] >= 0:
                unlink(head, nxt, prv, cell_of, j)
            kd += 1
        copy_row(pos, i, x)
        c = cell_of_point(grid, x)
        for q in range(n_off):
            seen[q] = -2
        for code in range(n_off):
            r = code
            for k in range(d):
                off[k] = r % 3 - 1
                r //= 3
            cc = _neighbor_cell(grid, c, off)
            if cc < 0:
                continue
            dup = False
            for q in range(code):
                if seen[q] == cc:
                    dup = True
                    break
            seen[code] = cc
            if dup:
                continue
            j = head[cc]
            while j >= 0:
                w = pair_u_row(dom, Ukp, x, pos, j, z)
                if w != 0.0:
                    ov = min(stop[i], stop[j]) - start[i]
                    if ov > 0.0:
                        out[i] += w * ov
                        out[j] += w * ov
                j = nxt[j]
        link(head, nxt, prv, cell_of, i, c)
