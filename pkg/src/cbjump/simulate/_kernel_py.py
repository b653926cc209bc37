"""Pure-Python twin of the compiled simulation kernel.

Implements the identical algorithm, random-stream layout, draw order and
floating-point expressions as ``_kernel.pyx``; for the same seed and
replicate index the two backends produce bit-identical output.  Orders of
magnitude slower, intended as the import-time fallback and as the reference
side of the backend-parity tests.

Replicate status codes: 0 horizon, 1 extinct, 2 killed, 3 capped.
"""
from __future__ import annotations

from math import exp, inf, log, sqrt

_MASK = (1 << 64) - 1
_TWOM53 = 1.0 / 9007199254740992.0
_C1 = 0x9E3779B97F4A7C15
_C2 = 0xD1B54A32D192ED03


def _mix(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


class _Stream:
    __slots__ = ("base", "counter", "spare", "have_spare")

    def __init__(self, seed: int, index: int):
        self.base = _mix((seed + (index + 1) * _C1) & _MASK)
        self.counter = 0
        self.spare = 0.0
        self.have_spare = False

    def uniform(self) -> float:
        self.counter += 1
        v = _mix((self.base + self.counter * _C2) & _MASK)
        return ((v >> 11) + 1) * _TWOM53

    def normal(self) -> float:
        if self.have_spare:
            self.have_spare = False
            return self.spare
        while True:
            u1 = 2.0 * self.uniform() - 1.0
            u2 = 2.0 * self.uniform() - 1.0
            r2 = u1 * u1 + u2 * u2
            if 0.0 < r2 < 1.0:
                break
        f = sqrt(-2.0 * log(r2) / r2)
        self.spare = u2 * f
        self.have_spare = True
        return u1 * f

    def poisson(self, mean: float) -> int:
        if mean <= 0.0:
            return 0
        k = 0
        acc = -log(self.uniform())
        while acc <= mean:
            k += 1
            acc += -log(self.uniform())
        return k


def _search_cum(table, u: float) -> int:
    lo, hi = 0, len(table) - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if table[mid] >= u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _sample_size(s: _Stream, kind: int, p0: float, p1: float, p2: float, tx, tp) -> float:
    if kind == 1:
        u = s.uniform()
        return p1 * u ** (-1.0 / p0)
    if kind == 2:
        u = s.uniform()
        return p1 - log(u) / p0
    if kind == 3:
        u = s.uniform()
        return tx[_search_cum(tp, u)]
    if kind == 4:
        u = s.uniform()
        idx = _search_cum(tp, u)
        if idx == 0:
            return tx[0]
        frac = (u - tp[idx - 1]) / (tp[idx] - tp[idx - 1])
        return tx[idx - 1] + (tx[idx] - tx[idx - 1]) * frac
    if kind == 5:
        while True:
            u = s.uniform()
            z = p2 * u ** (-1.0 / p0)
            u = s.uniform()
            if u <= exp(-p1 * (z - p2)):
                return z
    if kind == 6:
        while True:
            u = s.uniform()
            z = -log(u)
            u = s.uniform()
            z = (z - log(u)) / p0
            if z >= p1:
                return z
    return 0.0


def simulate_chunk(mp, ip, btx, btp, itx, itp, mark_steps, seed, i0, out_at, out_sc, xs, jt, jz, jn):
    """See the compiled kernel for the parameter layout."""
    nrep = out_sc.shape[0]
    nsteps = int(ip[0])
    nmarks = int(ip[1])
    mode = int(ip[2])
    bkind = int(ip[3])
    ikind = int(ip[4])
    x0 = float(mp[0]); dt = float(mp[1]); drift = float(mp[2]); beta_eff = float(mp[3])
    lam_rate = float(mp[4]); imm_drift = float(mp[5]); imm_rate = float(mp[6])
    x_min = float(mp[7]); cap = float(mp[8]); kill_rate = float(mp[9])
    b0 = float(mp[10]); b1 = float(mp[11]); b2 = float(mp[12])
    im0 = float(mp[13]); im1 = float(mp[14]); im2 = float(mp[15])
    btx_l = btx.tolist(); btp_l = btp.tolist()
    itx_l = itx.tolist(); itp_l = itp.tolist()
    marks_l = mark_steps.tolist()
    record = xs.shape[0]
    jcap = jz.shape[1] if jz.shape[0] > 0 else 0

    for rep in range(nrep):
        s = _Stream(seed, i0 + rep)
        t_kill = inf
        if mode == 2:
            t_kill = -log(s.uniform()) / kill_rate
        X = x0
        sup = 0.0
        sigma = 0.0
        width = x0
        njumps = 0.0
        H = inf
        status = 0.0
        t_end = nsteps * dt
        mark_ptr = 0
        recj = 0
        done = False
        if record:
            xs[rep, 0] = X
        for step in range(nsteps):
            Xo = X
            X = X - drift * Xo * dt + imm_drift * dt
            if beta_eff > 0.0:
                X = X + sqrt(2.0 * beta_eff * Xo * dt) * s.normal()
            if lam_rate > 0.0 and Xo > 0.0:
                nj = s.poisson(Xo * lam_rate * dt)
                for _ in range(nj):
                    z = _sample_size(s, bkind, b0, b1, b2, btx_l, btp_l)
                    X = X + z
                    njumps = njumps + 1.0
                    if z > sup:
                        sup = z
                    if recj < jcap:
                        jt[rep, recj] = (step + 1) * dt
                        jz[rep, recj] = z
                        recj += 1
            if mode >= 1 and imm_rate > 0.0:
                nj = s.poisson(imm_rate * dt)
                for _ in range(nj):
                    z = _sample_size(s, ikind, im0, im1, im2, itx_l, itp_l)
                    X = X + z
                    njumps = njumps + 1.0
                    if z > sup:
                        sup = z
                    if recj < jcap:
                        jt[rep, recj] = (step + 1) * dt
                        jz[rep, recj] = z
                        recj += 1
            if X < 0.0:
                X = 0.0
            tnext = (step + 1) * dt
            if mode == 2 and tnext >= t_kill:
                status = 2.0
                t_end = t_kill
                while mark_ptr < nmarks:
                    out_at[rep, mark_ptr] = inf
                    out_at[rep, nmarks + mark_ptr] = inf
                    out_at[rep, 2 * nmarks + mark_ptr] = sup
                    mark_ptr += 1
                if record:
                    for j in range(step + 1, nsteps + 1):
                        xs[rep, j] = inf
                done = True
                break
            if mode == 0 and X <= x_min:
                X = 0.0
            sigma = sigma + 0.5 * (Xo + X) * dt
            if X > width:
                width = X
            if record:
                xs[rep, step + 1] = X
            while mark_ptr < nmarks and marks_l[mark_ptr] == step + 1:
                out_at[rep, mark_ptr] = X
                out_at[rep, nmarks + mark_ptr] = sigma
                out_at[rep, 2 * nmarks + mark_ptr] = sup
                mark_ptr += 1
            if mode == 0 and X == 0.0:
                status = 1.0
                H = tnext
                t_end = tnext
                while mark_ptr < nmarks:
                    out_at[rep, mark_ptr] = 0.0
                    out_at[rep, nmarks + mark_ptr] = sigma
                    out_at[rep, 2 * nmarks + mark_ptr] = sup
                    mark_ptr += 1
                if record:
                    for j in range(step + 2, nsteps + 1):
                        xs[rep, j] = 0.0
                done = True
                break
            if X > cap:
                status = 3.0
                t_end = tnext
                while mark_ptr < nmarks:
                    out_at[rep, mark_ptr] = inf
                    out_at[rep, nmarks + mark_ptr] = inf
                    out_at[rep, 2 * nmarks + mark_ptr] = sup
                    mark_ptr += 1
                if record:
                    for j in range(step + 2, nsteps + 1):
                        xs[rep, j] = inf
                done = True
                break
        if not done:
            status = 0.0
        out_sc[rep, 0] = H
        out_sc[rep, 1] = width
        out_sc[rep, 2] = sigma
        out_sc[rep, 3] = sup
        out_sc[rep, 4] = njumps
        out_sc[rep, 5] = status
        out_sc[rep, 6] = X
        out_sc[rep, 7] = t_end
        if jn.shape[0] > 0:
            jn[rep] = recj
