# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled path-simulation kernel.

Euler-Maruyama for the continuous part plus per-step Poisson jump counts
thinned by the current mass, with per-replicate counter-based random
streams.  The pure-Python twin in ``_kernel_py`` implements the identical
algorithm, draw order and floating-point expressions; the two backends
produce bit-identical output for the same (seed, replicate index).

Replicate status codes: 0 horizon, 1 extinct, 2 killed, 3 capped.
"""

from libc.math cimport exp, log, pow, sqrt

cdef double TWOM53 = 1.0 / 9007199254740992.0

cdef unsigned long long C1 = 0x9E3779B97F4A7C15UL
cdef unsigned long long C2 = 0xD1B54A32D192ED03UL


cdef inline unsigned long long _mix(unsigned long long z) nogil:
    z ^= z >> 30
    z *= 0xBF58476D1CE4E5B9UL
    z ^= z >> 27
    z *= 0x94D049BB133111EBUL
    z ^= z >> 31
    return z


cdef struct Stream:
    unsigned long long base
    unsigned long long counter
    double spare
    int have_spare


cdef inline void _stream_init(Stream* s, unsigned long long seed, long long index) nogil:
    s.base = _mix(seed + (<unsigned long long>(index + 1)) * C1)
    s.counter = 0
    s.spare = 0.0
    s.have_spare = 0


cdef inline double _uniform(Stream* s) nogil:
    s.counter += 1
    cdef unsigned long long v = _mix(s.base + s.counter * C2)
    return <double>((v >> 11) + 1) * TWOM53


cdef inline double _normal(Stream* s) nogil:
    cdef double u1, u2, r2, f
    if s.have_spare:
        s.have_spare = 0
        return s.spare
    while True:
        u1 = 2.0 * _uniform(s) - 1.0
        u2 = 2.0 * _uniform(s) - 1.0
        r2 = u1 * u1 + u2 * u2
        if r2 < 1.0 and r2 > 0.0:
            break
    f = sqrt(-2.0 * log(r2) / r2)
    s.spare = u2 * f
    s.have_spare = 1
    return u1 * f


cdef inline long long _poisson(Stream* s, double mean) nogil:
    cdef long long k = 0
    cdef double acc
    if mean <= 0.0:
        return 0
    acc = -log(_uniform(s))
    while acc <= mean:
        k += 1
        acc += -log(_uniform(s))
    return k


cdef inline long long _search_cum(double[::1] table, double u) nogil:
    # first index with table[idx] >= u
    cdef long long lo = 0, hi = table.shape[0] - 1, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if table[mid] >= u:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline double _sample_size(
    Stream* s, long long kind, double p0, double p1, double p2,
    double[::1] tx, double[::1] tp,
) nogil:
    cdef double u, z, frac
    cdef long long idx
    if kind == 1:  # pareto: p0 exponent, p1 eps
        u = _uniform(s)
        return p1 * pow(u, -1.0 / p0)
    elif kind == 2:  # shifted exponential: p0 mu, p1 eps
        u = _uniform(s)
        return p1 - log(u) / p0
    elif kind == 3:  # discrete table
        u = _uniform(s)
        idx = _search_cum(tp, u)
        return tx[idx]
    elif kind == 4:  # piecewise-linear inverse CDF
        u = _uniform(s)
        idx = _search_cum(tp, u)
        if idx == 0:
            return tx[0]
        frac = (u - tp[idx - 1]) / (tp[idx] - tp[idx - 1])
        return tx[idx - 1] + (tx[idx] - tx[idx - 1]) * frac
    elif kind == 5:  # tilted pareto: p0 exponent, p1 theta, p2 eps
        while True:
            u = _uniform(s)
            z = p2 * pow(u, -1.0 / p0)
            u = _uniform(s)
            if u <= exp(-p1 * (z - p2)):
                return z
    elif kind == 6:  # gamma(2) rejected below eps: p0 mu, p1 eps
        while True:
            u = _uniform(s)
            z = -log(u)
            u = _uniform(s)
            z = (z - log(u)) / p0
            if z >= p1:
                return z
    return 0.0


def simulate_chunk(
    double[::1] mp,
    long long[::1] ip,
    double[::1] btx, double[::1] btp,
    double[::1] itx, double[::1] itp,
    long long[::1] mark_steps,
    unsigned long long seed,
    long long i0,
    double[:, ::1] out_at,
    double[:, ::1] out_sc,
    double[:, ::1] xs,
    double[:, ::1] jt,
    double[:, ::1] jz,
    double[::1] jn,
):
    """Simulate replicates i0 .. i0+nrep-1 into preallocated output rows.

    mp: x0, dt, drift, beta_eff, lam_rate, imm_drift, imm_rate, x_min, cap,
        kill_rate, b0, b1, b2, im0, im1, im2
    ip: nsteps, nmarks, mode (0 cb / 1 cbi / 2 cbi killed), bkind, ikind
    out_at rows: X at marks | sigma at marks | max jump at marks
    out_sc rows: H, width, sigma, max jump, njumps, status, X_end, t_end
    xs/jt/jz/jn: optional trajectory and jump recording (shape 0 disables).
    """
    cdef long long nrep = out_sc.shape[0]
    cdef long long nsteps = ip[0]
    cdef long long nmarks = ip[1]
    cdef long long mode = ip[2]
    cdef long long bkind = ip[3]
    cdef long long ikind = ip[4]
    cdef double x0 = mp[0], dt = mp[1], drift = mp[2], beta_eff = mp[3]
    cdef double lam_rate = mp[4], imm_drift = mp[5], imm_rate = mp[6]
    cdef double x_min = mp[7], cap = mp[8], kill_rate = mp[9]
    cdef double b0 = mp[10], b1 = mp[11], b2 = mp[12]
    cdef double im0 = mp[13], im1 = mp[14], im2 = mp[15]
    cdef long long record = xs.shape[0]
    cdef long long jcap = jz.shape[1] if jz.shape[0] > 0 else 0
    cdef double INF = float("inf")

    cdef Stream s
    cdef long long rep, step, mark_ptr, nj, j, recj
    cdef double X, Xo, sup, sigma, width, njumps, H, status, tnext, z, t_kill, t_end
    cdef bint done

    with nogil:
        for rep in range(nrep):
            _stream_init(&s, seed, i0 + rep)
            t_kill = INF
            if mode == 2:
                t_kill = -log(_uniform(&s)) / kill_rate
            X = x0
            sup = 0.0
            sigma = 0.0
            width = x0
            njumps = 0.0
            H = INF
            status = 0.0
            t_end = nsteps * dt
            mark_ptr = 0
            recj = 0
            done = 0
            if record:
                xs[rep, 0] = X
            for step in range(nsteps):
                Xo = X
                X = X - drift * Xo * dt + imm_drift * dt
                if beta_eff > 0.0:
                    X = X + sqrt(2.0 * beta_eff * Xo * dt) * _normal(&s)
                if lam_rate > 0.0 and Xo > 0.0:
                    nj = _poisson(&s, Xo * lam_rate * dt)
                    for j in range(nj):
                        z = _sample_size(&s, bkind, b0, b1, b2, btx, btp)
                        X = X + z
                        njumps = njumps + 1.0
                        if z > sup:
                            sup = z
                        if recj < jcap:
                            jt[rep, recj] = (step + 1) * dt
                            jz[rep, recj] = z
                            recj += 1
                if mode >= 1 and imm_rate > 0.0:
                    nj = _poisson(&s, imm_rate * dt)
                    for j in range(nj):
                        z = _sample_size(&s, ikind, im0, im1, im2, itx, itp)
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
                        out_at[rep, mark_ptr] = INF
                        out_at[rep, nmarks + mark_ptr] = INF
                        out_at[rep, 2 * nmarks + mark_ptr] = sup
                        mark_ptr += 1
                    if record:
                        for j in range(step + 1, nsteps + 1):
                            xs[rep, j] = INF
                    done = 1
                    break
                if mode == 0 and X <= x_min:
                    X = 0.0
                sigma = sigma + 0.5 * (Xo + X) * dt
                if X > width:
                    width = X
                if record:
                    xs[rep, step + 1] = X
                while mark_ptr < nmarks and mark_steps[mark_ptr] == step + 1:
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
                    done = 1
                    break
                if X > cap:
                    status = 3.0
                    t_end = tnext
                    while mark_ptr < nmarks:
                        out_at[rep, mark_ptr] = INF
                        out_at[rep, nmarks + mark_ptr] = INF
                        out_at[rep, 2 * nmarks + mark_ptr] = sup
                        mark_ptr += 1
                    if record:
                        for j in range(step + 2, nsteps + 1):
                            xs[rep, j] = INF
                    done = 1
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
