# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tick kernel.  Must stay operation-for-operation identical to _pykernel."""

from libc.stdint cimport uint64_t

# state indices (see config.STATE_FIELDS)
DEF FSM = 0
DEF REG = 1
DEF E = 2
DEF SEG = 3
DEF SEG_DONE = 4
DEF SEG_COST = 5
DEF TR_DONE = 6
DEF TR_COST = 7
DEF TIMER = 8
DEF HSUM = 9
DEF TICKS = 10
DEF DRAWS = 11
DEF CLOCK = 12
DEF ARMED = 13
DEF SH_REG = 14
DEF SH_WORDS = 20
DEF IN_SZ = 21
DEF SZ_MARK = 22
DEF SINCE_TX = 23
DEF PREV_E = 24
DEF CYCLES = 25
DEF WRITES = 26
DEF BACKUPS = 27
DEF RESTORES = 28
DEF SHUTDOWNS = 29
DEF SZ_ENTRIES = 30
DEF SZ_REC = 31
DEF E_SENSE = 32
DEF E_COMP = 33
DEF E_TX = 34
DEF E_NVM = 35
DEF E_BK = 36
DEF E_RST = 37
DEF LEAKED = 38
DEF HARV = 39
DEF SPILL = 40
DEF MAKESPAN = 41
DEF SENSES = 42
DEF COMPUTES = 43
DEF NSTATE = 44

DEF SP = 0
DEF SE = 1
DEF CP = 2
DEF TR = 3
DEF BK = 4
DEF OFF = 5

# parameter indices (see config.PARAM_FIELDS)
DEF P_DT = 0
DEF P_EMAX = 1
DEF P_LEAK = 2
DEF P_TH_OFF = 3
DEF P_TH_BK = 4
DEF P_TH_SZ = 5
DEF P_TH_SE = 6
DEF P_TH_CP = 7
DEF P_TH_TR = 8
DEF P_COST_SE = 9
DEF P_COST_TR = 10
DEF P_CP_RATE = 11
DEF P_TR_RATE = 12
DEF P_UNC = 13
DEF P_WRITE_E = 14
DEF P_READ_E = 15
DEF P_TIMER_BASE = 16
DEF P_TARGET_RATE = 17
DEF P_SAMPLE_WORDS = 18
DEF P_RESULT_WORDS = 19
DEF P_N_STAGES = 20
DEF P_REPEATS = 21
DEF P_TX_EVERY = 22
DEF P_TARGET = 23


cdef inline double _draw(uint64_t seed, uint64_t k, double unc) nogil:
    cdef uint64_t z = seed + (k + 1) * <uint64_t>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    cdef double u = <double>(z >> 11) * (1.0 / 9007199254740992.0)
    return unc * (2.0 * u - 1.0)


def draw(uint64_t seed, uint64_t k, double unc):
    return _draw(seed, k, unc)


cdef inline void _timer(double* s, const double* p) nogil:
    cdef double avg, f
    if s[REG] == 0:
        s[REG] = 4
    if s[TICKS] > 0:
        avg = s[HSUM] / s[TICKS]
    else:
        avg = 0.0
    if avg > 0:
        f = p[P_TARGET_RATE] / avg
        if f < 1.0:
            f = 1.0
        elif f > 10.0:
            f = 10.0
    else:
        f = 10.0
    s[TIMER] = p[P_TIMER_BASE] * f


cdef inline void _copy_regs(double* s, int dst_reg, int dst_rest, int src_reg, int src_rest) nogil:
    # reg, then the five pending-progress fields (seg .. tr_cost)
    cdef int i
    s[dst_reg] = s[src_reg]
    for i in range(5):
        s[dst_rest + i] = s[src_rest + i]


cdef inline void _backup(double* s, const double* p, const long* stage_live) nogil:
    cdef double live, words, c
    if s[REG] == 4:
        live = 0
    elif s[REG] == 2:
        live = p[P_SAMPLE_WORDS]
        if s[SEG] > 0 or s[SEG_DONE] > 0:
            live += stage_live[(<long>s[SEG]) % (<long>p[P_N_STAGES])]
    elif s[REG] == 1:
        live = p[P_RESULT_WORDS]
    else:
        live = 0
    words = 1 + live
    c = words * p[P_WRITE_E]
    s[E] -= c
    s[E_BK] += c
    s[WRITES] += words
    s[BACKUPS] += 1
    # Reg_Flag and the completed-segment index persist; partial progress stays volatile
    s[SH_REG] = s[REG]
    s[SH_REG + 1] = s[SEG]
    s[SH_REG + 2] = 0.0
    s[SH_REG + 3] = -1.0
    s[SH_REG + 4] = 0.0
    s[SH_REG + 5] = -1.0
    s[SH_WORDS] = words
    s[ARMED] = 0.0
    s[FSM] = SP


def run_ticks(double[::1] p, double[::1] stage_cost, long[::1] stage_words,
              long[::1] stage_live, uint64_t seed, double[::1] state, double[::1] harvest,
              double[::1] log_fsm=None, double[::1] log_reg=None, double[::1] log_e=None):
    cdef double* s = &state[0]
    cdef const double* pp = &p[0]
    cdef Py_ssize_t n = harvest.shape[0]
    cdef Py_ssize_t t = 0
    cdef bint logging = log_fsm is not None
    cdef double dt = pp[P_DT]
    cdef double e_max = pp[P_EMAX]
    cdef double leak_tick = pp[P_LEAK] * dt * 1e-3
    cdef double th_off = pp[P_TH_OFF], th_bk = pp[P_TH_BK], th_sz = pp[P_TH_SZ]
    cdef double th_se = pp[P_TH_SE], th_cp = pp[P_TH_CP], th_tr = pp[P_TH_TR]
    cdef double cost_se = pp[P_COST_SE], cost_tr = pp[P_COST_TR]
    cdef double cp_q = pp[P_CP_RATE] * dt, tr_q = pp[P_TR_RATE] * dt
    cdef double unc = pp[P_UNC], write_e = pp[P_WRITE_E], read_e = pp[P_READ_E]
    cdef long n_stages = <long>pp[P_N_STAGES]
    cdef double n_seg = <double>(n_stages * <long>pp[P_REPEATS])
    cdef double tx_every = pp[P_TX_EVERY]
    cdef double target = pp[P_TARGET]
    cdef double h, e, lk, g, room, rc, c, q, rem, w, wc
    cdef double fsm, reg
    cdef int vis, i
    cdef long st
    cdef bint done
    cdef const long* live_ptr = &stage_live[0]

    with nogil:
        while t < n:
            h = harvest[t]
            e = s[E]
            lk = leak_tick
            if lk > e:
                lk = e
            e -= lk
            s[LEAKED] += lk
            g = h * dt * 1e-3
            room = e_max - e
            if g > room:
                s[SPILL] += g - room
                g = room
            e += g
            s[HARV] += g
            s[HSUM] += h
            s[TICKS] += 1
            s[CLOCK] += dt
            vis = -1
            s[E] = e

            if s[FSM] == OFF:
                rc = s[SH_WORDS] * read_e
                if e > th_bk + rc:
                    s[E] = e - rc
                    s[E_RST] += rc
                    if s[SH_WORDS] > 0:
                        s[RESTORES] += 1
                    _copy_regs(s, REG, SEG, SH_REG, SH_REG + 1)
                    s[FSM] = SP
                    s[TIMER] = pp[P_TIMER_BASE]
            else:
                s[TIMER] -= dt
                if s[TIMER] <= 0:
                    _timer(s, pp)
                fsm = s[FSM]
                reg = s[REG]
                if fsm == SP:
                    if reg == 4 and e > th_se:
                        fsm = SE
                    elif reg == 2 and e > th_cp:
                        fsm = CP
                    elif reg == 1 and e > th_tr:
                        fsm = TR
                if fsm == SE:
                    c = cost_se * (1.0 + _draw(seed, <uint64_t>s[DRAWS], unc))
                    s[DRAWS] += 1
                    e -= c
                    s[E_SENSE] += c
                    s[SENSES] += 1
                    s[REG] = 2
                    fsm = SP
                    vis = SE
                elif fsm == CP:
                    if e > th_sz:
                        st = (<long>s[SEG]) % n_stages
                        if s[SEG_COST] < 0:
                            s[SEG_COST] = stage_cost[st] * (1.0 + _draw(seed, <uint64_t>s[DRAWS], unc))
                            s[DRAWS] += 1
                        w = <double>stage_words[st]
                        wc = w * write_e
                        q = cp_q
                        done = False
                        rem = s[SEG_COST] - s[SEG_DONE]
                        if rem <= q:
                            q = rem
                            done = True
                        room = e - th_sz - wc
                        if room < q:
                            q = room if room > 0 else 0.0
                            done = False
                            e = th_sz + wc if room > 0 else e
                        else:
                            e -= q
                        s[SEG_DONE] += q
                        s[E_COMP] += q
                        if done:
                            e -= wc
                            s[E_NVM] += wc
                            s[WRITES] += w
                            s[SEG] += 1
                            s[SEG_DONE] = 0.0
                            s[SEG_COST] = -1.0
                            if s[SEG] >= n_seg:
                                s[SEG] = 0.0
                                s[COMPUTES] += 1
                                s[SINCE_TX] += 1
                                if s[SINCE_TX] >= tx_every:
                                    s[SINCE_TX] = 0.0
                                    s[REG] = 1
                                else:
                                    s[REG] = 0
                                    s[CYCLES] += 1
                                fsm = SP
                    else:
                        fsm = SP
                elif fsm == TR:
                    if e > th_sz:
                        if s[TR_COST] < 0:
                            s[TR_COST] = cost_tr * (1.0 + _draw(seed, <uint64_t>s[DRAWS], unc))
                            s[DRAWS] += 1
                        q = tr_q
                        done = False
                        rem = s[TR_COST] - s[TR_DONE]
                        if rem <= q:
                            q = rem
                            done = True
                        room = e - th_sz
                        if room < q:
                            q = room if room > 0 else 0.0
                            done = False
                            e = th_sz if room > 0 else e
                        else:
                            e -= q
                        s[TR_DONE] += q
                        s[E_TX] += q
                        if done:
                            s[TR_DONE] = 0.0
                            s[TR_COST] = -1.0
                            s[REG] = 0
                            s[CYCLES] += 1
                            fsm = SP
                    else:
                        fsm = SP
                s[FSM] = fsm
                s[E] = e
                if e >= th_bk:
                    s[ARMED] = 1.0
                elif s[ARMED] > 0:
                    _backup(s, pp, live_ptr)
                    vis = BK
                if s[E] < th_off:
                    s[FSM] = OFF
                    s[SHUTDOWNS] += 1
                    s[ARMED] = 0.0
                    s[REG] = 0
                    s[SEG] = 0.0
                    s[SEG_DONE] = 0.0
                    s[SEG_COST] = -1.0
                    s[TR_DONE] = 0.0
                    s[TR_COST] = -1.0

            e = s[E]
            if s[FSM] != OFF:
                if e < th_sz and s[PREV_E] >= th_sz:
                    s[SZ_ENTRIES] += 1
                    s[IN_SZ] = 1.0
                    s[SZ_MARK] = s[WRITES]
                elif s[IN_SZ] > 0 and e >= th_sz:
                    if s[WRITES] == s[SZ_MARK]:
                        s[SZ_REC] += 1
                    s[IN_SZ] = 0.0
            else:
                s[IN_SZ] = 0.0
            s[PREV_E] = e
            if logging:
                with gil:
                    log_fsm[t] = vis if vis >= 0 else s[FSM]
                    log_reg[t] = s[REG]
                    log_e[t] = e
            t += 1
            if target > 0 and s[CYCLES] >= target:
                s[MAKESPAN] = s[CLOCK]
                break
    return t
