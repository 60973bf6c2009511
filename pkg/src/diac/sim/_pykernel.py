"""Pure-Python tick kernel; the compiled kernel in ``_ckernel.pyx`` mirrors it op for op."""

from __future__ import annotations

from .config import OFF, SE, SP, CP, TR, BK, P, S

_MASK = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0

# state indices
FSM, REG, E = S["fsm"], S["reg"], S["energy"]
SEG, SEG_DONE, SEG_COST, TR_DONE, TR_COST = (S[k] for k in ("seg", "seg_done", "seg_cost",
                                                             "tr_done", "tr_cost"))
TIMER, HSUM, TICKS, DRAWS, CLOCK, ARMED = (S[k] for k in ("timer_rem", "harvest_sum", "ticks",
                                                           "draws", "clock", "armed"))
SH = [S[k] for k in ("sh_reg", "sh_seg", "sh_seg_done", "sh_seg_cost", "sh_tr_done", "sh_tr_cost")]
LIVE = [REG, SEG, SEG_DONE, SEG_COST, TR_DONE, TR_COST]
SH_WORDS, IN_SZ, SZ_MARK, SINCE_TX, PREV_E = (S[k] for k in ("sh_words", "in_sz", "sz_mark",
                                                              "since_tx", "prev_energy"))
CYCLES, WRITES, BACKUPS, RESTORES, SHUTDOWNS, SZ_ENTRIES, SZ_REC = (
    S[k] for k in ("cycles", "writes", "backups", "restores", "shutdowns", "sz_entries",
                   "sz_recoveries"))
E_SENSE, E_COMP, E_TX, E_NVM, E_BK, E_RST, LEAKED, HARV, SPILL, MAKESPAN, SENSES, COMPUTES = (
    S[k] for k in ("e_sense", "e_compute", "e_transmit", "e_nvm", "e_backup", "e_restore",
                   "leaked", "harvested", "spilled", "makespan", "senses", "computes"))


def draw(seed: int, k: int, unc: float) -> float:
    """k-th uncertainty draw in [-unc, unc) from a counter-based splitmix64 stream."""
    z = (seed + (k + 1) * _GOLD) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    z ^= z >> 31
    u = (z >> 11) * _INV53
    return unc * (2.0 * u - 1.0)


def timer_interrupt(s: list, p) -> None:
    if s[REG] == 0:
        s[REG] = 4
    avg = s[HSUM] / s[TICKS] if s[TICKS] > 0 else 0.0
    if avg > 0:
        f = p[P["target_rate"]] / avg
        if f < 1.0:
            f = 1.0
        elif f > 10.0:
            f = 10.0
    else:
        f = 10.0
    s[TIMER] = p[P["timer_base"]] * f


def live_words(s: list, p, stage_live) -> int:
    reg = s[REG]
    if reg == 4:
        live = 0
    elif reg == 2:
        live = p[P["sample_words"]]
        if s[SEG] > 0 or s[SEG_DONE] > 0:
            live += stage_live[int(s[SEG]) % int(p[P["n_stages"]])]
    elif reg == 1:
        live = p[P["result_words"]]
    else:
        live = 0
    return 1 + live


def power_interrupt(s: list, p, stage_live) -> None:
    """Back up Reg_Flag and the live words it selects, then return to Sp."""
    words = live_words(s, p, stage_live)
    c = words * p[P["write_e"]]
    s[E] -= c
    s[E_BK] += c
    s[WRITES] += words
    s[BACKUPS] += 1
    # Reg_Flag and the completed-segment index persist; partial progress of the
    # in-flight segment or transmission stays volatile and is lost on shutdown
    s[SH[0]] = s[REG]
    s[SH[1]] = s[SEG]
    s[SH[2]] = 0.0
    s[SH[3]] = -1.0
    s[SH[4]] = 0.0
    s[SH[5]] = -1.0
    s[SH_WORDS] = words
    s[ARMED] = 0.0
    s[FSM] = SP


def run_ticks(p, stage_cost, stage_words, stage_live, seed, state, harvest,
              log_fsm=None, log_reg=None, log_e=None) -> int:
    """Advance ``state`` in place over ``harvest`` (mW per tick); returns ticks run."""
    s = state.tolist() if hasattr(state, "tolist") else list(state)
    p = p.tolist() if hasattr(p, "tolist") else p
    harvest = harvest.tolist() if hasattr(harvest, "tolist") else harvest
    dt = p[P["dt"]]
    e_max = p[P["e_max"]]
    leak_tick = p[P["leak"]] * dt * 1e-3
    th_off, th_bk, th_sz = p[P["th_off"]], p[P["th_bk"]], p[P["th_sz"]]
    th_se, th_cp, th_tr = p[P["th_se"]], p[P["th_cp"]], p[P["th_tr"]]
    cost_se, cost_tr = p[P["cost_se"]], p[P["cost_tr"]]
    cp_q, tr_q = p[P["cp_rate"]] * dt, p[P["tr_rate"]] * dt
    unc, write_e, read_e = p[P["unc"]], p[P["write_e"]], p[P["read_e"]]
    n_stages = int(p[P["n_stages"]])
    n_seg = n_stages * int(p[P["repeats"]])
    tx_every = p[P["transmit_every"]]
    target = p[P["target_cycles"]]

    n = len(harvest)
    t = 0
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
                for dst, src in zip(LIVE, SH):
                    s[dst] = s[src]
                s[FSM] = SP
                s[TIMER] = p[P["timer_base"]]
        else:
            s[TIMER] -= dt
            if s[TIMER] <= 0:
                timer_interrupt(s, p)
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
                c = cost_se * (1.0 + draw(seed, int(s[DRAWS]), unc))
                s[DRAWS] += 1
                e -= c
                s[E_SENSE] += c
                s[SENSES] += 1
                s[REG] = 2
                fsm = SP
                vis = SE
            elif fsm == CP:
                if e > th_sz:
                    st = int(s[SEG]) % n_stages
                    if s[SEG_COST] < 0:
                        s[SEG_COST] = stage_cost[st] * (1.0 + draw(seed, int(s[DRAWS]), unc))
                        s[DRAWS] += 1
                    w = stage_words[st]
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
                        s[TR_COST] = cost_tr * (1.0 + draw(seed, int(s[DRAWS]), unc))
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
                power_interrupt(s, p, stage_live)
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
        if log_fsm is not None:
            log_fsm[t] = vis if vis >= 0 else s[FSM]
            log_reg[t] = s[REG]
            log_e[t] = e
        t += 1
        if target > 0 and s[CYCLES] >= target:
            s[MAKESPAN] = s[CLOCK]
            break
    state[:] = s
    return t
