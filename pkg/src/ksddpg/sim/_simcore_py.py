"""Pure-Python tick kernel. Mirrors ``_simcore.pyx`` line for line.

``advance(t, s)`` runs the per-tick queue dynamics on the flat arrays held by
a :class:`ksddpg.sim.core.Simulation`: pipe-to-queue transfer,
node discharge and end-of-tick stop/delay bookkeeping. Origin entry and
spawning stay in Python.
"""
from __future__ import annotations

import math

BACKEND = "python"

RUNNING = 1
QUEUED = 2
EXITED = 3

SIGNALIZED = 0
UNSIGNALIZED = 1
BOUNDARY = 2


def _discharge(t, s, v, l, nd):
    """Move vehicle ``v`` (head of link ``l``'s queue) across node ``nd``."""
    C = s.cap
    wait = t - s.v_qenter[v]
    s.v_delay[v] += wait
    s.link_wait[l] -= wait
    s.node_served[nd] += 1
    s.node_served_delay[nd] += wait
    s.q_head[l] = (s.q_head[l] + 1) % C
    s.q_len[l] -= 1
    idx = s.v_start[v] + s.v_pos[v]
    if s.route_movs[idx] < 0:
        s.v_state[v] = EXITED
        s.v_exit[v] = t
        s.counters[0] += 1
        return
    nxt = s.route_links[idx + 1]
    s.v_pos[v] += 1
    s.v_state[v] = RUNNING
    s.v_enter[v] = t
    s.v_ready[v] = t + s.link_tf[nxt]
    s.pipe[nxt, (s.pipe_head[nxt] + s.pipe_len[nxt]) % C] = v
    s.pipe_len[nxt] += 1


def _head_can_move(s, v):
    idx = s.v_start[v] + s.v_pos[v]
    m = s.route_movs[idx]
    if m < 0:
        return True
    if not s.green[m]:
        return False
    nxt = s.route_links[idx + 1]
    return s.pipe_len[nxt] + s.q_len[nxt] < s.link_jam[nxt]


def advance(t, s):
    C = s.cap
    n_links = s.link_tf.shape[0]
    n_nodes = s.node_kind.shape[0]
    s.node_tick_stops[:] = 0

    # running vehicles whose free-flow time has elapsed join the queue
    for l in range(n_links):
        while s.pipe_len[l] > 0:
            v = s.pipe[l, s.pipe_head[l]]
            if s.v_ready[v] > t:
                break
            s.pipe_head[l] = (s.pipe_head[l] + 1) % C
            s.pipe_len[l] -= 1
            s.queue[l, (s.q_head[l] + s.q_len[l]) % C] = v
            s.q_len[l] += 1
            s.v_state[v] = QUEUED
            s.v_qenter[v] = t
            s.arrivals[l] += 1

    # node discharge, nodes in index order
    for nd in range(n_nodes):
        kind = s.node_kind[nd]
        lo = s.in_ptr[nd]
        hi = s.in_ptr[nd + 1]
        if kind == UNSIGNALIZED:
            n_in = hi - lo
            if n_in == 0:
                continue
            rr = s.node_rr[nd]
            for j in range(n_in):
                l = s.in_links[lo + (rr + j) % n_in]
                if s.q_len[l] > 0:
                    v = s.queue[l, s.q_head[l]]
                    if _head_can_move(s, v):
                        _discharge(t, s, v, l, nd)
            s.node_rr[nd] = (rr + 1) % n_in
        elif kind == BOUNDARY:
            for j in range(lo, hi):
                l = s.in_links[j]
                while s.q_len[l] > 0:
                    v = s.queue[l, s.q_head[l]]
                    if not _head_can_move(s, v):
                        break
                    _discharge(t, s, v, l, nd)
        else:
            for j in range(lo, hi):
                l = s.in_links[j]
                if s.q_len[l] == 0:
                    s.link_acc[l] = 0.0
                    continue
                s.link_acc[l] += s.link_rate[l]
                n = int(math.floor(s.link_acc[l] + 0.5))
                d = 0
                while d < n and s.q_len[l] > 0:
                    v = s.queue[l, s.q_head[l]]
                    if not _head_can_move(s, v):
                        break
                    _discharge(t, s, v, l, nd)
                    d += 1
                if d < n:
                    s.link_acc[l] = 0.0
                else:
                    s.link_acc[l] -= n

    # arrivals still queued at the end of the tick have stopped
    for l in range(n_links):
        a = s.arrivals[l]
        if a > 0:
            rem = min(a, s.q_len[l])
            for j in range(s.q_len[l] - rem, s.q_len[l]):
                s.v_stops[s.queue[l, (s.q_head[l] + j) % C]] += 1
            nd = s.link_down[l]
            s.node_stops[nd] += rem
            s.node_tick_stops[nd] += rem
            s.arrivals[l] = 0
        s.link_wait[l] += s.q_len[l]
