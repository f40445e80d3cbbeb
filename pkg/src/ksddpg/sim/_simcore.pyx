# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tick kernel; same contract as ``_simcore_py.advance``."""
from libc.math cimport floor

BACKEND = "cython"

cdef enum:
    RUNNING = 1
    QUEUED = 2
    EXITED = 3
    SIGNALIZED = 0
    UNSIGNALIZED = 1
    BOUNDARY = 2


cdef struct Arrays:
    long long C
    long long *link_tf
    long long *link_jam
    double *link_rate
    long long *link_down
    long long *pipe
    long long *pipe_head
    long long *pipe_len
    long long *queue
    long long *q_head
    long long *q_len
    double *link_acc
    long long *link_wait
    long long *arrivals
    long long *in_ptr
    long long *in_links
    long long *node_rr
    long long *node_stops
    long long *node_tick_stops
    long long *node_served
    long long *node_served_delay
    unsigned char *green
    long long *route_links
    long long *route_movs
    long long *v_start
    long long *v_pos
    long long *v_state
    long long *v_ready
    long long *v_qenter
    long long *v_stops
    long long *v_delay
    long long *v_exit
    long long *v_enter
    long long *counters


cdef inline bint head_can_move(Arrays *a, long long v) nogil:
    cdef long long idx = a.v_start[v] + a.v_pos[v]
    cdef long long m = a.route_movs[idx]
    cdef long long nxt
    if m < 0:
        return True
    if not a.green[m]:
        return False
    nxt = a.route_links[idx + 1]
    return a.pipe_len[nxt] + a.q_len[nxt] < a.link_jam[nxt]


cdef inline void discharge(long long t, Arrays *a, long long v, long long l, long long nd) nogil:
    cdef long long C = a.C
    cdef long long wait = t - a.v_qenter[v]
    cdef long long idx, nxt
    a.v_delay[v] += wait
    a.link_wait[l] -= wait
    a.node_served[nd] += 1
    a.node_served_delay[nd] += wait
    a.q_head[l] = (a.q_head[l] + 1) % C
    a.q_len[l] -= 1
    idx = a.v_start[v] + a.v_pos[v]
    if a.route_movs[idx] < 0:
        a.v_state[v] = EXITED
        a.v_exit[v] = t
        a.counters[0] += 1
        return
    nxt = a.route_links[idx + 1]
    a.v_pos[v] += 1
    a.v_state[v] = RUNNING
    a.v_enter[v] = t
    a.v_ready[v] = t + a.link_tf[nxt]
    a.pipe[nxt * C + (a.pipe_head[nxt] + a.pipe_len[nxt]) % C] = v
    a.pipe_len[nxt] += 1


cdef void run_tick(long long t, Arrays *a, long long n_links, long long n_nodes,
                   long long *node_kind) nogil:
    cdef long long C = a.C
    cdef long long l, nd, v, j, lo, hi, n_in, rr, n, d, rem
    cdef long long kind
    for nd in range(n_nodes):
        a.node_tick_stops[nd] = 0

    for l in range(n_links):
        while a.pipe_len[l] > 0:
            v = a.pipe[l * C + a.pipe_head[l]]
            if a.v_ready[v] > t:
                break
            a.pipe_head[l] = (a.pipe_head[l] + 1) % C
            a.pipe_len[l] -= 1
            a.queue[l * C + (a.q_head[l] + a.q_len[l]) % C] = v
            a.q_len[l] += 1
            a.v_state[v] = QUEUED
            a.v_qenter[v] = t
            a.arrivals[l] += 1

    for nd in range(n_nodes):
        kind = node_kind[nd]
        lo = a.in_ptr[nd]
        hi = a.in_ptr[nd + 1]
        if kind == UNSIGNALIZED:
            n_in = hi - lo
            if n_in == 0:
                continue
            rr = a.node_rr[nd]
            for j in range(n_in):
                l = a.in_links[lo + (rr + j) % n_in]
                if a.q_len[l] > 0:
                    v = a.queue[l * C + a.q_head[l]]
                    if head_can_move(a, v):
                        discharge(t, a, v, l, nd)
            a.node_rr[nd] = (rr + 1) % n_in
        elif kind == BOUNDARY:
            for j in range(lo, hi):
                l = a.in_links[j]
                while a.q_len[l] > 0:
                    v = a.queue[l * C + a.q_head[l]]
                    if not head_can_move(a, v):
                        break
                    discharge(t, a, v, l, nd)
        else:
            for j in range(lo, hi):
                l = a.in_links[j]
                if a.q_len[l] == 0:
                    a.link_acc[l] = 0.0
                    continue
                a.link_acc[l] += a.link_rate[l]
                n = <long long>floor(a.link_acc[l] + 0.5)
                d = 0
                while d < n and a.q_len[l] > 0:
                    v = a.queue[l * C + a.q_head[l]]
                    if not head_can_move(a, v):
                        break
                    discharge(t, a, v, l, nd)
                    d += 1
                if d < n:
                    a.link_acc[l] = 0.0
                else:
                    a.link_acc[l] -= n

    for l in range(n_links):
        if a.arrivals[l] > 0:
            rem = a.arrivals[l]
            if a.q_len[l] < rem:
                rem = a.q_len[l]
            for j in range(a.q_len[l] - rem, a.q_len[l]):
                a.v_stops[a.queue[l * C + (a.q_head[l] + j) % C]] += 1
            nd = a.link_down[l]
            a.node_stops[nd] += rem
            a.node_tick_stops[nd] += rem
            a.arrivals[l] = 0
        a.link_wait[l] += a.q_len[l]


def advance(long long t, s):
    cdef Arrays a
    cdef long long[::1] link_tf = s.link_tf
    cdef long long[::1] link_jam = s.link_jam
    cdef double[::1] link_rate = s.link_rate
    cdef long long[::1] link_down = s.link_down
    cdef long long[:, ::1] pipe = s.pipe
    cdef long long[::1] pipe_head = s.pipe_head
    cdef long long[::1] pipe_len = s.pipe_len
    cdef long long[:, ::1] queue = s.queue
    cdef long long[::1] q_head = s.q_head
    cdef long long[::1] q_len = s.q_len
    cdef double[::1] link_acc = s.link_acc
    cdef long long[::1] link_wait = s.link_wait
    cdef long long[::1] arrivals = s.arrivals
    cdef long long[::1] node_kind = s.node_kind
    cdef long long[::1] in_ptr = s.in_ptr
    cdef long long[::1] in_links = s.in_links
    cdef long long[::1] node_rr = s.node_rr
    cdef long long[::1] node_stops = s.node_stops
    cdef long long[::1] node_tick_stops = s.node_tick_stops
    cdef long long[::1] node_served = s.node_served
    cdef long long[::1] node_served_delay = s.node_served_delay
    cdef unsigned char[::1] green = s.green
    cdef long long[::1] route_links = s.route_links
    cdef long long[::1] route_movs = s.route_movs
    cdef long long[::1] v_start = s.v_start
    cdef long long[::1] v_pos = s.v_pos
    cdef long long[::1] v_state = s.v_state
    cdef long long[::1] v_ready = s.v_ready
    cdef long long[::1] v_qenter = s.v_qenter
    cdef long long[::1] v_stops = s.v_stops
    cdef long long[::1] v_delay = s.v_delay
    cdef long long[::1] v_exit = s.v_exit
    cdef long long[::1] v_enter = s.v_enter
    cdef long long[::1] counters = s.counters

    a.C = s.cap
    a.link_tf = &link_tf[0]
    a.link_jam = &link_jam[0]
    a.link_rate = &link_rate[0]
    a.link_down = &link_down[0]
    a.pipe = &pipe[0, 0]
    a.pipe_head = &pipe_head[0]
    a.pipe_len = &pipe_len[0]
    a.queue = &queue[0, 0]
    a.q_head = &q_head[0]
    a.q_len = &q_len[0]
    a.link_acc = &link_acc[0]
    a.link_wait = &link_wait[0]
    a.arrivals = &arrivals[0]
    a.in_ptr = &in_ptr[0]
    a.in_links = &in_links[0]
    a.node_rr = &node_rr[0]
    a.node_stops = &node_stops[0]
    a.node_tick_stops = &node_tick_stops[0]
    a.node_served = &node_served[0]
    a.node_served_delay = &node_served_delay[0]
    a.green = &green[0]
    a.route_links = &route_links[0]
    a.route_movs = &route_movs[0]
    a.v_start = &v_start[0]
    a.v_pos = &v_pos[0]
    a.v_state = &v_state[0]
    a.v_ready = &v_ready[0]
    a.v_qenter = &v_qenter[0]
    a.v_stops = &v_stops[0]
    a.v_delay = &v_delay[0]
    a.v_exit = &v_exit[0]
    a.v_enter = &v_enter[0]
    a.counters = &counters[0]
    with nogil:
        run_tick(t, &a, link_tf.shape[0], node_kind.shape[0], &node_kind[0])
