"""Compiled epoch loop for the simulator.

Every epoch consumes one row of four uniforms, in this order: arrival,
action, completion, action-dependent state move.  All four are consumed
even when the corresponding event is forced or impossible, which keeps
the stream position a pure function of the epoch number.
"""

import numba
import numpy as np

# counts slots
ARRIVALS, DEPARTURES, DEPARTURES_POST = 0, 1, 2
# maxes slots
MAX_ALL, MAX_FIRST, MAX_SECOND = 0, 1, 2


@numba.njit(cache=True, nogil=True)
def advance(u, k0, state, lam, mu, rho_up, rho_down, table, burn_in, half, mid, stride,
            counts, occ, empty_occ, work_dec, q_pos, slope_acc, maxes, path):
    """Run ``u.shape[0]`` epochs starting at epoch ``k0``; mutates every output array.

    ``state`` is ``[s - 1, w, q]``.  Occupancy counters and the slope sum
    only see epochs ``k >= burn_in``.
    """
    n_s = mu.shape[0]
    q_cap = table.shape[2] - 1
    s = state[0]
    w = state[1]
    q = state[2]
    record = path.shape[0] > 0
    for i in range(u.shape[0]):
        k = k0 + i
        if record and k % stride == 0:
            path[k // stride] = q
        if q > maxes[MAX_ALL]:
            maxes[MAX_ALL] = q
        if k < half:
            if q > maxes[MAX_FIRST]:
                maxes[MAX_FIRST] = q
        elif q > maxes[MAX_SECOND]:
            maxes[MAX_SECOND] = q

        arrival = u[i, 0] < lam
        if q == 0:
            work = False
        elif w == 1:
            work = True
        else:
            work = u[i, 1] < table[s, 0, min(q, q_cap)]

        if k >= burn_in:
            occ[s, w] += 1
            if q == 0:
                empty_occ[s] += 1
            else:
                q_pos[s, w] += 1
                if work:
                    work_dec[s, w] += 1
            slope_acc[0] += (k - mid) * q

        completed = False
        s_next = s
        if work:
            completed = u[i, 2] < mu[s]
            if s < n_s - 1 and u[i, 3] < rho_up[s]:
                s_next = s + 1
        elif s > 0 and u[i, 3] < rho_down[s - 1]:
            s_next = s - 1

        if arrival:
            counts[ARRIVALS] += 1
            q += 1
        if completed:
            counts[DEPARTURES] += 1
            if k >= burn_in:
                counts[DEPARTURES_POST] += 1
            q -= 1
        if work and not completed:
            w = 1
        else:
            w = 0
        s = s_next
    state[0] = s
    state[1] = w
    state[2] = q


def empty_outputs(n_s):
    return (
        np.zeros(3, dtype=np.int64),
        np.zeros((n_s, 2), dtype=np.int64),
        np.zeros(n_s, dtype=np.int64),
        np.zeros((n_s, 2), dtype=np.int64),
        np.zeros((n_s, 2), dtype=np.int64),
        np.zeros(1, dtype=np.float64),
        np.full(3, -1, dtype=np.int64),
    )
