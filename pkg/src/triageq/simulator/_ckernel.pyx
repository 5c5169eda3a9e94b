# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled event loop for the preemptive-resume priority queue.

Mirrors ``_pykernel.simulate_world`` operation for operation; see that
function for the contract.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def simulate_world(arrivals, priority, service, int n_servers, int n_classes):
    cdef const double[::1] arr = np.ascontiguousarray(arrivals, dtype=np.float64)
    cdef const double[::1] svc = np.ascontiguousarray(service, dtype=np.float64)
    cdef const cnp.int64_t[::1] cls = np.ascontiguousarray(priority, dtype=np.int64)
    cdef Py_ssize_t n = arr.shape[0]

    dep_arr = np.zeros(n, dtype=np.float64)
    rem_arr = np.zeros(n, dtype=np.float64)
    counts_arr = np.zeros((n, n_classes), dtype=np.int64)
    qbuf_arr = np.zeros(n, dtype=np.int64)
    head_arr = np.zeros(n_classes, dtype=np.int64)
    tail_arr = np.zeros(n_classes, dtype=np.int64)
    served_arr = np.zeros((3, n_servers), dtype=np.int64)

    cdef double[::1] dep = dep_arr
    cdef double[::1] rem = rem_arr
    cdef cnp.int64_t[:, ::1] counts = counts_arr
    cdef cnp.int64_t[::1] qbuf = qbuf_arr
    cdef cnp.int64_t[::1] head = head_arr
    cdef cnp.int64_t[::1] tail = tail_arr
    cdef cnp.int64_t[:, ::1] served = served_arr

    cdef Py_ssize_t i, c, k, s, ns, jmin, job, start
    cdef double t = 0.0, busy = 0.0, rmin, r, tc, ta, dt
    cdef Py_ssize_t ia = 0, done = 0

    # Each class owns a contiguous slice of qbuf sized by its job count.
    start = 0
    for c in range(n_classes):
        head[c] = start
        tail[c] = start
        for i in range(n):
            if cls[i] == c:
                start += 1
    for i in range(n):
        if cls[i] < 0 or cls[i] >= n_classes:
            raise ValueError("priority out of range")

    with nogil:
        while done < n:
            ns = 0
            for c in range(n_classes):
                k = 0
                while ns < n_servers and head[c] + k < tail[c]:
                    served[0, ns] = qbuf[head[c] + k]
                    served[1, ns] = c
                    served[2, ns] = k
                    ns += 1
                    k += 1
                if ns == n_servers:
                    break
            if ns > 0:
                jmin = 0
                rmin = rem[served[0, 0]]
                for s in range(1, ns):
                    r = rem[served[0, s]]
                    if r < rmin:
                        rmin = r
                        jmin = s
                if rmin < 0.0:
                    rmin = 0.0
                tc = t + rmin
            else:
                rmin = 0.0
                tc = INFINITY
            if ia < n:
                ta = arr[ia]
            else:
                ta = INFINITY
            if tc <= ta:
                dt = rmin
                for s in range(ns):
                    rem[served[0, s]] -= dt
                busy += dt * ns
                t = tc
                job = served[0, jmin]
                c = served[1, jmin]
                k = served[2, jmin]
                rem[job] = 0.0
                dep[job] = t
                done += 1
                # Remove position k of class c by shifting the earlier entries right.
                i = head[c] + k
                while i > head[c]:
                    qbuf[i] = qbuf[i - 1]
                    i -= 1
                head[c] += 1
            else:
                dt = ta - t
                for s in range(ns):
                    rem[served[0, s]] -= dt
                busy += dt * ns
                t = ta
                for c in range(n_classes):
                    counts[ia, c] = tail[c] - head[c]
                c = cls[ia]
                qbuf[tail[c]] = ia
                tail[c] += 1
                rem[ia] = svc[ia]
                ia += 1
    return dep_arr, busy, counts_arr
