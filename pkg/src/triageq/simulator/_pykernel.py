"""Pure-Python event loop; the reference twin of ``_ckernel.pyx``.

Both implementations perform the same floating-point operations in the same
order, so they return bit-identical results.
"""

import math

import numpy as np


def simulate_world(arrivals, priority, service, n_servers, n_classes):
    """Run a preemptive-resume priority queue with ``n_servers`` identical servers.

    Parameters
    ----------
    arrivals : float array, sorted ascending
        Arrival times in minutes.
    priority : int array
        Class of each job, 0 being the most urgent.
    service : float array
        Reading time of each job.
    n_servers, n_classes : int

    Returns
    -------
    departures : float array
        Completion time of every job.
    busy_time : float
        Total server-minutes spent reading.
    counts : int array, shape (n, n_classes)
        Number of jobs of each class in the system just before each arrival.

    At every instant the servers work on the first ``n_servers`` jobs in
    (class, arrival) order.  A completion and an arrival at the same time
    are processed completion first.
    """
    n = len(arrivals)
    arrivals = [float(x) for x in arrivals]
    service = [float(x) for x in service]
    priority = [int(c) for c in priority]
    queues = [[] for _ in range(n_classes)]
    rem = [0.0] * n
    dep = [0.0] * n
    counts = np.zeros((n, n_classes), dtype=np.int64)
    t = 0.0
    busy = 0.0
    ia = 0
    done = 0
    inf = math.inf
    while done < n:
        served = []
        for c in range(n_classes):
            q = queues[c]
            k = 0
            while len(served) < n_servers and k < len(q):
                served.append((q[k], c, k))
                k += 1
            if len(served) == n_servers:
                break
        ns = len(served)
        if ns > 0:
            jmin = 0
            rmin = rem[served[0][0]]
            for s in range(1, ns):
                r = rem[served[s][0]]
                if r < rmin:
                    rmin = r
                    jmin = s
            if rmin < 0.0:
                rmin = 0.0
            tc = t + rmin
        else:
            rmin = 0.0
            tc = inf
        ta = arrivals[ia] if ia < n else inf
        if tc <= ta:
            dt = rmin
            for job, _, _ in served:
                rem[job] -= dt
            busy += dt * ns
            t = tc
            job, c, k = served[jmin]
            rem[job] = 0.0
            dep[job] = t
            done += 1
            del queues[c][k]
        else:
            dt = ta - t
            for job, _, _ in served:
                rem[job] -= dt
            busy += dt * ns
            t = ta
            for c in range(n_classes):
                counts[ia, c] = len(queues[c])
            queues[priority[ia]].append(ia)
            rem[ia] = service[ia]
            ia += 1
    return np.asarray(dep, dtype=float), busy, counts
