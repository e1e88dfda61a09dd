# Copyright 2026 JumpHJB Development Team.
#
# This file is part of JumpHJB, a toolkit for controlled jump-diffusions
# with recursive costs.
#
# JumpHJB is free software: you can redistribute it and/or modify it
# under the terms of the GNU Lesser General Public License (LGPL) as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# JumpHJB is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY
# or FITNESS FOR A PARTICULAR PURPOSE. See the GNU Lesser General
# Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public
# License along with JumpHJB. If not, see <http://www.gnu.org/licenses/>.

"""Miscellaneous utility functions. This module contains the seeding
discipline used by all JumpHJB code: every random number is drawn from
a stream derived from a master seed, a stage label and (for per-path
streams) the path index. Using these streams everywhere ensures that a
run can be reproduced bit for bit at a later time, and that any stage
can be re-run in isolation.

The module also keeps track of stage timings for the run manifest and
offers a small order-preserving parallel map.
"""

import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from twisted.logger import Logger

log = Logger()


def master_seed(default=0):
    """Return the master seed.

    The environment variable :envvar:`JUMPHJB_SEED` overrides the
    *default* (normally the scenario's ``master_seed``). If the
    variable is unset or empty, *default* is used.
    """
    seed = os.environ.get('JUMPHJB_SEED')
    if seed is None or seed == '':
        return int(default)
    return int(seed)


def label_key(label):
    """Map a stage label to a stable 32 bit integer.

    >>> label_key("simulate") == label_key("simulate")
    True
    >>> label_key("simulate") != label_key("solve")
    True
    """
    return zlib.crc32(label.encode("utf-8")) & 0xffffffff


def stream(seed, label, index=None):
    """Return a named random stream.

    The stream is a :class:`numpy.random.Generator` whose state is a
    deterministic function of *seed*, *label* and the optional
    *index*. Two calls with the same arguments give identical streams:

    >>> a = stream(7, "demo", 3)
    >>> b = stream(7, "demo", 3)
    >>> bool(a.standard_normal() == b.standard_normal())
    True
    >>> bool(stream(7, "demo", 3).random() == stream(7, "demo", 4).random())
    False
    """
    if index is None:
        key = (label_key(label),)
    else:
        key = (label_key(label), int(index))
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(sequence))


def path_streams(seed, label, count):
    """Return one stream per path, indexed ``0, ..., count - 1``.

    >>> len(path_streams(1, "paths", 2))
    2
    """
    return [stream(seed, label, i) for i in range(count)]


def thread_count(requested=None):
    """Return the worker cap.

    An explicit *requested* value wins, then the environment variable
    :envvar:`JUMPHJB_THREADS`, then a single worker.

    >>> thread_count(4)
    4
    """
    if requested:
        return max(1, int(requested))
    value = os.environ.get('JUMPHJB_THREADS')
    if value:
        return max(1, int(value))
    return 1


def parallel_map(func, items, threads=None):
    """Apply *func* to every item, preserving order.

    With a single worker this is a plain list comprehension, otherwise
    the items are spread over a thread pool. Results are assembled by
    index and so do not depend on completion order.

    >>> parallel_map(lambda x: x * x, [1, 2, 3], threads=2)
    [1, 4, 9]
    """
    items = list(items)
    workers = thread_count(threads)
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


#: Start times of running stages.
PHASES = {}

#: Durations of finished stages, in order of completion.
TIMINGS = []


def begin(result, phase):
    """Begin a stage.

    Use :func:`end` with a matching *phase* to record the end of the
    stage. The *result* argument is passed through so the calls can be
    wrapped around a computation.
    """
    PHASES[phase] = time.time()
    return result


def end(result, phase):
    """End a stage.

    This is the counter-part of :func:`begin`. It logs the duration of
    the stage and records it for :func:`stage_timings`.
    """
    stop = time.time()
    start = PHASES.pop(phase, stop)
    TIMINGS.append((phase, stop - start))
    log.debug("{phase} took {seconds:.3f} sec", phase=phase,
              seconds=stop - start)
    return result


def stage_timings():
    """Return the recorded stage durations as a list of pairs."""
    return list(TIMINGS)


def reset_stages():
    """Forget all recorded stages."""
    PHASES.clear()
    del TIMINGS[:]


def as_batch(x, dimension=None):
    """Return *x* as a 2-d batch of row vectors together with a flag
    telling if the input was a single vector.

    >>> batch, single = as_batch([1.0, 2.0])
    >>> batch.shape, single
    ((1, 2), True)
    >>> batch, single = as_batch(np.zeros((4, 2)))
    >>> batch.shape, single
    ((4, 2), False)
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1)
    if dimension is not None:
        assert x.shape[1] == dimension, \
            "Expected dimension %d, got %d." % (dimension, x.shape[1])
    return x, single


def unbatch(values, single):
    """Undo :func:`as_batch` on a per-row result.

    >>> unbatch(np.array([2.5]), True)
    2.5
    """
    if single:
        value = values[0]
        if np.ndim(value) == 0:
            return float(value)
        return value
    return values


def column(values, count):
    """Broadcast a scalar or per-row result to shape ``(count,)``.

    >>> column(1.5, 3).tolist()
    [1.5, 1.5, 1.5]
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(count, float(values))
    return values.reshape(count)


def envelope_constant(values, states, exponent):
    """Fit the constant C of the envelope ``|v| <= C (1 + |x|^exponent)``.

    The *values* are numbers or an array; *states* holds one state per
    value (or a single state).

    >>> envelope_constant(5.0, [2.0], 2)
    1.0
    """
    values = np.abs(np.atleast_1d(np.asarray(values, dtype=float)))
    states = np.asarray(states, dtype=float).reshape(len(values), -1)
    weight = 1 + np.linalg.norm(states, axis=1) ** exponent
    return float(np.max(values / weight))
