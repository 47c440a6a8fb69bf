"""Seeded synthetic input streams at a given activity."""

from __future__ import annotations

import numpy as np

from .events import Event, EventStream, MAX_T


def gen_stream(channels: int, height: int, width: int, T: int, activity: float,
               seed: int = 0, rst: bool = True) -> EventStream:
    """Uniformly random UPDATE events covering ``activity`` of all (c, y, x, t) sites.

    ``round(activity * sites)`` distinct sites are drawn without replacement.
    The stream opens with a RST and closes every timestep with a FIRE.
    """
    if not 0.0 <= activity <= 1.0:
        raise ValueError(f"activity must be in [0, 1], got {activity}")
    if min(channels, height, width, T) < 1:
        raise ValueError("stream dimensions must be positive")
    if T > MAX_T + 1:
        raise ValueError(f"T={T} exceeds the {MAX_T + 1}-step timestamp range")
    per_t = channels * height * width
    n = round(activity * per_t * T)
    rng = np.random.default_rng(seed)
    sites = np.sort(rng.choice(per_t * T, size=n, replace=False))
    t, rem = np.divmod(sites, per_t)
    c, rem = np.divmod(rem, height * width)
    y, x = np.divmod(rem, width)
    out = [Event.rst(0)] if rst else []
    k = 0
    for step in range(T):
        while k < n and t[k] == step:
            out.append(Event.update(int(c[k]), step, int(x[k]), int(y[k])))
            k += 1
        out.append(Event.fire(step))
    return EventStream(tuple(out), t_max=T)


def gen_counted_stream(channels: int, height: int, width: int, n_events: int, T: int,
                       seed: int = 0) -> EventStream:
    """Like :func:`gen_stream` but with an exact UPDATE count."""
    sites = channels * height * width * T
    if not 0 <= n_events <= sites:
        raise ValueError(f"{n_events} events do not fit {sites} sites")
    return gen_stream(channels, height, width, T, n_events / sites, seed)
