"""Injectable clocks so every duration and TTL test is deterministic."""

import time
from datetime import datetime, timezone


class SystemClock:
    def now(self) -> float:
        return time.time()


class SimClock:
    """Manually advanced clock; wall and monotonic views share one counter."""

    def __init__(self, start: float = 0.0):
        self._t = float(start)

    def now(self) -> float:
        return self._t

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        self._t += dt
        return self._t

    def set(self, t: float) -> None:
        if t < self._t:
            raise ValueError("clock cannot move backwards")
        self._t = float(t)


def iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


def parse_iso(s: str) -> float:
    return datetime.fromisoformat(s.replace("Z", "+00:00")).timestamp()
