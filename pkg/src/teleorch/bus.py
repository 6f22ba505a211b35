"""In-process publish/subscribe bus with single-segment wildcard topics.

Delivery is per-(publisher, topic) FIFO, at-least-once within the process
lifetime. Slow subscribers get a bounded queue: overflow drops the oldest
frame and bumps a counter so the loss is observable.
"""

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import MalformedPattern, MalformedTopic

DEFAULT_QUEUE_LIMIT = 1024


def _valid_segments(s: str) -> list[str]:
    parts = s.split(".")
    if not s or any(p == "" for p in parts):
        return []
    return parts


def topic_matches(pattern: str, topic: str) -> bool:
    """`*` matches exactly one segment; segment counts must agree."""
    pp, tp = pattern.split("."), topic.split(".")
    if len(pp) != len(tp):
        return False
    return all(a == "*" or a == b for a, b in zip(pp, tp))


@dataclass
class BusEvent:
    topic: str
    seq: int
    ts: float
    publisher: str
    payload: Any


class Subscription:
    def __init__(self, pattern: str, limit: int, callback: Callable | None = None):
        self.pattern = pattern
        self.queue: deque[BusEvent] = deque()
        self.limit = limit
        self.dropped = 0
        self.callback = callback
        self.active = True

    def deliver(self, event: BusEvent) -> None:
        if self.callback is not None:
            self.callback(event)
            return
        if len(self.queue) >= self.limit:
            self.queue.popleft()
            self.dropped += 1
        self.queue.append(event)

    def drain(self) -> list[BusEvent]:
        out = list(self.queue)
        self.queue.clear()
        return out


class EventBus:
    def __init__(self, clock=None, queue_limit: int = DEFAULT_QUEUE_LIMIT):
        self._clock = clock
        self._limit = queue_limit
        self._subs: list[Subscription] = []
        self._seq: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    def publish(self, topic: str, payload: Any, publisher: str = "") -> int:
        if not _valid_segments(topic):
            raise MalformedTopic(f"bad topic {topic!r}")
        with self._lock:
            key = (publisher, topic)
            seq = self._seq.get(key, 0) + 1
            self._seq[key] = seq
            ts = self._clock.now() if self._clock else 0.0
            event = BusEvent(topic, seq, ts, publisher, payload)
            targets = [s for s in self._subs if s.active and topic_matches(s.pattern, topic)]
        for sub in targets:
            sub.deliver(event)
        return seq

    def subscribe(self, pattern: str, callback: Callable | None = None) -> Subscription:
        if not _valid_segments(pattern):
            raise MalformedPattern(f"bad pattern {pattern!r}")
        sub = Subscription(pattern, self._limit, callback)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            sub.active = False
            if sub in self._subs:
                self._subs.remove(sub)

    def stats(self) -> dict:
        with self._lock:
            return {
                "subscribers": len(self._subs),
                "queue_depths": [len(s.queue) for s in self._subs],
                "dropped": sum(s.dropped for s in self._subs),
            }
