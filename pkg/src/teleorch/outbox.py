"""Outbound-message sink standing in for e-mail delivery."""

import json


class Outbox:
    """Records messages in memory; optionally mirrors them to a JSONL file."""

    def __init__(self, clock, path: str | None = None):
        self.clock = clock
        self.path = path
        self.messages: list[dict] = []

    def send(self, to: str, subject: str, body: str,
             join_url: str | None = None, slot_ts: float | None = None) -> dict:
        message = {"to": to, "subject": subject, "body": body,
                   "join_url": join_url, "ts": self.clock.now()}
        if slot_ts is not None:
            message["slot_ts"] = slot_ts
        self.messages.append(message)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(message, sort_keys=True) + "\n")
        return message

    def for_recipient(self, to: str) -> list[dict]:
        return [m for m in self.messages if m["to"] == to]
