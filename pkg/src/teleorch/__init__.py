"""Telehealth orchestration platform: multi-tenant clinical registry,
conference rooms with signaling relay, device ingestion, and robot fleet
teleoperation over a deterministic simulated world."""

__version__ = "0.1.0"

from .platform import Platform  # noqa: F401
