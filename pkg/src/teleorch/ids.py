"""128-bit URL-safe identifiers; seedable for reproducible scenario runs."""

import base64
import random
import secrets


def _encode(raw: bytes) -> str:
    return base64.urlsafe_b64encode(raw).decode().rstrip("=")


class IdGenerator:
    """Random ids (default) or deterministic ids from a seed."""

    def __init__(self, seed: int | None = None):
        self._rng = random.Random(seed) if seed is not None else None

    def new_id(self) -> str:
        if self._rng is None:
            return _encode(secrets.token_bytes(16))
        return _encode(self._rng.getrandbits(128).to_bytes(16, "big"))

    # Invite/static tokens use the same space as entity ids.
    new_token = new_id
