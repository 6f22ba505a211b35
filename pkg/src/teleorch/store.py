"""Transactional document store keyed by (kind, id).

In-memory for tests, file-backed for deployments. Writes to a single
aggregate happen under the store lock; cross-aggregate operations wrap
their reads and writes in ``transaction()``.
"""

import copy
import json
import os
import threading
from typing import Any, Iterator


class MemoryStore:
    def __init__(self):
        self._docs: dict[tuple[str, str], dict] = {}
        self._lock = threading.RLock()

    def transaction(self):
        return self._lock

    def put(self, kind: str, doc_id: str, doc: dict) -> None:
        with self._lock:
            self._docs[(kind, doc_id)] = copy.deepcopy(doc)
            self._flush()

    def get(self, kind: str, doc_id: str) -> dict | None:
        with self._lock:
            doc = self._docs.get((kind, doc_id))
            return copy.deepcopy(doc) if doc is not None else None

    def exists(self, kind: str, doc_id: str) -> bool:
        with self._lock:
            return (kind, doc_id) in self._docs

    def delete(self, kind: str, doc_id: str) -> None:
        with self._lock:
            self._docs.pop((kind, doc_id), None)
            self._flush()

    def list(self, kind: str) -> Iterator[dict]:
        with self._lock:
            docs = [copy.deepcopy(d) for (k, _), d in self._docs.items() if k == kind]
        return iter(docs)

    def _flush(self) -> None:
        pass


class FileStore(MemoryStore):
    """JSON-file persistence; every committed write rewrites the snapshot."""

    def __init__(self, path: str):
        super().__init__()
        self._path = path
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                raw: dict[str, Any] = json.load(fh)
            for key, doc in raw.items():
                kind, _, doc_id = key.partition("/")
                self._docs[(kind, doc_id)] = doc

    def _flush(self) -> None:
        snapshot = {f"{k}/{i}": d for (k, i), d in self._docs.items()}
        tmp = self._path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(snapshot, fh)
        os.replace(tmp, self._path)
