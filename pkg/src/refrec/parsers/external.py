"""Parsers running as child processes, spoken to in line-delimited JSON.

Request line:  {"id": "<ref_id>", "ref": "<raw>"}
Response line: {"id": "<ref_id>", "fields": [{"type": "year", "value": "2008"}, ...]}
"""
from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
from typing import List, Optional, Sequence

from ..core import DEFAULT_TYPES, ParsedReference

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0
_EOF = object()


class ExternalParser:
    """One child process; requests are serialized and matched to responses by id."""

    def __init__(self, command: Sequence[str], timeout: float = DEFAULT_TIMEOUT,
                 types: Sequence[str] = DEFAULT_TYPES):
        self.command = list(command)
        self.timeout = timeout
        self.types = set(types)
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue" = queue.Queue()
        self._lock = threading.Lock()

    def _start(self) -> None:
        self._lines = queue.Queue()
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        reader = threading.Thread(target=self._read_loop, args=(self._proc, self._lines), daemon=True)
        reader.start()

    @staticmethod
    def _read_loop(proc: subprocess.Popen, lines: "queue.Queue") -> None:
        try:
            for line in proc.stdout:
                lines.put(line)
        except (OSError, ValueError):
            pass
        finally:
            lines.put(_EOF)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _decode(self, fields: list) -> ParsedReference:
        pairs = []
        for item in fields:
            type_, value = item["type"], item["value"]
            if not isinstance(type_, str) or not isinstance(value, str):
                raise ValueError("field type and value must be strings")
            if type_ not in self.types:
                log.warning("dropping field of unknown type %r from %s", type_, self.command[0])
                continue
            if value.strip():
                pairs.append((type_, value))
        return ParsedReference.of(pairs)

    def parse(self, raw: str, ref_id: str = "0") -> ParsedReference:
        with self._lock:
            try:
                return self._request(raw, ref_id)
            except Exception as exc:  # noqa: BLE001 - any failure is scored as no output
                log.warning("external parser %s failed on %s: %s", self.command[0], ref_id, exc)
                self.close()
                return ParsedReference.failure()

    def _request(self, raw: str, ref_id: str) -> ParsedReference:
        if self._proc is None or self._proc.poll() is not None:
            self.close()
            self._start()
        self._proc.stdin.write(json.dumps({"id": ref_id, "ref": raw}, ensure_ascii=False) + "\n")
        self._proc.stdin.flush()
        while True:
            line = self._lines.get(timeout=self.timeout)
            if line is _EOF:
                raise RuntimeError("process exited before responding")
            line = line.strip()
            if not line:
                continue
            msg = json.loads(line)
            if msg.get("id") != ref_id:
                # stale answer to an earlier, timed-out request
                continue
            return self._decode(msg["fields"])

    def parse_many(self, items: Sequence[tuple]) -> List[ParsedReference]:
        return [self.parse(raw, ref_id) for ref_id, raw in items]
