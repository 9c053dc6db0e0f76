"""Simulation event records and the newline-delimited log format."""

from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional


class EventKind(str, enum.Enum):
    CACHE_ACCESS = "CacheAccess"
    PACKET_HOP = "PacketHop"
    MC_ENQUEUE = "McEnqueue"
    FLUSH = "Flush"
    REHOME = "Rehome"
    RECONFIG = "Reconfig"
    ENCLAVE_ENTER = "EnclaveEnter"
    ENCLAVE_EXIT = "EnclaveExit"
    IPC_SEND = "IpcSend"
    IPC_RECV = "IpcRecv"
    SPEC_DISCARD = "SpecDiscard"
    FAULT = "Fault"


class LogParseError(ValueError):
    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


# optional fields, in serialization order
_OPTIONAL = ("structure", "tile", "line", "page", "hit", "owner", "write", "path", "pkt",
             "mc", "region", "access_id", "app_id", "home", "detail")


@dataclass(slots=True)
class SimEvent:
    time: float
    kind: EventKind
    pid: int
    cluster: str
    structure: Optional[str] = None
    tile: Optional[int] = None
    line: Optional[int] = None
    page: Optional[int] = None
    hit: Optional[bool] = None
    owner: Optional[int] = None
    write: Optional[bool] = None
    path: Optional[list] = None
    pkt: Optional[str] = None
    mc: Optional[int] = None
    region: Optional[int] = None
    access_id: Optional[int] = None
    app_id: Optional[int] = None
    home: Optional[int] = None
    detail: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {"time": self.time, "kind": self.kind.value, "pid": self.pid, "cluster": self.cluster}
        for name in _OPTIONAL:
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimEvent":
        kw = {k: d[k] for k in _OPTIONAL if k in d}
        if "path" in kw:
            kw["path"] = [list(c) for c in kw["path"]]
        return cls(time=float(d["time"]), kind=EventKind(d["kind"]), pid=int(d["pid"]),
                   cluster=str(d["cluster"]), **kw)


@dataclass
class EventLog:
    header: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def append(self, ev: SimEvent) -> None:
        self.events.append(ev)

    def count(self, kind: EventKind) -> int:
        return sum(1 for e in self.events if e.kind == kind)

    def of_kind(self, kind: EventKind) -> list:
        return [e for e in self.events if e.kind == kind]

    def __len__(self):
        return len(self.events)

    def lines(self) -> Iterable[str]:
        yield json.dumps({"record": "header", **self.header}, sort_keys=True)
        for ev in self.events:
            yield json.dumps(ev.to_dict(), sort_keys=True)

    def write(self, path: str) -> None:
        _atomic_write(path, "".join(line + "\n" for line in self.lines()))

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "EventLog":
        log = cls()
        seen_header = False
        for no, raw in enumerate(lines, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec: Any = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise LogParseError(no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise LogParseError(no, "record is not an object")
            if rec.get("record") == "header":
                if seen_header:
                    raise LogParseError(no, "duplicate header")
                seen_header = True
                rec.pop("record")
                log.header = rec
                continue
            try:
                log.events.append(SimEvent.from_dict(rec))
            except (KeyError, ValueError, TypeError) as exc:
                raise LogParseError(no, f"malformed event ({exc})") from None
        if not seen_header:
            raise LogParseError(1, "missing header record")
        return log

    @classmethod
    def read(cls, path: str) -> "EventLog":
        with open(path) as fh:
            return cls.parse(fh)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
