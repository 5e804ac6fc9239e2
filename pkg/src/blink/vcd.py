"""Streaming reader for four-state IEEE 1364 VCD dumps.

The reader is single-pass and chunk-buffered: memory use is independent of
file length. Values are carried as integer pairs (value, xz_mask) where a set
mask bit marks an x or z bit; value bits under the mask are forced to zero so
toggle math can ignore them.

Port-role convention: VCD carries no port-direction metadata, so a ``$var``
declared directly in a non-top ``module`` scope is treated as a boundary port
(``wire`` -> input, ``reg`` -> output) while vars in the top scope or in
non-module scopes are ``internal``. Both directions are candidates under the
default filter, so direction inference never changes the default candidate
set.
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import EmptyCandidateSet, MalformedBody, MalformedHeader

TIMESCALE_FS = {"fs": 1, "ps": 10**3, "ns": 10**6, "us": 10**9, "ms": 10**12}
TIMESCALE_MULTIPLIERS = (1, 10, 100)

_REG_KINDS = {b"reg", b"integer", b"time", b"trireg"}
_REAL_KINDS = {b"real", b"realtime"}
_RANGE_RE = re.compile(rb"^\[\d+(?::\d+)?\]$")
_NAME_RANGE_RE = re.compile(rb"^(.*?)\[\d+(?::\d+)?\]$")

_CHUNK_SIZE = 1 << 20
_WHITESPACE = b" \t\r\n"


@dataclass(frozen=True)
class Timescale:
    """Simulation tick length: multiplier in {1,10,100} times one unit."""

    multiplier: int
    unit: str

    def __post_init__(self):
        if self.unit not in TIMESCALE_FS:
            raise MalformedHeader(f"unknown timescale unit {self.unit!r}")
        if self.multiplier not in TIMESCALE_MULTIPLIERS:
            raise MalformedHeader(
                f"timescale multiplier must be 1, 10 or 100, got {self.multiplier}"
            )

    @property
    def femtoseconds(self) -> int:
        """Exact integer femtoseconds per tick."""
        return self.multiplier * TIMESCALE_FS[self.unit]

    def to_ticks(self, seconds: float) -> int:
        """Convert a duration in seconds to the nearest whole tick count."""
        return round(seconds * 1e15 / self.femtoseconds)

    def to_seconds(self, ticks: int) -> float:
        return ticks * self.femtoseconds * 1e-15


@dataclass(frozen=True)
class SignalEntry:
    id_code: str
    hier_name: str
    width: int
    kind: str  # wire | reg
    port_role: str  # input | output | internal


@dataclass
class SignalTable:
    """Hierarchy-resolved map of VCD id-codes to named signals."""

    entries: list[SignalEntry]
    timescale: Timescale
    top_scope: str

    def __post_init__(self):
        self._by_id = {e.id_code: e for e in self.entries}
        self._by_name = {e.hier_name: e for e in self.entries}

    def by_id(self, id_code: str) -> SignalEntry:
        return self._by_id[id_code]

    def find(self, hier_name: str) -> SignalEntry | None:
        return self._by_name.get(hier_name)

    def to_json_dict(self) -> dict:
        return {
            "timescale": {
                "multiplier": self.timescale.multiplier,
                "unit": self.timescale.unit,
            },
            "top_scope": self.top_scope,
            "entries": [
                {
                    "id_code": e.id_code,
                    "hier_name": e.hier_name,
                    "width": e.width,
                    "kind": e.kind,
                    "port_role": e.port_role,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SignalTable":
        ts = Timescale(d["timescale"]["multiplier"], d["timescale"]["unit"])
        entries = [SignalEntry(**e) for e in d["entries"]]
        return cls(entries=entries, timescale=ts, top_scope=d["top_scope"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SignalTable":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, slots=True)
class ValueEvent:
    """One value change; xz_mask bits flag x/z bit positions."""

    time: int
    signal: str  # id-code
    value: int
    xz_mask: int
    width: int


@dataclass
class EventBatch:
    """Packed value changes for candidate signals with width <= 64.

    A batch never splits a timestamp, so same-timestamp merging is local to
    the batch. ``wides`` carries (time, sig_index, value, xz_mask) tuples for
    candidates wider than 64 bits.
    """

    times: np.ndarray  # int64
    sigs: np.ndarray  # int64 candidate indices
    vals: np.ndarray  # uint64
    msks: np.ndarray  # uint64
    wides: list


@dataclass(frozen=True)
class CandidateFilter:
    """Hier-name glob include/exclude plus a port-role mask."""

    include: tuple = ("*",)
    exclude: tuple = ("*.clk", "*.rst*")
    roles: frozenset = frozenset({"input", "output"})


class VcdScanner:
    """Single-pass tokenizer over one VCD source (path, bytes, or stream)."""

    def __init__(self, source):
        if isinstance(source, (str, Path)):
            self._stream: BinaryIO = open(source, "rb")
            self._owns_stream = True
        elif isinstance(source, (bytes, bytearray)):
            self._stream = io.BytesIO(bytes(source))
            self._owns_stream = False
        else:
            self._stream = source
            self._owns_stream = False
        self._tail = b""
        self._eof = False
        self._chunk = b""
        self._chunk_base = 0  # byte offset of current chunk in the file
        self._consumed = 0  # bytes handed out so far (chunk starts)
        self._table: SignalTable | None = None
        self._body_leftover: list | None = None

    def close(self):
        if self._owns_stream:
            self._stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- chunked token supply ------------------------------------------------

    def _next_tokens(self) -> list | None:
        """Return the next chunk's whitespace-split tokens, or None at EOF."""
        while True:
            if self._eof and not self._tail:
                return None
            data = b"" if self._eof else self._stream.read(_CHUNK_SIZE)
            if not data:
                self._eof = True
                chunk, self._tail = self._tail, b""
            else:
                raw = self._tail + data
                cut = max(raw.rfind(c) for c in (b"\n", b" ", b"\t", b"\r"))
                if cut < 0:
                    self._tail = raw
                    continue
                chunk, self._tail = raw[: cut + 1], raw[cut + 1 :]
            if not chunk:
                continue
            self._chunk = chunk
            self._chunk_base = self._consumed
            self._consumed += len(chunk)
            tokens = chunk.split()
            if tokens:
                return tokens

    def _token_offset(self, index: int) -> int:
        """Exact byte offset of the index-th token of the current chunk."""
        raw = self._chunk
        pos = 0
        for k in range(index + 1):
            while pos < len(raw) and raw[pos] in _WHITESPACE:
                pos += 1
            if k == index:
                return self._chunk_base + pos
            while pos < len(raw) and raw[pos] not in _WHITESPACE:
                pos += 1
        return self._chunk_base + pos

    # -- header ----------------------------------------------------------------

    def header(self) -> SignalTable:
        """Parse declarations up to $enddefinitions and build the table."""
        if self._table is not None:
            return self._table

        entries: list[SignalEntry] = []
        seen_ids: set = set()
        seen_names: set = set()
        scope_stack: list = []  # (scope_type, name)
        top_scope = ""
        timescale: Timescale | None = None
        done = False

        def flush_var(parts: list):
            if len(parts) < 4:
                raise MalformedHeader(f"incomplete $var declaration: {parts!r}")
            kind_tok, width_tok, id_tok = parts[0], parts[1], parts[2]
            name_tok = parts[3]
            extra = parts[4:]
            if extra and not all(_RANGE_RE.match(tok) for tok in extra):
                raise MalformedHeader(f"unexpected token in $var: {extra!r}")
            m = _NAME_RANGE_RE.match(name_tok)
            if m:
                name_tok = m.group(1)
            if kind_tok in _REAL_KINDS:
                raise MalformedHeader(
                    f"real-valued variable {name_tok.decode('ascii', 'replace')!r} "
                    "is not supported"
                )
            try:
                width = int(width_tok)
            except ValueError:
                raise MalformedHeader(f"bad $var width token {width_tok!r}") from None
            if width < 1:
                raise MalformedHeader(f"$var width must be >= 1, got {width}")
            id_code = id_tok.decode("ascii")
            if id_code in seen_ids:
                raise MalformedHeader(f"duplicate id-code {id_code!r}")
            seen_ids.add(id_code)
            scope_path = ".".join(name for _, name in scope_stack)
            name = name_tok.decode("ascii")
            hier = f"{scope_path}.{name}" if scope_path else name
            if hier in seen_names:
                raise MalformedHeader(f"duplicate hierarchical name {hier!r}")
            seen_names.add(hier)
            kind = "reg" if kind_tok in _REG_KINDS else "wire"
            at_module_boundary = (
                len(scope_stack) >= 2 and scope_stack[-1][0] == "module"
            )
            if at_module_boundary:
                role = "output" if kind == "reg" else "input"
            else:
                role = "internal"
            entries.append(SignalEntry(id_code, hier, width, kind, role))

        cmd = None  # current $-command being collected
        parts: list = []
        while not done:
            tokens = self._next_tokens()
            if tokens is None:
                raise MalformedHeader("missing $enddefinitions before end of file")
            for i, tok in enumerate(tokens):
                if cmd is not None:
                    if tok == b"$end":
                        if cmd == b"$timescale":
                            text = b" ".join(parts)
                            m = re.match(rb"^(\d+)\s*([a-z]+)$", text)
                            if not m:
                                raise MalformedHeader(
                                    f"unparseable $timescale {text!r}"
                                )
                            timescale = Timescale(
                                int(m.group(1)), m.group(2).decode("ascii")
                            )
                        elif cmd == b"$scope":
                            if len(parts) != 2:
                                raise MalformedHeader(
                                    f"$scope expects type and name, got {parts!r}"
                                )
                            stype = parts[0].decode("ascii")
                            sname = parts[1].decode("ascii")
                            scope_stack.append((stype, sname))
                            if len(scope_stack) == 1:
                                top_scope = sname
                        elif cmd == b"$upscope":
                            if not scope_stack:
                                raise MalformedHeader("$upscope without open scope")
                            scope_stack.pop()
                        elif cmd == b"$var":
                            flush_var(parts)
                        elif cmd == b"$enddefinitions":
                            done = True
                            self._body_leftover = tokens[i + 1 :]
                        cmd = None
                        parts = []
                        if done:
                            break
                    else:
                        parts.append(tok)
                elif tok in (
                    b"$comment",
                    b"$date",
                    b"$version",
                    b"$timescale",
                    b"$scope",
                    b"$upscope",
                    b"$var",
                    b"$enddefinitions",
                ):
                    cmd = tok
                    parts = []
                else:
                    raise MalformedHeader(
                        f"unexpected token {tok!r} in header "
                        f"(byte offset {self._token_offset(i)})"
                    )

        if timescale is None:
            raise MalformedHeader("header lacks a $timescale declaration")
        self._table = SignalTable(entries, timescale, top_scope)
        return self._table

    # -- body ------------------------------------------------------------------

    def _body_chunks(self) -> Iterator[list]:
        if self._table is None:
            self.header()
        leftover, self._body_leftover = self._body_leftover, None
        if leftover:
            yield leftover
        while True:
            tokens = self._next_tokens()
            if tokens is None:
                return
            yield tokens

    def events(self) -> Iterator[ValueEvent]:
        """Yield every value change in file order with absolute time."""
        table = self.header()
        widths = {e.id_code.encode("ascii"): e.width for e in table.entries}
        now = 0
        prev_time = -1
        pending_vec = None  # (value_bits_token,) waiting for its id token
        skipping_comment = False
        for tokens in self._body_chunks():
            for i, tok in enumerate(tokens):
                if skipping_comment:
                    if tok == b"$end":
                        skipping_comment = False
                    continue
                if pending_vec is not None:
                    bits = pending_vec
                    pending_vec = None
                    width = widths.get(tok)
                    if width is None:
                        raise MalformedBody(
                            f"vector change for undeclared id-code {tok!r}",
                            self._token_offset(i),
                        )
                    value, mask = _parse_vector(bits, width, self, i)
                    yield ValueEvent(now, tok.decode("ascii"), value, mask, width)
                    continue
                lead = tok[0]
                if lead == 35:  # '#'
                    try:
                        now = int(tok[1:])
                    except ValueError:
                        raise MalformedBody(
                            f"bad timestamp token {tok!r}", self._token_offset(i)
                        ) from None
                    if now < prev_time:
                        raise MalformedBody(
                            f"time goes backwards: #{now} after #{prev_time}",
                            self._token_offset(i),
                        )
                    prev_time = now
                elif lead in (48, 49, 120, 88, 122, 90):  # 0 1 x X z Z
                    id_tok = tok[1:]
                    width = widths.get(id_tok)
                    if width is None:
                        raise MalformedBody(
                            f"scalar change for undeclared id-code {id_tok!r}",
                            self._token_offset(i),
                        )
                    if lead == 49:
                        value, mask = 1, 0
                    elif lead == 48:
                        value, mask = 0, 0
                    else:
                        value, mask = 0, (1 << width) - 1
                    yield ValueEvent(now, id_tok.decode("ascii"), value, mask, width)
                elif lead in (98, 66):  # b B
                    pending_vec = tok[1:]
                elif lead in (114, 82):  # r R
                    raise MalformedBody(
                        f"real value change {tok!r} is not supported",
                        self._token_offset(i),
                    )
                elif tok in (b"$dumpvars", b"$dumpall", b"$dumpon", b"$dumpoff", b"$end"):
                    continue
                elif tok == b"$comment":
                    skipping_comment = True
                else:
                    raise MalformedBody(
                        f"unexpected token {tok!r} in value-change section",
                        self._token_offset(i),
                    )
        if pending_vec is not None:
            raise MalformedBody("vector change truncated at end of file")

    def batches(
        self, candidates: Sequence[SignalEntry], batch_events: int = 1 << 16
    ) -> Iterator[EventBatch]:
        """Yield packed candidate events; non-candidates are validated and skipped.

        Flushes only at timestamp boundaries so same-timestamp merging stays
        batch-local.
        """
        table = self.header()
        # single-probe map: id -> candidate index, or -1 for declared non-candidates
        decode = {e.id_code.encode("ascii"): -1 for e in table.entries}
        wide_set = set()
        for ci, e in enumerate(candidates):
            decode[e.id_code.encode("ascii")] = ci
            if e.width > 64:
                wide_set.add(ci)
        widths = {e.id_code.encode("ascii"): e.width for e in table.entries}

        times: list = []
        sigs: list = []
        vals: list = []
        msks: list = []
        wides: list = []
        now = 0
        prev_time = -1
        pending_vec = None
        skipping_comment = False

        def flush():
            nonlocal times, sigs, vals, msks, wides
            batch = EventBatch(
                np.array(times, dtype=np.int64),
                np.array(sigs, dtype=np.int64),
                np.array(vals, dtype=np.uint64),
                np.array(msks, dtype=np.uint64),
                wides,
            )
            times, sigs, vals, msks, wides = [], [], [], [], []
            return batch

        for tokens in self._body_chunks():
            for i, tok in enumerate(tokens):
                if skipping_comment:
                    if tok == b"$end":
                        skipping_comment = False
                    continue
                if pending_vec is not None:
                    bits = pending_vec
                    pending_vec = None
                    ci = decode.get(tok)
                    if ci is None:
                        raise MalformedBody(
                            f"vector change for undeclared id-code {tok!r}",
                            self._token_offset(i),
                        )
                    if ci >= 0:
                        value, mask = _parse_vector(bits, widths[tok], self, i)
                        if ci in wide_set:
                            wides.append((now, ci, value, mask))
                        else:
                            times.append(now)
                            sigs.append(ci)
                            vals.append(value)
                            msks.append(mask)
                    continue
                lead = tok[0]
                if lead == 35:  # '#'
                    try:
                        t = int(tok[1:])
                    except ValueError:
                        raise MalformedBody(
                            f"bad timestamp token {tok!r}", self._token_offset(i)
                        ) from None
                    if t < prev_time:
                        raise MalformedBody(
                            f"time goes backwards: #{t} after #{prev_time}",
                            self._token_offset(i),
                        )
                    if (len(times) + len(wides)) >= batch_events and t != now:
                        yield flush()
                    prev_time = t
                    now = t
                elif lead in (48, 49, 120, 88, 122, 90):
                    id_tok = tok[1:]
                    ci = decode.get(id_tok)
                    if ci is None:
                        raise MalformedBody(
                            f"scalar change for undeclared id-code {id_tok!r}",
                            self._token_offset(i),
                        )
                    if ci >= 0:
                        width = widths[id_tok]
                        if lead == 49:
                            value, mask = 1, 0
                        elif lead == 48:
                            value, mask = 0, 0
                        else:
                            value, mask = 0, (1 << width) - 1
                        if ci in wide_set:
                            wides.append((now, ci, value, mask))
                        else:
                            times.append(now)
                            sigs.append(ci)
                            vals.append(value)
                            msks.append(mask)
                elif lead in (98, 66):
                    pending_vec = tok[1:]
                elif lead in (114, 82):
                    raise MalformedBody(
                        f"real value change {tok!r} is not supported",
                        self._token_offset(i),
                    )
                elif tok in (b"$dumpvars", b"$dumpall", b"$dumpon", b"$dumpoff", b"$end"):
                    continue
                elif tok == b"$comment":
                    skipping_comment = True
                else:
                    raise MalformedBody(
                        f"unexpected token {tok!r} in value-change section",
                        self._token_offset(i),
                    )
        if pending_vec is not None:
            raise MalformedBody("vector change truncated at end of file")
        if times or wides:
            yield flush()

    def events_for(self, id_codes: Iterable[str]) -> Iterator[ValueEvent]:
        """Yield events only for the given id-codes (fast filtered scan)."""
        wanted = {c.encode("ascii") for c in id_codes}
        table = self.header()
        entries = [table.by_id(c.decode("ascii")) for c in wanted]
        for batch in self.batches(entries, batch_events=1 << 14):
            by_idx = [e for e in entries]
            for t, s, v, m in zip(
                batch.times.tolist(),
                batch.sigs.tolist(),
                batch.vals.tolist(),
                batch.msks.tolist(),
            ):
                e = by_idx[s]
                yield ValueEvent(t, e.id_code, v, m, e.width)
            for t, s, v, m in batch.wides:
                e = by_idx[s]
                yield ValueEvent(t, e.id_code, v, m, e.width)


def _parse_vector(bits: bytes, width: int, scanner: VcdScanner, tok_index: int):
    """Decode a b-vector token body into (value, xz_mask) with IEEE extension."""
    n = len(bits)
    if n == 0:
        raise MalformedBody(
            "empty vector value token", scanner._token_offset(tok_index)
        )
    if n > width:
        raise MalformedBody(
            f"vector value has {n} bits but signal is {width} bits wide",
            scanner._token_offset(tok_index),
        )
    value = 0
    mask = 0
    for ch in bits:
        value <<= 1
        mask <<= 1
        if ch == 49:  # '1'
            value |= 1
        elif ch == 48:  # '0'
            pass
        elif ch in (120, 88, 122, 90):  # x X z Z
            mask |= 1
        else:
            raise MalformedBody(
                f"bad vector bit {chr(ch)!r}", scanner._token_offset(tok_index)
            )
    # leftmost bit rules the extension: 0/1 extend with 0, x/z extend with x/z
    if n < width and bits[0] in (120, 88, 122, 90):
        mask |= ((1 << (width - n)) - 1) << n
    return value, mask


# -- module-level operations ---------------------------------------------------


def parse_header(source) -> SignalTable:
    """Parse a VCD header into a SignalTable.

    ``source`` may be a path, bytes, or a binary stream positioned at file
    start. For streaming consumption of the same underlying file, use
    VcdScanner directly (it keeps the buffered position).
    """
    with VcdScanner(source) as scanner:
        return scanner.header()


def stream_events(source, table: SignalTable | None = None) -> Iterator[ValueEvent]:
    """Stream every value change of a VCD source in file order.

    Accepts the same sources as parse_header; the header region is re-scanned
    (cheaply) so callers need not carry stream positions around. When a table
    is supplied it is checked for consistency with the file's own header.
    """
    scanner = VcdScanner(source)
    own = scanner.header()
    if table is not None and table.to_json_dict() != own.to_json_dict():
        raise MalformedBody("supplied SignalTable does not match this file's header")
    try:
        yield from scanner.events()
    finally:
        scanner.close()


def resolve_candidates(
    table: SignalTable, filt: CandidateFilter | None = None
) -> list[SignalEntry]:
    """Deterministic, lexicographically ordered candidate signal list."""
    filt = filt or CandidateFilter()
    picked = []
    for e in table.entries:
        if e.port_role not in filt.roles:
            continue
        if not any(fnmatchcase(e.hier_name, g) for g in filt.include):
            continue
        if any(fnmatchcase(e.hier_name, g) for g in filt.exclude):
            continue
        picked.append(e)
    if not picked:
        raise EmptyCandidateSet(
            f"no signals match include={filt.include} roles={sorted(filt.roles)}"
        )
    picked.sort(key=lambda e: e.hier_name)
    return picked
