"""Time-tag file formats.

Binary: header "QTT1" + u64 record count + u64 run duration (ps), then
9-byte little-endian records of u8 channel + u64 time_ps, in global time
order.  CSV: a "channel,time_ps" header then one record per line.  Both
round-trip losslessly; parse errors name the exact byte offset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TagFormatError
from .source import TagStream

MAGIC = b"QTT1"
HEADER = struct.Struct("<4sQQ")
RECORD_DTYPE = np.dtype([("channel", "<u1"), ("time_ps", "<u8")])
assert RECORD_DTYPE.itemsize == 9


def _merge_streams(streams: dict[int, TagStream]) -> tuple[np.ndarray, int]:
    channels = []
    times = []
    duration = 0
    for ch, stream in streams.items():
        if ch != stream.channel:
            raise ValueError(f"stream keyed {ch} carries channel {stream.channel}")
        channels.append(np.full(len(stream), ch, dtype=np.uint8))
        times.append(stream.times)
        duration = max(duration, stream.duration_ps)
    if not channels:
        return np.empty(0, dtype=RECORD_DTYPE), duration
    ch = np.concatenate(channels)
    t = np.concatenate(times)
    order = np.argsort(t, kind="stable")
    records = np.empty(len(t), dtype=RECORD_DTYPE)
    records["channel"] = ch[order]
    records["time_ps"] = t[order]
    return records, duration


def write_tags(path, streams: dict[int, TagStream]) -> None:
    """Serialize per-channel streams to the binary tag format."""
    records, duration = _merge_streams(streams)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, len(records), duration))
        fh.write(records.tobytes())


def read_tags(path) -> dict[int, TagStream]:
    """Parse a binary tag file back into per-channel sorted streams."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TagFormatError("file shorter than header", offset=len(raw))
    magic, count, duration = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TagFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    body = len(raw) - HEADER.size
    expected = count * RECORD_DTYPE.itemsize
    if body != expected:
        if body < expected:  # truncated: first missing/partial record
            offset = HEADER.size + body - body % RECORD_DTYPE.itemsize
        else:  # trailing garbage: first unexpected byte
            offset = HEADER.size + expected
        raise TagFormatError(
            f"{count} records declared ({expected} bytes) but body has {body} bytes",
            offset=offset,
        )
    records = np.frombuffer(raw, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    return _split_records(records, int(duration), header_size=HEADER.size)


def _split_records(records: np.ndarray, duration_ps: int, header_size: int,
                   record_size: int | None = None) -> dict[int, TagStream]:
    record_size = RECORD_DTYPE.itemsize if record_size is None else record_size
    streams = {}
    for ch in np.unique(records["channel"]):
        idx = np.nonzero(records["channel"] == ch)[0]
        t = records["time_ps"][idx].astype(np.int64)
        if len(t) > 1:
            bad = np.nonzero(np.diff(t) < 0)[0]
            if len(bad):
                offender = idx[bad[0] + 1]
                raise TagFormatError(
                    f"channel {ch} times decrease at record {offender}",
                    offset=header_size + int(offender) * record_size,
                )
        streams[int(ch)] = TagStream(channel=int(ch), times=t, duration_ps=duration_ps)
    return streams


def write_tags_csv(path, streams: dict[int, TagStream]) -> None:
    """Serialize streams to the CSV form (channel,time_ps)."""
    records, _ = _merge_streams(streams)
    with open(path, "w") as fh:
        fh.write("channel,time_ps\n")
        for ch, t in zip(records["channel"], records["time_ps"]):
            fh.write(f"{ch},{t}\n")


def read_tags_csv(path, duration_ps: int = 0) -> dict[int, TagStream]:
    """Parse the CSV form; duration is not stored in CSV, pass it if known."""
    channels = []
    times = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "channel,time_ps":
            raise TagFormatError(f"bad CSV header {header.strip()!r}", offset=0)
        offset = len(header)
        for line_no, line in enumerate(fh, start=2):
            if line.strip():
                try:
                    ch, t = line.strip().split(",")
                    channels.append(int(ch))
                    times.append(int(t))
                except ValueError as exc:
                    raise TagFormatError(
                        f"malformed record on line {line_no}: {line.strip()!r}",
                        offset=offset,
                    ) from exc
            offset += len(line)
    records = np.empty(len(times), dtype=RECORD_DTYPE)
    records["channel"] = np.asarray(channels, dtype=np.uint8) if channels else []
    records["time_ps"] = np.asarray(times, dtype=np.uint64) if times else []
    return _split_records(records, duration_ps, header_size=0, record_size=0)
