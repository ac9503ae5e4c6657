"""QDTT binary time-tag file format.

Layout (all integers little-endian):

    offset  size  field
    0       4     magic "QDTT"
    4       2     version (u16), currently 1
    6       1     channel_count (u8)
    7       1     reserved (u8, zero)
    8       4     resolution_ps (u32); timestamps are stored in picoseconds,
                  the field is informational and written as 1
    12      8     record_count (u64)
    20      16*N  records

    record: channel (u8), reserved (7 bytes, zero), timestamp_ps (u64)

Records are time-ordered.  When importing vendor formats, map their channel
index onto ``channel``, their absolute tag time in ps onto ``timestamp_ps``
and leave the reserved bytes zero.
"""

import struct

import numpy as np

from .simulate import TimeTagStream

MAGIC = b"QDTT"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIQ")
_RECORD_DTYPE = np.dtype([("channel", "u1"), ("reserved", "V7"), ("timestamp_ps", "<u8")])


def write_qdtt(path, stream):
    """Write a time-tag stream; identical streams produce identical bytes."""
    channel_count = int(stream.channels.max()) + 1 if len(stream) else 2
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["channel"] = stream.channels
    records["timestamp_ps"] = stream.timestamps_ps
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, channel_count, 0, 1, len(stream)))
        records.tofile(fh)


def read_qdtt(path):
    """Read a QDTT file back into a TimeTagStream, validating the layout."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, channel_count, _, resolution, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r} at offset 0")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if resolution == 0:
            raise ValueError(f"{path}: resolution_ps must be nonzero (offset 8)")
        records = np.fromfile(fh, dtype=_RECORD_DTYPE)
    if records.size != count:
        raise ValueError(
            f"{path}: header promises {count} records, file holds {records.size} "
            f"(offset {_HEADER.size})"
        )
    channels = records["channel"]
    if records.size and int(channels.max()) >= channel_count:
        bad = int(np.argmax(channels >= channel_count))
        raise ValueError(
            f"{path}: record {bad} (offset {_HEADER.size + 16 * bad}) has channel "
            f"{int(channels[bad])} >= channel_count {channel_count}"
        )
    timestamps = records["timestamp_ps"].astype(np.uint64)
    if records.size > 1 and np.any(np.diff(timestamps.astype(np.int64)) < 0):
        bad = int(np.argmax(np.diff(timestamps.astype(np.int64)) < 0)) + 1
        raise ValueError(
            f"{path}: timestamps decrease at record {bad} "
            f"(offset {_HEADER.size + 16 * bad})"
        )
    return TimeTagStream(channels.copy(), timestamps)
