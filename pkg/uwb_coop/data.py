"""File formats: range logs, flight records, point-cloud frames and reports."""

import csv
import io
import json
import os
import struct
import tempfile

import numpy as np

from .flightsim import FlightRecord, Trajectory
from .groundtruth import PointCloudFrame
from .ranging import RangeMeasurement

RANGES_HEADER = ["t", "initiator_id", "responder_id", "range_m"]
RECORD_HEADER = ["t", "true_x", "true_y", "true_z", "yaw",
                 "est_x", "est_y", "est_z", "sp_x", "sp_y", "sp_z"]
ERRORS_HEADER = ["run_id", "separation_m", "kind", "axis", "t", "error_m"]
TRACK_HEADER = ["frame", "t", "x", "y", "z", "vx", "vy", "vz"]
ESTIMATES_HEADER = ["t", "est_x", "est_y", "est_z", "yaw", "residual_rms", "iterations", "converged"]


class DataFormatError(ValueError):
    """Malformed input file; `line` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def fmt(value):
    """Shortest round-trip text for a float; empty for NaN."""
    value = float(value)
    if value != value:
        return ""
    return repr(value)


def atomic_write(path, text):
    """Write via a temp file in the same directory, then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write(path, _csv_text(header, rows))


def write_json(path, data):
    atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def sidecar_path(path):
    return os.path.splitext(path)[0] + ".json"


def write_sidecar(path, metadata):
    write_json(sidecar_path(path), metadata)


# --- Range logs ---

def write_ranges_csv(path, measurements, metadata=None):
    rows = [(fmt(m.timestamp), m.initiator_id, m.responder_id, fmt(m.range)) for m in measurements]
    write_csv(path, RANGES_HEADER, rows)
    if metadata is not None:
        write_sidecar(path, metadata)


def _parse_row(row, types, path, line):
    if len(row) != len(types):
        raise DataFormatError(f"expected {len(types)} fields, got {len(row)}", path, line)
    values = []
    for name, kind, text in zip([t[0] for t in types], [t[1] for t in types], row):
        try:
            values.append(kind(text.strip()))
        except ValueError:
            raise DataFormatError(f"field {name!r} is not a valid {kind.__name__}: {text!r}",
                                  path, line) from None
    return values


def read_ranges_csv(path):
    types = [("t", float), ("initiator_id", int), ("responder_id", int), ("range_m", float)]
    measurements = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RANGES_HEADER:
            raise DataFormatError(f"header must be {','.join(RANGES_HEADER)}", path, 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            t, i, j, r = _parse_row(row, types, path, line)
            if not (np.isfinite(t) and np.isfinite(r)) or r < 0 or i < 0 or j < 0:
                raise DataFormatError("negative or non-finite value", path, line)
            measurements.append(RangeMeasurement(i, j, r, t))
    return measurements


# --- Flight records ---

def write_flight_record(path, record, extra_metadata=None):
    """Record CSV plus a JSON sidecar echoing the run configuration."""
    est = record.estimated_position
    rows = []
    for k in range(len(record)):
        row = [fmt(record.t[k]), *(fmt(v) for v in record.true_position[k]), fmt(record.yaw[k])]
        row += [fmt(v) for v in est[k]] if est is not None else ["", "", ""]
        row += [fmt(v) for v in record.setpoint[k]]
        rows.append(row)
    write_csv(path, RECORD_HEADER, rows)
    metadata = dict(record.metadata)
    if extra_metadata:
        metadata.update(extra_metadata)
    write_sidecar(path, metadata)


def read_flight_record(path):
    """Load a record CSV and its sidecar (measurements are not restored)."""
    meta_path = sidecar_path(path)
    if not os.path.exists(meta_path):
        raise DataFormatError("missing JSON sidecar", meta_path)
    with open(meta_path) as f:
        metadata = json.load(f)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RECORD_HEADER:
            raise DataFormatError(f"header must be {','.join(RECORD_HEADER)}", path, 1)
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(RECORD_HEADER):
                raise DataFormatError(f"expected {len(RECORD_HEADER)} fields", path, line)
            try:
                rows.append([float(v) if v != "" else np.nan for v in row])
            except ValueError:
                raise DataFormatError("non-numeric field", path, line) from None
    table = np.array(rows, dtype=float).reshape(-1, len(RECORD_HEADER))
    est = table[:, 5:8]
    return FlightRecord(
        t=table[:, 0], true_position=table[:, 1:4], yaw=table[:, 4],
        estimated_position=None if np.all(np.isnan(est)) else est,
        setpoint=table[:, 8:11],
        trajectory=Trajectory.from_dict(metadata["trajectory"]),
        metadata=metadata,
    )


# --- Point-cloud frames ---

FRAME_COUNT = struct.Struct("<I")


def write_frame_csv(path, frame):
    write_csv(path, ["x", "y", "z"], [[fmt(v) for v in p] for p in frame.points])


def read_frame_csv(path, frame_time=0.0):
    points = []
    with open(path, newline="") as f:
        for line, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if line == 1 and [c.strip() for c in row] == ["x", "y", "z"]:
                continue
            x, y, z = _parse_row(row, [("x", float), ("y", float), ("z", float)], path, line)
            points.append((x, y, z))
    return PointCloudFrame(np.array(points, dtype=float).reshape(-1, 3), frame_time)


def write_frame_bin(path, frame):
    payload = FRAME_COUNT.pack(len(frame)) + frame.points.astype("<f8").tobytes()
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(payload)


def read_frame_bin(path, frame_time=0.0):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < FRAME_COUNT.size:
        raise DataFormatError("truncated frame header", path)
    (count,) = FRAME_COUNT.unpack_from(data)
    expected = FRAME_COUNT.size + count * 24
    if len(data) != expected:
        raise DataFormatError(f"expected {expected} bytes for {count} points, got {len(data)}", path)
    points = np.frombuffer(data, dtype="<f8", offset=FRAME_COUNT.size).reshape(count, 3)
    return PointCloudFrame(points.astype(float), frame_time)


def load_frames(directory, frame_rate):
    """Frames from *.csv / *.bin files ordered by name; frame k is stamped k / frame_rate."""
    names = sorted(n for n in os.listdir(directory) if n.endswith((".csv", ".bin")))
    frames = []
    for k, name in enumerate(names):
        path = os.path.join(directory, name)
        reader = read_frame_bin if name.endswith(".bin") else read_frame_csv
        frames.append(reader(path, k / frame_rate))
    return frames, names
