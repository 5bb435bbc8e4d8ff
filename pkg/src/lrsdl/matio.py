"""Matrix and label file I/O.

Two on-disk matrix formats:

* LMX binary: one ASCII header line ``LMX <rows> <cols>\\n`` followed by
  exactly rows*cols IEEE-754 float64 values, little-endian, row-major.
* CSV: comma-separated values, one matrix row per line, no header line.
  Values are written with 17 significant digits so a save/load cycle
  reproduces every double bit for bit.

``load_matrix`` sniffs the format from the file content. Label files hold
one integer per line (class ids 1..C).
"""

import numpy as np

from .errors import DataError, DimensionError, FormatError

_MAGIC = b"LMX "


def save_matrix(M, path, format="binary"):
    """Write a 2-d float matrix to ``path`` in LMX binary or CSV form."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {M.shape}")
    if format == "binary":
        header = f"LMX {M.shape[0]} {M.shape[1]}\n".encode("ascii")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
    elif format == "csv":
        lines = []
        for row in M:
            lines.append(",".join(f"{v:.17g}" for v in row))
        with open(path, "w") as fh:
            for line in lines:
                fh.write(line + "\n")
    else:
        raise FormatError(f"unknown matrix format {format!r}")


def load_matrix(path):
    """Read a matrix saved by :func:`save_matrix`, sniffing the format."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] == _MAGIC:
        return _parse_binary(blob, path)
    return _parse_csv(blob, path)


def _parse_binary(blob, path):
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: binary header has no newline")
    try:
        tokens = blob[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: header is not ASCII") from exc
    if len(tokens) != 3 or tokens[0] != "LMX":
        raise FormatError(f"{path}: malformed header {blob[:nl]!r}")
    try:
        rows, cols = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer dimensions in header") from exc
    if rows < 0 or cols < 0:
        raise FormatError(f"{path}: negative dimensions in header")
    payload = blob[nl + 1 :]
    expected = rows * cols * 8
    if len(payload) != expected:
        raise DimensionError(
            f"{path}: payload has {len(payload)} bytes, expected {expected} "
            f"for a {rows}x{cols} matrix"
        )
    M = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)
    if M.size and not np.isfinite(M).all():
        raise DataError(f"{path}: matrix contains NaN or Inf")
    return M


def _parse_csv(blob, path):
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not valid text") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        return np.zeros((0, 0))
    rows = []
    width = None
    for i, line in enumerate(lines):
        fields = [] if line.strip() == "" else line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DimensionError(
                f"{path}: row {i + 1} has {len(fields)} fields, expected {width}"
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise FormatError(f"{path}: unparseable value on row {i + 1}") from exc
    M = np.array(rows, dtype=float).reshape(len(rows), width or 0)
    if M.size and not np.isfinite(M).all():
        raise DataError(f"{path}: matrix contains NaN or Inf")
    return M


def save_labels(labels, path):
    labels = np.asarray(labels)
    with open(path, "w") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


def load_labels(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() != ""]
    try:
        labels = np.array([int(ln) for ln in lines], dtype=int)
    except ValueError as exc:
        raise FormatError(f"{path}: labels must be integers") from exc
    if labels.size and labels.min() < 1:
        raise DataError(f"{path}: labels must be >= 1")
    return labels
