"""CSV and snapshot writers (one-line header, fixed columns, 9 significant digits)."""

import numpy as np

FLOAT_FORMAT = "%.9g"


def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(path, header, rows):
    """Write ``rows`` (iterable of sequences) under a comma-separated header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_columns(path, header, columns):
    """Write equal-length numeric columns."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FORMAT, delimiter=",")


def read_csv(path):
    """Return (header, float array) of a file written by this module."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_joint_snapshot(path, amplitudes, t, x_min, dx, q_min, dq):
    """Binary row-major complex128 array (axis 0 = x) after a text header.

    The header is ASCII lines ``key value`` ending with a line ``end``.
    """
    amp = np.ascontiguousarray(amplitudes, dtype="<c16")
    header = (f"bcwf-joint-snapshot 1\nt_fs {t!r}\nn_x {amp.shape[0]}\nn_q {amp.shape[1]}\n"
              f"x_min_nm {x_min!r}\ndx_nm {dx!r}\nq_min {q_min!r}\ndq {dq!r}\n"
              "dtype complex128-le\norder row-major\nend\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(amp.tobytes())


def read_joint_snapshot(path):
    """Return (meta dict, amplitudes) from :func:`write_joint_snapshot` output."""
    meta = {}
    with open(path, "rb") as fh:
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end":
                break
            key, _, value = line.partition(" ")
            meta[key] = value
        raw = fh.read()
    shape = (int(meta["n_x"]), int(meta["n_q"]))
    return meta, np.frombuffer(raw, dtype="<c16").reshape(shape)
