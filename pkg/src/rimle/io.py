"""Reading data matrices, MAD standardization and result serialization.

Structured results are JSON documents with the fixed layout documented in
README.md. Floats are written with Python's shortest round-trip repr, so
reading a document back reproduces every value bit for bit.
"""

import contextlib
import csv
import json
import math
import os

import numpy as np

from .exceptions import ParseError, ZeroMADError
from .model import DataMatrix, MixtureParams

__all__ = [
    "RESULT_FORMAT",
    "RESULT_VERSION",
    "read_matrix",
    "write_matrix",
    "read_labels",
    "write_labels",
    "column_mad",
    "mad_standardize",
    "result_document",
    "write_result",
    "read_result",
]

RESULT_FORMAT = "rimle-result"
RESULT_VERSION = 1


@contextlib.contextmanager
def _open(target, mode):
    if isinstance(target, (str, bytes, os.PathLike)):
        with open(target, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
    else:
        yield target


def read_matrix(source, has_header=False, delimiter=","):
    """Read a numeric delimited table into a :class:`DataMatrix`.

    Rows are observations. Blank lines are skipped; every other row must have
    the same number of cells and every cell must parse as a finite float.

    Raises
    ------
    ParseError
        With the 1-based line and column of the first offending cell, or if
        the input holds no data rows.
    """
    rows = []
    width = None
    with _open(source, "r") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, cells in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not cells or all(not c.strip() for c in cells):
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(f"expected {width} cells, found {len(cells)}", row=lineno)
            values = []
            for col, cell in enumerate(cells, start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", row=lineno,
                                     column=col) from None
                if not math.isfinite(value):
                    raise ParseError(f"non-finite cell {cell!r}", row=lineno, column=col)
                values.append(value)
            rows.append(values)
    if not rows:
        raise ParseError("input contains no data rows")
    return DataMatrix(np.array(rows, dtype=np.float64))


def write_matrix(data, destination, delimiter=",", header=None):
    """Write a matrix as delimited text with full float precision."""
    values = np.asarray(getattr(data, "values", data), dtype=np.float64)
    with _open(destination, "w") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        for row in values:
            writer.writerow([repr(float(v)) for v in row])


def read_labels(source):
    """Read one integer label per line."""
    labels = []
    with _open(source, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ParseError(f"invalid label {line!r}", row=lineno) from None
    return np.array(labels, dtype=np.int64)


def write_labels(labels, destination):
    with _open(destination, "w") as fh:
        for label in labels:
            fh.write(f"{int(label)}\n")


def column_mad(values):
    """Median absolute deviation from the median of each column, without consistency factor."""
    values = np.asarray(values, dtype=np.float64)
    med = np.median(values, axis=0)
    return np.median(np.abs(values - med), axis=0)


def mad_standardize(data):
    """Divide every column by its MAD so that each column has MAD 1.

    The MAD carries no 1.4826 normal-consistency factor. The applied divisors
    are multiplied into ``column_scales``.

    Raises
    ------
    ZeroMADError
        If some column has MAD 0 (``exc.column`` is 1-based).
    """
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    mad = column_mad(data.values)
    zero = np.flatnonzero(mad == 0)
    if zero.size:
        raise ZeroMADError(int(zero[0]) + 1)
    scales = mad if data.column_scales is None else data.column_scales * mad
    return DataMatrix(data.values / mad, column_scales=scales)


def _float_or_none(value):
    value = float(value)
    return value if math.isfinite(value) else None


def result_document(fit, cfg, column_scales=None):
    """The structured result as a JSON-ready dict."""
    theta = fit.theta
    icd = cfg.icd
    return {
        "format": RESULT_FORMAT,
        "version": RESULT_VERSION,
        "config": {
            "n_components": cfg.n_components,
            "delta": icd.delta,
            "log_delta": _float_or_none(icd.log_delta),
            "gamma": cfg.gamma,
            "pi_max": cfg.pi_max,
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
            "n_starts": cfg.n_starts,
            "seed": cfg.seed,
            "min_component_mass": cfg.min_component_mass,
        },
        "parameters": {
            "noise_weight": theta.noise_weight,
            "weights": [float(w) for w in theta.weights],
            "means": theta.means.tolist(),
            "covariances": theta.covariances.tolist(),
        },
        "loglik": float(fit.loglik),
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "noise_proportion": float(fit.noise_proportion),
        "assignments": [int(a) for a in fit.assignments],
        "column_scales": None if column_scales is None else [float(s) for s in column_scales],
    }


def write_result(fit, cfg, destination, format="structured", column_scales=None):
    """Write a fit either as a structured JSON document or as bare labels.

    ``format="labels"`` writes one integer label per line, 0 meaning noise.
    """
    if format == "structured":
        doc = result_document(fit, cfg, column_scales)
        with _open(destination, "w") as fh:
            json.dump(doc, fh, indent=2, allow_nan=False)
            fh.write("\n")
    elif format in ("labels", "labels-only"):
        write_labels(fit.assignments, destination)
    else:
        raise ValueError(f"unknown result format {format!r}")


def read_result(source):
    """Load a structured result; adds a ``theta`` entry holding a :class:`MixtureParams`."""
    with _open(source, "r") as fh:
        doc = json.load(fh)
    if doc.get("format") != RESULT_FORMAT:
        raise ValueError(f"not a {RESULT_FORMAT} document")
    params = doc["parameters"]
    doc["theta"] = MixtureParams.from_arrays(
        params["noise_weight"], params["weights"], params["means"], params["covariances"])
    return doc
