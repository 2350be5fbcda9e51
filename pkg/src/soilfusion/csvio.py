"""Flat CSV formats for campaign inputs and fused datasets.

All files are UTF-8, comma separated, with a header row. Floats are written
with ``repr`` so a read/write round trip is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .data_model import (
    BAND_COLUMNS,
    DTHETA_COLUMN,
    N_RAW_BANDS,
    TARGET_NAME,
    Dataset,
    GprProfile,
    HyperspectralFrame,
    RawSpectrum,
    TdrSample,
)
from .errors import SchemaError

TDR_HEADER = ("plot_id", "timestamp", "depth_cm", "position_index", "theta")
GPR_HEADER = ("plot_id", "timestamp", "position_cm", "delta_theta")
HSI_HEADER = ("plot_id", "timestamp", "position_index") + tuple(f"band_{i:03d}" for i in range(N_RAW_BANDS))
DATASET_KEYS = ("plot_id", "timestamp", "position_index", "provenance")


def fmt(x: float) -> str:
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_rows(path, header: tuple[str, ...]):
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = tuple(next(reader))
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if got != header:
            raise SchemaError(f"{path}: unexpected header {','.join(got[:6])}...")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _num(path, lineno, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise SchemaError(f"{path}:{lineno}: cannot parse {text!r}") from None


# --------------------------------------------------------------------------- campaign inputs


def read_tdr(path) -> list[TdrSample]:
    out = []
    for ln, (plot, t, depth, pos, theta) in _read_rows(path, TDR_HEADER):
        try:
            out.append(TdrSample(
                plot_id=_num(path, ln, plot, int),
                timestamp=_num(path, ln, t, int),
                depth_cm=_num(path, ln, depth, int),
                position_index=_num(path, ln, pos, int),
                theta=_num(path, ln, theta),
            ))
        except SchemaError as e:
            raise SchemaError(f"{path}:{ln}: {e}") from None
    return out


def write_tdr(path, samples: Iterable[TdrSample]) -> None:
    rows = ((s.plot_id, s.timestamp, s.depth_cm, s.position_index, fmt(s.theta)) for s in samples)
    atomic_write_text(path, csv_text(TDR_HEADER, rows))


def read_gpr(path) -> list[GprProfile]:
    groups: dict[tuple[int, int], tuple[list[int], list[float]]] = {}
    for ln, (plot, t, pos, dth) in _read_rows(path, GPR_HEADER):
        key = (_num(path, ln, plot, int), _num(path, ln, t, int))
        cols = groups.setdefault(key, ([], []))
        cols[0].append(_num(path, ln, pos, int))
        cols[1].append(_num(path, ln, dth))
    profiles = []
    for (plot, t), (pos, dth) in sorted(groups.items()):
        order = np.argsort(pos, kind="stable")
        profiles.append(GprProfile(plot, t, np.asarray(pos)[order], np.asarray(dth)[order]))
    return profiles


def write_gpr(path, profiles: Iterable[GprProfile]) -> None:
    rows = (
        (p.plot_id, p.timestamp, int(x), fmt(v))
        for p in profiles
        for x, v in zip(p.positions_cm, p.delta_theta)
    )
    atomic_write_text(path, csv_text(GPR_HEADER, rows))


def read_hsi(path) -> list[HyperspectralFrame]:
    groups: dict[tuple[int, int], dict[int, RawSpectrum]] = {}
    for ln, row in _read_rows(path, HSI_HEADER):
        key = (_num(path, ln, row[0], int), _num(path, ln, row[1], int))
        pos = _num(path, ln, row[2], int)
        bands = [_num(path, ln, v) for v in row[3:]]
        pixels = groups.setdefault(key, {})
        if pos in pixels:
            raise SchemaError(f"{path}:{ln}: duplicate pixel plot={key[0]} t={key[1]} pos={pos}")
        try:
            pixels[pos] = RawSpectrum(bands)
        except SchemaError as e:
            raise SchemaError(f"{path}:{ln}: {e}") from None
    return [HyperspectralFrame(p, t, px) for (p, t), px in sorted(groups.items())]


def write_hsi(path, frames: Iterable[HyperspectralFrame]) -> None:
    rows = (
        (f.plot_id, f.timestamp, pos, *map(fmt, spec.bands))
        for f in frames
        for pos, spec in f.pixels.items()
    )
    atomic_write_text(path, csv_text(HSI_HEADER, rows))


def read_campaign(directory):
    """Load ``hsi.csv``, ``gpr.csv`` and ``tdr.csv`` from a directory."""
    d = Path(directory)
    return read_hsi(d / "hsi.csv"), read_gpr(d / "gpr.csv"), read_tdr(d / "tdr.csv")


# --------------------------------------------------------------------------- datasets


def dataset_header(ds: Dataset) -> tuple[str, ...]:
    return DATASET_KEYS + ds.schema + (ds.target_name,)


def dataset_csv(ds: Dataset) -> str:
    rows = (
        (
            int(ds.plot_id[i]),
            int(ds.timestamp[i]),
            int(ds.position_index[i]),
            ds.provenance[i],
            *map(fmt, ds.features[i]),
            fmt(ds.target[i]),
        )
        for i in range(len(ds))
    )
    return csv_text(dataset_header(ds), rows)


def write_dataset(path, ds: Dataset) -> None:
    atomic_write_text(path, dataset_csv(ds))


def read_dataset(path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_dataset(fh, str(path))


def parse_dataset(stream, name: str = "dataset") -> Dataset:
    """Parse dataset.csv content from a text stream or string."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = tuple(next(reader, ()))
    with_dtheta = DTHETA_COLUMN in header
    expected = DATASET_KEYS + BAND_COLUMNS + ((DTHETA_COLUMN,) if with_dtheta else ()) + (TARGET_NAME,)
    if header != expected:
        raise SchemaError(f"{name}: unexpected header {','.join(header[:6])}...")
    cols: dict[str, list] = {k: [] for k in ("plot_id", "timestamp", "position_index", "provenance", "features", "target")}
    for ln, row in enumerate(reader, start=2):
        if len(row) != len(expected):
            raise SchemaError(f"{name}:{ln}: expected {len(expected)} fields, got {len(row)}")
        cols["plot_id"].append(_num(name, ln, row[0], int))
        cols["timestamp"].append(_num(name, ln, row[1], int))
        cols["position_index"].append(_num(name, ln, row[2], int))
        cols["provenance"].append(row[3])
        cols["features"].append([_num(name, ln, v) for v in row[4:-1]])
        cols["target"].append(_num(name, ln, row[-1]))
    width = len(expected) - len(DATASET_KEYS) - 1
    return Dataset(
        plot_id=cols["plot_id"],
        timestamp=cols["timestamp"],
        position_index=cols["position_index"],
        provenance=np.array(cols["provenance"], dtype=object),
        features=np.asarray(cols["features"], dtype=np.float64).reshape(-1, width),
        target=cols["target"],
        schema=expected[len(DATASET_KEYS):-1],
    )
