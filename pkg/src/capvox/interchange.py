"""Bit-exact file formats shared across the toolkit.

The binary matrix container (FMAT) holds a dense row-major matrix:

    bytes 0..3   magic "FMAT"
    byte  4      version 0x01
    bytes 5..8   header length, unsigned 32-bit little-endian
    then         UTF-8 JSON header {dtype, shape, order, ids?}
    then         raw little-endian payload, rows*cols*width bytes

Word-state sequences travel as JSON lines referencing row ranges of a
companion FMAT of stacked states; voxel metadata is a small CSV. Every
reader maps each failure mode to a named error code and never crashes on
malformed bytes.
"""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .features import WordStateSequence
from .encoding import VoxelRecord, VoxelResponseMatrix

MAGIC = b"FMAT"
VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass
class FmatData:
    """A decoded matrix plus its stored dtype tag and optional row ids."""

    values: np.ndarray
    dtype: str
    ids: list | None = None


def _dtype_tag(values: np.ndarray) -> str:
    return "f32" if values.dtype == np.float32 else "f64"


def write_fmat(values, path, *, dtype: str | None = None, ids=None) -> None:
    """Write a dense 2-D matrix in the binary container format."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValidationError("only 2-D matrices can be written")
    if dtype is None:
        dtype = _dtype_tag(values)
    if dtype not in _DTYPES:
        raise ValidationError(f"unsupported dtype {dtype!r}; expected 'f32' or 'f64'")
    if ids is not None:
        ids = [str(i) for i in ids]
        if len(ids) != values.shape[0]:
            raise ValidationError(
                f"{len(ids)} row ids for {values.shape[0]} rows"
            )
    header = {
        "dtype": dtype,
        "shape": [int(values.shape[0]), int(values.shape[1])],
        "order": "row-major",
    }
    if ids is not None:
        header["ids"] = ids
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(values, dtype=_DTYPES[dtype]).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def read_fmat(path) -> FmatData:
    """Read a matrix container, validating every structural claim."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError(
            f"bad magic bytes {blob[:4]!r}; expected {MAGIC!r}", code="bad-magic"
        )
    if len(blob) < 5:
        raise FormatError("file ends before the version byte", code="truncated-header")
    if blob[4] != VERSION:
        raise FormatError(
            f"unsupported container version {blob[4]}; this reader handles {VERSION}",
            code="unsupported-version",
        )
    if len(blob) < 9:
        raise FormatError("file ends inside the header length field", code="truncated-header")
    (header_len,) = struct.unpack("<I", blob[5:9])
    if len(blob) < 9 + header_len:
        raise FormatError(
            f"header claims {header_len} bytes but only {len(blob) - 9} remain",
            code="truncated-header",
        )
    try:
        header = json.loads(blob[9 : 9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid JSON: {exc}", code="bad-header") from exc
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object", code="bad-header")
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise FormatError(f"unknown dtype {dtype!r}", code="bad-header")
    shape = header.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 2
        or not all(type(s) is int and s >= 0 for s in shape)
    ):
        raise FormatError(f"bad shape {shape!r}", code="bad-header")
    if header.get("order") != "row-major":
        raise FormatError(
            f"unsupported element order {header.get('order')!r}", code="bad-header"
        )
    rows, cols = shape
    ids = header.get("ids")
    if ids is not None:
        if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
            raise FormatError("ids must be an array of strings", code="bad-header")
        if len(ids) != rows:
            raise FormatError(
                f"{len(ids)} ids for {rows} rows", code="ids-length-mismatch"
            )
    payload = blob[9 + header_len :]
    expected = rows * cols * _DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes but {rows}x{cols} {dtype} "
            f"needs {expected}",
            code="payload-length-mismatch",
        )
    values = np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(rows, cols)
    return FmatData(values=values.copy(), dtype=dtype, ids=ids)


def write_word_states(seqs, jsonl_path, fmat_path, *, dtype: str = "f32") -> None:
    """Write sequences as JSON lines plus one stacked state matrix."""
    seqs = list(seqs)
    if not seqs:
        raise ValidationError("cannot write zero sequences")
    rows = []
    lines = []
    start = 0
    for seq in seqs:
        end = start + len(seq.tokens)
        lines.append(
            json.dumps(
                {
                    "image_id": seq.image_id,
                    "tokens": list(seq.tokens),
                    "state_rows": [start, end],
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
        rows.append(seq.states)
        start = end
    stacked = np.vstack([np.asarray(r) for r in rows])
    write_fmat(stacked, fmat_path, dtype=dtype)
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_word_states(jsonl_path, fmat_path) -> list:
    """Resolve JSON-line records against the companion state matrix."""
    states = read_fmat(fmat_path).values
    n_rows = states.shape[0]
    with open(jsonl_path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()

    seqs = []
    seen_ids = set()
    used = []
    any_line = False
    for lineno, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        any_line = True
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(
                f"line {lineno}: not valid JSON: {exc.msg}", code="bad-record"
            ) from exc
        if not isinstance(record, dict):
            raise FormatError(f"line {lineno}: record must be an object", code="bad-record")
        try:
            image_id = record["image_id"]
            tokens = record["tokens"]
            start, end = record["state_rows"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(
                f"line {lineno}: missing or malformed field ({exc})", code="bad-record"
            ) from exc
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise FormatError(
                f"line {lineno}: tokens must be an array of strings", code="bad-record"
            )
        if not isinstance(start, int) or not isinstance(end, int):
            raise FormatError(
                f"line {lineno}: state_rows must be two integers", code="bad-record"
            )
        if image_id in seen_ids:
            raise FormatError(
                f"line {lineno}: duplicate image id {image_id!r}",
                code="duplicate-image-id",
            )
        seen_ids.add(image_id)
        if end - start != len(tokens):
            raise FormatError(
                f"line {lineno}: {len(tokens)} tokens but state rows "
                f"[{start}, {end}) span {end - start}",
                code="range-mismatch",
            )
        if start < 0 or end > n_rows or start >= end:
            raise FormatError(
                f"line {lineno}: state rows [{start}, {end}) fall outside the "
                f"{n_rows}-row state matrix",
                code="range-out-of-bounds",
            )
        for other_start, other_end, other_line in used:
            if start < other_end and other_start < end:
                raise FormatError(
                    f"line {lineno}: state rows [{start}, {end}) overlap "
                    f"line {other_line}'s [{other_start}, {other_end})",
                    code="range-overlap",
                )
        used.append((start, end, lineno))
        seqs.append(
            WordStateSequence(
                image_id=image_id, tokens=tokens, states=states[start:end]
            )
        )
    if not any_line:
        warnings.warn("word-state file holds no records", stacklevel=2)
    return seqs


VOXEL_META_HEADER = ["voxel_id", "subject", "roi", "hemisphere"]


def write_voxel_meta(voxels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(VOXEL_META_HEADER)
        for v in voxels:
            writer.writerow([v.voxel_id, v.subject, v.roi, v.hemisphere])


def read_voxel_meta(path) -> list:
    """Parse the voxel metadata CSV, validating enumerations and uniqueness."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or rows[0] != VOXEL_META_HEADER:
        raise FormatError(
            f"expected header {','.join(VOXEL_META_HEADER)!r}", code="bad-header"
        )
    voxels = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise FormatError(
                f"line {lineno}: expected 4 fields, got {len(row)}", code="bad-record"
            )
        voxel_id, subject, roi, hemisphere = row
        if voxel_id in seen:
            raise FormatError(
                f"line {lineno}: duplicate voxel id {voxel_id!r}",
                code="duplicate-voxel-id",
            )
        seen.add(voxel_id)
        try:
            voxels.append(VoxelRecord(voxel_id, subject, roi, hemisphere))
        except ValidationError as exc:
            raise FormatError(f"line {lineno}: {exc}", code="bad-enum") from exc
    if not voxels:
        raise FormatError("metadata file lists no voxels", code="bad-record")
    return voxels


def read_responses(fmat_path, meta_path) -> VoxelResponseMatrix:
    """Assemble a response matrix from its value and metadata files."""
    data = read_fmat(fmat_path)
    voxels = read_voxel_meta(meta_path)
    if data.ids is None:
        raise FormatError(
            "response matrix carries no row ids; image ids are required",
            code="missing-ids",
        )
    if data.values.shape[1] != len(voxels):
        raise FormatError(
            f"response matrix has {data.values.shape[1]} columns but the "
            f"metadata lists {len(voxels)} voxels",
            code="count-mismatch",
        )
    return VoxelResponseMatrix(
        values=np.asarray(data.values, dtype=np.float64),
        image_ids=data.ids,
        voxels=voxels,
    )
