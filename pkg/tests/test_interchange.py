"""Binary matrix container, word-state files, and voxel metadata I/O."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capvox import (
    FormatError,
    ValidationError,
    VoxelRecord,
    WordStateSequence,
    read_fmat,
    read_responses,
    read_voxel_meta,
    read_word_states,
    write_fmat,
    write_voxel_meta,
    write_word_states,
)

MAGIC = b"FMAT"


def make_fmat_bytes(header: dict, payload: bytes, version: int = 1) -> bytes:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + bytes([version]) + struct.pack("<I", len(header_bytes)) + header_bytes + payload


def good_header(rows=2, cols=2, dtype="f64", ids=None) -> dict:
    header = {"dtype": dtype, "shape": [rows, cols], "order": "row-major"}
    if ids is not None:
        header["ids"] = ids
    return header


# ----------------------------------------------------------------------- fmat

def test_fmat_known_byte_layout(tmp_path):
    path = tmp_path / "m.fmat"
    values = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    write_fmat(values, path)
    blob = path.read_bytes()
    assert blob[:4] == b"FMAT"
    assert blob[4] == 1
    header_len = struct.unpack("<I", blob[5:9])[0]
    header = json.loads(blob[9 : 9 + header_len])
    assert header == {"dtype": "f32", "shape": [2, 2], "order": "row-major"}
    payload = blob[9 + header_len :]
    assert payload == struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)


def test_fmat_roundtrip_f64_with_ids(tmp_path):
    path = tmp_path / "m.fmat"
    values = np.array([[0.1, -2.5e300, 3e-300], [np.pi, np.e, -0.0]])
    write_fmat(values, path, ids=["a", "b"])
    data = read_fmat(path)
    assert data.dtype == "f64"
    assert data.ids == ["a", "b"]
    assert data.values.dtype == np.dtype("<f8")
    np.testing.assert_array_equal(data.values, values)


def test_fmat_write_deterministic(tmp_path):
    values = np.arange(12.0).reshape(3, 4)
    p1, p2 = tmp_path / "a.fmat", tmp_path / "b.fmat"
    write_fmat(values, p1, ids=["x", "y", "z"])
    write_fmat(values, p2, ids=["x", "y", "z"])
    assert p1.read_bytes() == p2.read_bytes()


def test_fmat_f32_cast_on_write(tmp_path):
    path = tmp_path / "m.fmat"
    values = np.array([[1.0000000001, 2.0]])
    write_fmat(values, path, dtype="f32")
    data = read_fmat(path)
    assert data.dtype == "f32"
    np.testing.assert_array_equal(data.values, values.astype(np.float32))


@settings(max_examples=50, deadline=None)
@given(
    rows=st.integers(0, 6),
    cols=st.integers(0, 6),
    tag=st.sampled_from(["f32", "f64"]),
    with_ids=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_fmat_roundtrip_property(tmp_path_factory, rows, cols, tag, with_ids, seed):
    rng = np.random.default_rng(seed)
    np_dtype = np.float32 if tag == "f32" else np.float64
    values = rng.standard_normal((rows, cols)).astype(np_dtype)
    ids = [f"id{i}" for i in range(rows)] if with_ids else None
    path = tmp_path_factory.mktemp("fmat") / "m.fmat"
    write_fmat(values, path, dtype=tag, ids=ids)
    data = read_fmat(path)
    assert data.dtype == tag
    assert data.ids == ids
    assert data.values.shape == (rows, cols)
    np.testing.assert_array_equal(data.values, values)


def test_fmat_write_validation(tmp_path):
    path = tmp_path / "m.fmat"
    with pytest.raises(ValidationError, match="2-D"):
        write_fmat(np.zeros(3), path)
    with pytest.raises(ValidationError, match="dtype"):
        write_fmat(np.zeros((2, 2)), path, dtype="i8")
    with pytest.raises(ValidationError, match="ids"):
        write_fmat(np.zeros((2, 2)), path, ids=["only-one"])


def expect_code(path, code):
    with pytest.raises(FormatError) as err:
        read_fmat(path)
    assert err.value.code == code
    return err.value


def test_fmat_bad_magic(tmp_path):
    path = tmp_path / "m.fmat"
    path.write_bytes(b"NOPE" + bytes(20))
    expect_code(path, "bad-magic")
    path.write_bytes(b"FM")
    expect_code(path, "bad-magic")


def test_fmat_truncations(tmp_path):
    path = tmp_path / "m.fmat"
    path.write_bytes(MAGIC)
    expect_code(path, "truncated-header")
    path.write_bytes(MAGIC + b"\x01" + b"\x00\x00")
    expect_code(path, "truncated-header")
    # Header length claims more bytes than the file holds.
    path.write_bytes(MAGIC + b"\x01" + struct.pack("<I", 1000) + b"{}")
    expect_code(path, "truncated-header")


def test_fmat_unsupported_version(tmp_path):
    path = tmp_path / "m.fmat"
    path.write_bytes(make_fmat_bytes(good_header(0, 0), b"", version=2))
    expect_code(path, "unsupported-version")


def test_fmat_bad_header_variants(tmp_path):
    path = tmp_path / "m.fmat"
    cases = [
        b"not json",
        json.dumps([1, 2]).encode(),
    ]
    for header_bytes in cases:
        path.write_bytes(
            MAGIC + b"\x01" + struct.pack("<I", len(header_bytes)) + header_bytes
        )
        expect_code(path, "bad-header")

    bad_headers = [
        good_header(dtype="f16"),
        {"dtype": "f64", "order": "row-major"},
        {"dtype": "f64", "shape": [2], "order": "row-major"},
        {"dtype": "f64", "shape": [2.0, 2], "order": "row-major"},
        {"dtype": "f64", "shape": [-1, 2], "order": "row-major"},
        {"dtype": "f64", "shape": [True, 2], "order": "row-major"},
        {"dtype": "f64", "shape": [2, 2], "order": "column-major"},
        good_header(ids=[1, 2]),
    ]
    for header in bad_headers:
        payload = bytes(8 * 4)
        path.write_bytes(make_fmat_bytes(header, payload))
        expect_code(path, "bad-header")


def test_fmat_ids_length_mismatch(tmp_path):
    path = tmp_path / "m.fmat"
    path.write_bytes(make_fmat_bytes(good_header(2, 2, ids=["a"]), bytes(32)))
    expect_code(path, "ids-length-mismatch")


def test_fmat_payload_length_mismatch(tmp_path):
    path = tmp_path / "m.fmat"
    path.write_bytes(make_fmat_bytes(good_header(2, 2), bytes(31)))
    err = expect_code(path, "payload-length-mismatch")
    assert "31" in str(err) and "32" in str(err)
    path.write_bytes(make_fmat_bytes(good_header(2, 2), bytes(33)))
    expect_code(path, "payload-length-mismatch")


def test_fmat_header_ignores_unknown_keys(tmp_path):
    # Forward compatibility: extra header keys pass through unharmed.
    path = tmp_path / "m.fmat"
    header = good_header(1, 2)
    header["comment"] = "extra"
    path.write_bytes(make_fmat_bytes(header, struct.pack("<2d", 5.0, 6.0)))
    data = read_fmat(path)
    np.testing.assert_array_equal(data.values, [[5.0, 6.0]])


# ---------------------------------------------------------------- word states

def make_seqs():
    rng = np.random.default_rng(0)
    return [
        WordStateSequence("img0", ["a", "red", "dog"], rng.standard_normal((3, 4)).astype(np.float32)),
        WordStateSequence("img1", ["blue", "sky"], rng.standard_normal((2, 4)).astype(np.float32)),
    ]


def test_word_states_roundtrip(tmp_path):
    seqs = make_seqs()
    jsonl, fmat = tmp_path / "s.jsonl", tmp_path / "s.fmat"
    write_word_states(seqs, jsonl, fmat)
    loaded = read_word_states(jsonl, fmat)
    assert [s.image_id for s in loaded] == ["img0", "img1"]
    for got, want in zip(loaded, seqs):
        assert got.tokens == want.tokens
        np.testing.assert_array_equal(got.states, want.states)


def test_word_states_ranges_are_contiguous(tmp_path):
    seqs = make_seqs()
    jsonl, fmat = tmp_path / "s.jsonl", tmp_path / "s.fmat"
    write_word_states(seqs, jsonl, fmat)
    records = [json.loads(line) for line in jsonl.read_text().splitlines()]
    assert records[0]["state_rows"] == [0, 3]
    assert records[1]["state_rows"] == [3, 5]


def test_word_states_write_rejects_empty(tmp_path):
    with pytest.raises(ValidationError, match="zero"):
        write_word_states([], tmp_path / "s.jsonl", tmp_path / "s.fmat")


def write_state_fixture(tmp_path, lines, n_rows=5, dim=4):
    jsonl, fmat = tmp_path / "s.jsonl", tmp_path / "s.fmat"
    write_fmat(np.zeros((n_rows, dim), dtype=np.float32), fmat)
    jsonl.write_text("\n".join(lines) + "\n" if lines else "")
    return jsonl, fmat


def expect_word_code(tmp_path, lines, code, match=None):
    jsonl, fmat = write_state_fixture(tmp_path, lines)
    with pytest.raises(FormatError, match=match) as err:
        read_word_states(jsonl, fmat)
    assert err.value.code == code


def record(image_id, tokens, rows):
    return json.dumps({"image_id": image_id, "tokens": tokens, "state_rows": rows})


def test_word_states_bad_record_variants(tmp_path):
    expect_word_code(tmp_path, ["{ nope"], "bad-record", match="line 1")
    expect_word_code(tmp_path, ['"just a string"'], "bad-record")
    expect_word_code(tmp_path, ['{"image_id": "a"}'], "bad-record")
    expect_word_code(tmp_path, [record("a", [1, 2], [0, 2])], "bad-record")
    expect_word_code(
        tmp_path,
        ['{"image_id": "a", "tokens": ["x"], "state_rows": [0.0, 1]}'],
        "bad-record",
    )


def test_word_states_duplicate_image_id(tmp_path):
    lines = [record("a", ["x"], [0, 1]), record("a", ["y"], [1, 2])]
    expect_word_code(tmp_path, lines, "duplicate-image-id", match="line 2")


def test_word_states_range_mismatch(tmp_path):
    expect_word_code(tmp_path, [record("a", ["x", "y"], [0, 1])], "range-mismatch")


def test_word_states_range_out_of_bounds(tmp_path):
    expect_word_code(tmp_path, [record("a", ["x"], [-1, 0])], "range-out-of-bounds")
    expect_word_code(tmp_path, [record("a", ["x"], [5, 6])], "range-out-of-bounds")
    expect_word_code(
        tmp_path,
        [record("a", ["x", "y", "z", "w", "v", "u"], [0, 6])],
        "range-out-of-bounds",
    )


def test_word_states_range_overlap(tmp_path):
    lines = [record("a", ["x", "y"], [0, 2]), record("b", ["z", "w"], [1, 3])]
    expect_word_code(tmp_path, lines, "range-overlap", match="line 2")


def test_word_states_empty_file_warns(tmp_path):
    jsonl, fmat = write_state_fixture(tmp_path, [])
    with pytest.warns(UserWarning, match="no records"):
        assert read_word_states(jsonl, fmat) == []


def test_word_states_blank_lines_skipped(tmp_path):
    seqs = make_seqs()
    jsonl, fmat = tmp_path / "s.jsonl", tmp_path / "s.fmat"
    write_word_states(seqs, jsonl, fmat)
    jsonl.write_text("\n" + jsonl.read_text().replace("\n", "\n\n"))
    loaded = read_word_states(jsonl, fmat)
    assert [s.image_id for s in loaded] == ["img0", "img1"]


# ----------------------------------------------------------------- voxel meta

def test_voxel_meta_roundtrip(tmp_path):
    voxels = [
        VoxelRecord("v0", "S1", "EV", "L"),
        VoxelRecord("v1", "S2", "RSC", "R"),
    ]
    path = tmp_path / "voxels.csv"
    write_voxel_meta(voxels, path)
    loaded = read_voxel_meta(path)
    assert loaded == voxels


def test_voxel_meta_errors(tmp_path):
    path = tmp_path / "voxels.csv"

    path.write_text("id,name\n")
    with pytest.raises(FormatError) as err:
        read_voxel_meta(path)
    assert err.value.code == "bad-header"

    path.write_text("voxel_id,subject,roi,hemisphere\nv0,S1,EV\n")
    with pytest.raises(FormatError, match="line 2") as err:
        read_voxel_meta(path)
    assert err.value.code == "bad-record"

    path.write_text("voxel_id,subject,roi,hemisphere\nv0,S1,EV,L\nv0,S1,PPA,R\n")
    with pytest.raises(FormatError, match="line 3") as err:
        read_voxel_meta(path)
    assert err.value.code == "duplicate-voxel-id"

    path.write_text("voxel_id,subject,roi,hemisphere\nv0,S1,FFA,L\n")
    with pytest.raises(FormatError, match="line 2") as err:
        read_voxel_meta(path)
    assert err.value.code == "bad-enum"

    path.write_text("voxel_id,subject,roi,hemisphere\nv0,S1,EV,X\n")
    with pytest.raises(FormatError) as err:
        read_voxel_meta(path)
    assert err.value.code == "bad-enum"

    path.write_text("voxel_id,subject,roi,hemisphere\n")
    with pytest.raises(FormatError, match="no voxels") as err:
        read_voxel_meta(path)
    assert err.value.code == "bad-record"


# ------------------------------------------------------------------ responses

def test_read_responses(tmp_path):
    voxels = [VoxelRecord("v0", "S1", "EV", "L"), VoxelRecord("v1", "S1", "LOC", "R")]
    meta = tmp_path / "voxels.csv"
    write_voxel_meta(voxels, meta)
    fmat = tmp_path / "resp.fmat"
    values = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    write_fmat(values, fmat, ids=["i0", "i1", "i2"])
    resp = read_responses(fmat, meta)
    assert resp.image_ids == ["i0", "i1", "i2"]
    assert resp.voxels == voxels
    np.testing.assert_array_equal(resp.values, values)


def test_read_responses_missing_ids(tmp_path):
    voxels = [VoxelRecord("v0", "S1", "EV", "L")]
    meta = tmp_path / "voxels.csv"
    write_voxel_meta(voxels, meta)
    fmat = tmp_path / "resp.fmat"
    write_fmat(np.zeros((3, 1)), fmat)
    with pytest.raises(FormatError) as err:
        read_responses(fmat, meta)
    assert err.value.code == "missing-ids"


def test_read_responses_count_mismatch(tmp_path):
    voxels = [VoxelRecord("v0", "S1", "EV", "L")]
    meta = tmp_path / "voxels.csv"
    write_voxel_meta(voxels, meta)
    fmat = tmp_path / "resp.fmat"
    write_fmat(np.zeros((3, 2)), fmat, ids=["a", "b", "c"])
    with pytest.raises(FormatError) as err:
        read_responses(fmat, meta)
    assert err.value.code == "count-mismatch"
