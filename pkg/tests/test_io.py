import hashlib
import struct

import numpy as np
import png
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nowa.errors import FormatError
from nowa.io import (
    MAGIC,
    SecretKey,
    TensorFile,
    decode_tensor,
    encode_tensor,
    generate_key,
    load_key,
    load_png,
    read_height_csv,
    read_tensor,
    save_key,
    save_map_png,
    save_png,
    write_height_csv,
    write_tensor,
)


def _write_raw_png(path, codes, depth, greyscale=True, alpha=False):
    h, w = codes.shape[:2]
    rows = codes.reshape(h, -1).tolist()
    png.Writer(w, h, greyscale=greyscale, alpha=alpha, bitdepth=depth).write(open(path, "wb"), rows)


def _raw_codes(path):
    w, h, rows, info = png.Reader(filename=str(path)).read()
    return np.vstack([np.asarray(r) for r in rows]), info


# --------------------------------------------------------------------------
# PNG


def test_load_8bit_scaling(tmp_path):
    codes = np.full((32, 32), 128, np.uint8)
    codes[0, 0] = 255
    codes[0, 1] = 0
    _write_raw_png(tmp_path / "a.png", codes, 8)
    img = load_png(tmp_path / "a.png")
    assert img.shape == (1, 32, 32)
    assert img[0, 0, 0] == 1.0
    assert img[0, 0, 1] == 0.0
    assert img[0, 5, 5] == pytest.approx(128 / 255, abs=0)


def test_load_16bit_zero(tmp_path):
    _write_raw_png(tmp_path / "z.png", np.zeros((32, 32), np.uint16), 16)
    assert load_png(tmp_path / "z.png").max() == 0.0


def test_load_rgb_planar(tmp_path):
    codes = np.zeros((32, 32, 3), np.uint8)
    codes[..., 0] = 255
    codes[..., 2] = 51
    _write_raw_png(tmp_path / "rgb.png", codes, 8, greyscale=False)
    img = load_png(tmp_path / "rgb.png")
    assert img.shape == (3, 32, 32)
    np.testing.assert_array_equal(img[0], 1.0)
    np.testing.assert_array_equal(img[1], 0.0)
    np.testing.assert_allclose(img[2], 0.2)


def test_alpha_rejected(tmp_path):
    codes = np.zeros((32, 32, 2), np.uint8)
    _write_raw_png(tmp_path / "la.png", codes, 8, alpha=True)
    with pytest.raises(FormatError):
        load_png(tmp_path / "la.png")


def test_unsupported_depth_rejected(tmp_path):
    _write_raw_png(tmp_path / "d4.png", np.zeros((32, 32), np.uint8), 4)
    with pytest.raises(FormatError):
        load_png(tmp_path / "d4.png")


def test_truncated_png_is_io_error(tmp_path):
    save_png(np.full((1, 32, 32), 0.3), tmp_path / "t.png")
    raw = (tmp_path / "t.png").read_bytes()
    (tmp_path / "cut.png").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(OSError):
        load_png(tmp_path / "cut.png")


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_png(tmp_path / "nope.png")


def test_save_stored_codes(tmp_path):
    img = np.zeros((1, 32, 32))
    img[0, 0, 0] = 1.0
    img[0, 0, 1] = 0.5
    save_png(img, tmp_path / "8.png", bit_depth=8)
    save_png(img, tmp_path / "16.png", bit_depth=16)
    c8, info8 = _raw_codes(tmp_path / "8.png")
    c16, info16 = _raw_codes(tmp_path / "16.png")
    assert info8["bitdepth"] == 8 and info16["bitdepth"] == 16
    assert c8[0, 0] == 255
    assert c16[0, 1] == 32768


def test_png_roundtrip_exhaustive_8bit(tmp_path):
    # every code value plus the midpoints between them
    vals = np.concatenate([np.arange(256) / 255, (np.arange(255) + 0.499) / 255])
    img = np.resize(vals, (1, 32, 32))
    save_png(img, tmp_path / "r.png", bit_depth=8)
    err = np.abs(load_png(tmp_path / "r.png") - img).max()
    assert err <= 1 / 510 + 1e-15


@settings(max_examples=25, deadline=None)
@given(
    arrays(np.float64, (3, 32, 33), elements=st.floats(0, 1)),
    st.sampled_from([8, 16]),
)
def test_png_roundtrip_bound(tmp_path_factory, img, depth):
    path = tmp_path_factory.mktemp("png") / "x.png"
    save_png(img, path, bit_depth=depth)
    assert np.abs(load_png(path) - img).max() <= 0.5 / (2**depth - 1) + 1e-15


def test_save_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_png(np.zeros((1, 32, 32)), tmp_path / "no" / "dir" / "x.png")


def test_map_png_affine(tmp_path):
    m = np.zeros((32, 32))
    m[0, 0], m[0, 1] = -1.0, 1.0
    save_map_png(m, tmp_path / "m.png")
    codes, _ = _raw_codes(tmp_path / "m.png")
    assert codes[0, 0] == 0 and codes[0, 1] == 255 and codes[5, 5] == 128


# --------------------------------------------------------------------------
# Tensor container


def _manual_encode(dtype, shape, payload, meta=None):
    import json

    header = json.dumps({"dtype": dtype, "shape": shape, "meta": meta or {}}).encode()
    return MAGIC + struct.pack("<Q", len(header)) + header + payload


def test_small_f32_accepted():
    raw = _manual_encode("f32", [1, 2, 2], np.arange(4, dtype="<f4").tobytes())
    t = decode_tensor(raw)
    assert t.shape == (1, 2, 2)
    np.testing.assert_array_equal(t.data.ravel(), [0, 1, 2, 3])


def test_length_mismatch_rejected():
    raw = _manual_encode("f32", [3, 256, 256], bytes(17))
    with pytest.raises(FormatError, match="length"):
        decode_tensor(raw)


def test_c64_payload_size():
    t = TensorFile.from_array(np.ones((1, 4, 4), np.complex64))
    raw = encode_tensor(t)
    (hlen,) = struct.unpack("<Q", raw[4:12])
    assert len(raw) - 12 - hlen == 128


def test_complex_stored_as_re_im_pairs():
    t = TensorFile.from_array(np.full((1, 1, 1), 1.5 - 2.0j, np.complex64))
    raw = encode_tensor(t)
    assert struct.unpack("<2f", raw[-8:]) == (1.5, -2.0)


def test_bad_magic_and_bad_json():
    with pytest.raises(FormatError, match="magic"):
        decode_tensor(b"NWF2" + bytes(20))
    bad = MAGIC + struct.pack("<Q", 3) + b"{x]"
    with pytest.raises(FormatError):
        decode_tensor(bad)


def test_tensor_fuzz_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(1000):
        shape = tuple(int(s) for s in rng.integers(1, 6, size=3))
        if i % 2:
            data = (rng.normal(size=shape) + 1j * rng.normal(size=shape)).astype(np.complex64)
        else:
            data = rng.normal(size=shape).astype(np.float32)
        t = TensorFile.from_array(data, {"i": i})
        raw = encode_tensor(t)
        back = decode_tensor(raw)
        assert back.dtype == t.dtype and back.meta == {"i": i}
        assert back.data.tobytes() == data.tobytes()
        assert encode_tensor(back) == raw
    write_tensor(t, tmp_path / "t.nwf")
    assert read_tensor(tmp_path / "t.nwf").data.tobytes() == t.data.tobytes()


# --------------------------------------------------------------------------
# Keys


def test_zero_key_file(tmp_path):
    (tmp_path / "k").write_bytes(bytes(32))
    k = load_key(tmp_path / "k")
    assert k.seed == bytes(32)
    assert k.fingerprint == hashlib.sha256(bytes(32)).digest()[:8].hex()


def test_short_key_file_rejected(tmp_path):
    (tmp_path / "k").write_bytes(bytes(31))
    with pytest.raises(FormatError):
        load_key(tmp_path / "k")


def test_key_save_load_roundtrip(tmp_path):
    k = generate_key()
    save_key(k, tmp_path / "k")
    assert load_key(tmp_path / "k") == k
    assert k.fingerprint not in repr(k.seed)


def test_generated_fingerprints_distinct():
    fps = {generate_key().fingerprint for _ in range(10_000)}
    assert len(fps) == 10_000


def test_generate_uses_entropy_source():
    k = generate_key(lambda n: b"\x01" * n)
    assert k == SecretKey(b"\x01" * 32)


def test_height_csv_roundtrip(tmp_path):
    h = np.random.default_rng(0).normal(size=(5, 7)) * 1e-6
    write_height_csv(h, tmp_path / "h.csv")
    np.testing.assert_allclose(read_height_csv(tmp_path / "h.csv"), h, rtol=1e-8)
    first = (tmp_path / "h.csv").read_text().split(",")[0]
    assert len(first.replace("-", "").replace(".", "").split("e")[0]) <= 9
