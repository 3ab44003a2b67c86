import json

import numpy as np
import pytest

from nowa import cli
from nowa.io import SecretKey, load_png, read_tensor, save_key, save_png
from nowa.optics import ZernikeCoeffs, default_mask, save_mask_design
from nowa.scenes import synthetic_scene


@pytest.fixture(scope="module")
def work(tmp_path_factory, key):
    d = tmp_path_factory.mktemp("cli")
    save_key(key, d / "key")
    save_png(synthetic_scene(5), d / "scene.png")
    save_png(synthetic_scene(6), d / "donor.png")
    save_mask_design(default_mask(), d / "mask.json")
    save_mask_design(ZernikeCoeffs.zeros(18), d / "zero.json")
    assert cli.main(["protect", "--key", str(d / "key"), "--in", str(d / "scene.png"),
                     "--out", str(d / "prot.png"), "--meta", str(d / "meta.json")]) == 0
    return d


def _verify(work, image, key="key", extra=()):
    return cli.main(["verify", "--key", str(work / key), "--in", str(work / image),
                     "--report", str(work / "report.json"), *extra])


# --------------------------------------------------------------------------
# psf / export


def test_psf_deterministic(tmp_path, work, capsys):
    for name in ("a", "b"):
        assert cli.main(["psf", "--mask", str(work / "zero.json"), "--out", str(tmp_path / f"{name}.nwf"),
                         "--png", str(tmp_path / "p.png")]) == 0
    assert (tmp_path / "a.nwf").read_bytes() == (tmp_path / "b.nwf").read_bytes()
    assert "null capacity" in capsys.readouterr().out
    k = read_tensor(tmp_path / "a.nwf").data
    # flat mask: centered spot, symmetric under point reflection about the crop center
    g = k[1]
    c = np.unravel_index(np.argmax(g), g.shape)
    assert abs(c[0] - 32) <= 1 and abs(c[1] - 32) <= 1
    np.testing.assert_allclose(g[1:, 1:], g[1:, 1:][::-1, ::-1], atol=1e-6 * g.max())
    preview = load_png(tmp_path / "p.png")
    assert preview.shape == (3, 64, 64)


def test_psf_huge_defocus_exits_optics(tmp_path):
    save_mask_design(ZernikeCoeffs.from_dict({4: 5.0e-6}), tmp_path / "big.json")
    assert cli.main(["psf", "--mask", str(tmp_path / "big.json"), "--out", str(tmp_path / "x.nwf")]) == 3


def test_export_zero_mask_all_zero(tmp_path, work):
    assert cli.main(["export-mask", "--mask", str(work / "zero.json"), "--out", str(tmp_path / "h.csv")]) == 0
    h = np.loadtxt(tmp_path / "h.csv", delimiter=",")
    assert h.shape == (256, 256) and not h.any()
    meta = json.loads((tmp_path / "h.json").read_text())
    assert meta["levels"] == 6


def test_export_levels(tmp_path, work):
    assert cli.main(["export-mask", "--mask", str(work / "mask.json"), "--wrap",
                     "--out", str(tmp_path / "h.csv")]) == 0
    h = np.loadtxt(tmp_path / "h.csv", delimiter=",")
    assert len(np.unique(np.round(h / 200e-9))) <= 6


# --------------------------------------------------------------------------
# protect / verify


def test_protect_metadata(work):
    meta = json.loads((work / "meta.json").read_text())
    assert meta["leakage"] <= 1e-3
    img = load_png(work / "prot.png")
    assert img.shape == (3, 256, 256)


def test_white_scene_exits_embed(tmp_path, work):
    save_png(np.ones((3, 256, 256)), tmp_path / "white.png")
    code = cli.main(["protect", "--key", str(work / "key"), "--in", str(tmp_path / "white.png"),
                     "--out", str(tmp_path / "o.png")])
    assert code == 4


def test_short_key_exits_config(tmp_path, work):
    (tmp_path / "short").write_bytes(bytes(16))
    code = cli.main(["protect", "--key", str(tmp_path / "short"), "--in", str(work / "scene.png"),
                     "--out", str(tmp_path / "o.png")])
    assert code == 2


def test_missing_input_exits_io(tmp_path, work):
    code = cli.main(["protect", "--key", str(work / "key"), "--in", str(tmp_path / "nope.png"),
                     "--out", str(tmp_path / "o.png")])
    assert code == 5


def test_verify_authentic(work):
    assert _verify(work, "prot.png", extra=["--map", str(work / "map.png")]) == 0
    rep = json.loads((work / "report.json").read_text())
    assert rep["global_score"] >= 0.5 and rep["tampered"] is False
    assert load_png(work / "map.png").shape == (1, 256, 256)


def test_verify_splice_and_ground_truth(work):
    manifest = [{"kind": "splice", "region": [40, 60, 140, 140], "donor": "donor.png"}]
    (work / "attacks.json").write_text(json.dumps(manifest))
    assert cli.main(["attack", "--in", str(work / "prot.png"), "--manifest", str(work / "attacks.json"),
                     "--outdir", str(work / "att")]) == 0
    out = work / "att" / "000_splice.png"
    gt = work / "att" / "000_splice_mask.png"
    assert _verify(work, out.relative_to(work), extra=["--gt", str(gt), "--mask", str(work / "m.png")]) == 10
    rep = json.loads((work / "report.json").read_text())
    assert rep["tampered"] is True
    assert rep["metrics"]["iou"] >= 0.75


def test_verify_wrong_key(work):
    save_key(SecretKey(bytes(32)), work / "other")
    assert _verify(work, "prot.png", key="other") == 10
    rep = json.loads((work / "report.json").read_text())
    assert abs(rep["global_score"]) <= 0.1


def test_attack_chain_and_bad_manifest(work, tmp_path):
    manifest = [[{"kind": "fill_mean", "region": [0, 0, 50, 50]}, {"kind": "jpeg", "quality": 80}],
                {"kind": "gaussian_noise", "sigma": 5}]
    (tmp_path / "m.json").write_text(json.dumps(manifest))
    assert cli.main(["attack", "--in", str(work / "prot.png"), "--manifest", str(tmp_path / "m.json"),
                     "--outdir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "000_fill_mean_jpeg.png").exists()
    assert load_png(tmp_path / "o" / "000_fill_mean_jpeg_mask.png").mean() == pytest.approx(2500 / 65536)
    assert not load_png(tmp_path / "o" / "001_gaussian_noise_mask.png").any()
    (tmp_path / "bad.json").write_text(json.dumps([{"kind": "melt"}]))
    assert cli.main(["attack", "--in", str(work / "prot.png"), "--manifest", str(tmp_path / "bad.json"),
                     "--outdir", str(tmp_path / "o")]) == 5


# --------------------------------------------------------------------------
# config, keygen, optimize, bench


def test_unknown_config_key_exits_config(tmp_path, work):
    (tmp_path / "c.toml").write_text("[detector]\nfoo = 1\n")
    assert _verify(work, "prot.png", extra=["--config", str(tmp_path / "c.toml")]) == 2


def test_keygen(tmp_path):
    assert cli.main(["keygen", "--out", str(tmp_path / "k")]) == 0
    assert len((tmp_path / "k").read_bytes()) == 32


def test_optimize_mask_small(tmp_path):
    (tmp_path / "c.toml").write_text(
        "[optics]\npupil_samples = 128\nkernel_size = 32\nmask_width = 1.4175e-3\n"
        "[operator]\nimage_size = 64\n[maskopt]\nmodes = 6\ninitial = 'zero'\n"
    )
    args = ["optimize-mask", "--config", str(tmp_path / "c.toml"), "--budget", "20", "--restarts", "1",
            "--out", str(tmp_path / "m.json"), "--trace", str(tmp_path / "t.csv")]
    assert cli.main(args) == 0
    first = (tmp_path / "m.json").read_text()
    assert cli.main(args) == 0
    assert (tmp_path / "m.json").read_text() == first
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 21
    assert cli.main(args[:3] + ["--budget", "3", "--out", str(tmp_path / "x.json")]) == 2


def test_bench_deterministic(tmp_path, work):
    for name in ("a", "b"):
        assert cli.main(["bench", "--key", str(work / "key"), "--n", "2", "--seed", "7",
                         "--report", str(tmp_path / f"{name}.json")]) == 0
    a, b = (json.loads((tmp_path / f"{n}.json").read_text()) for n in "ab")
    a.pop("runtime_seconds"), b.pop("runtime_seconds")
    assert a == b and a["n"] == 2 and a["schema_version"] == 1
