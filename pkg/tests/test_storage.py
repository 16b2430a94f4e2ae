import json
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubekit.clip import Clip
from tubekit.config import default_config, loads_config
from tubekit.contrastive import PARAM_ORDER, EncoderArch, EpochRecord, init_params
from tubekit.errors import (
    BadMagicError,
    ConfigConstraintError,
    ConfigParseError,
    FormatError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from tubekit.storage import (
    PALETTE,
    checkpoint_from_bytes,
    clip_from_bytes,
    clip_to_bytes,
    parse_config,
    read_checkpoint,
    read_clip,
    read_history,
    read_manifest,
    read_ppm,
    render_trajectory_plot,
    write_checkpoint,
    write_clip,
    write_history,
    write_manifest,
)
from tubekit.trajectory import Trajectory

DATA = Path(__file__).parent / "data"


class TestClipFormat:
    def test_golden_decodes(self):
        clip = read_clip(DATA / "golden.tbc")
        assert np.array_equal(clip.pixels, np.load(DATA / "golden_pixels.npy"))

    def test_golden_reencodes(self):
        assert clip_to_bytes(read_clip(DATA / "golden.tbc")) == (DATA / "golden.tbc").read_bytes()

    @settings(max_examples=30, deadline=None)
    @given(T=st.integers(1, 4), H=st.integers(1, 6), W=st.integers(1, 6), seed=st.integers(0, 2**32))
    def test_round_trip(self, T, H, W, seed):
        c = Clip(np.random.default_rng(seed).integers(0, 256, (T, H, W, 3), dtype=np.uint8))
        assert clip_from_bytes(clip_to_bytes(c)) == c

    def test_file_size(self, tmp_path):
        write_clip(Clip(np.zeros((16, 32, 32, 3), np.uint8)), tmp_path / "c.tbc")
        assert (tmp_path / "c.tbc").stat().st_size == 22 + 16 * 32 * 32 * 3

    def test_header_layout(self):
        b = clip_to_bytes(Clip(np.zeros((2, 3, 5, 3), np.uint8)))
        assert b[:4] == b"TBC1" and struct.unpack("<H4I", b[4:22]) == (1, 2, 3, 5, 3)

    def test_truncated_by_one_byte(self, tmp_path):
        data = (DATA / "golden.tbc").read_bytes()
        (tmp_path / "t.tbc").write_bytes(data[:-1])
        with pytest.raises(TruncatedPayloadError):
            read_clip(tmp_path / "t.tbc")

    def test_trailing_bytes(self):
        with pytest.raises(TruncatedPayloadError):
            clip_from_bytes((DATA / "golden.tbc").read_bytes() + b"\0")

    def test_truncated_header(self):
        with pytest.raises(TruncatedPayloadError):
            clip_from_bytes(b"TBC1\x01\x00\x02")

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            clip_from_bytes(b"TBC2" + (DATA / "golden.tbc").read_bytes()[4:])

    def test_version_mismatch(self):
        data = bytearray((DATA / "golden.tbc").read_bytes())
        data[4:6] = struct.pack("<H", 2)
        with pytest.raises(VersionMismatchError):
            clip_from_bytes(bytes(data))

    def test_channel_count(self):
        data = bytearray((DATA / "golden.tbc").read_bytes())
        data[18:22] = struct.pack("<I", 4)
        with pytest.raises(FormatError):
            clip_from_bytes(bytes(data))

    def test_errors_are_distinct(self):
        assert len({BadMagicError, VersionMismatchError, TruncatedPayloadError}) == 3
        assert not issubclass(BadMagicError, TruncatedPayloadError)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError, match="nope.tbc"):
            read_clip(tmp_path / "nope.tbc")


class TestCheckpointFormat:
    def test_golden(self):
        p = read_checkpoint(DATA / "golden.tbck")
        ref = np.load(DATA / "golden_params.npz")
        assert p.arch == EncoderArch((2, 4, 4), (1, 2, 2), (3, 2), 2, 2)
        for k in PARAM_ORDER:
            assert np.array_equal(p[k], ref[k])

    def test_golden_reencodes(self, tmp_path):
        write_checkpoint(read_checkpoint(DATA / "golden.tbck"), tmp_path / "x.tbck")
        assert (tmp_path / "x.tbck").read_bytes() == (DATA / "golden.tbck").read_bytes()

    def test_round_trip_default_arch(self, tmp_path):
        p = init_params(EncoderArch(), 4)
        write_checkpoint(p, tmp_path / "p.tbck")
        assert read_checkpoint(tmp_path / "p.tbck") == p
        assert (tmp_path / "p.tbck").stat().st_size == 46 + 8 * p.size

    def test_errors(self):
        data = (DATA / "golden.tbck").read_bytes()
        with pytest.raises(BadMagicError):
            checkpoint_from_bytes(b"TBC1" + data[4:])
        with pytest.raises(TruncatedPayloadError):
            checkpoint_from_bytes(data[:-8])
        with pytest.raises(TruncatedPayloadError):
            checkpoint_from_bytes(data[:30])
        bad = bytearray(data)
        bad[4:6] = struct.pack("<H", 9)
        with pytest.raises(VersionMismatchError):
            checkpoint_from_bytes(bytes(bad))
        bad = bytearray(data)
        bad[18:22] = struct.pack("<I", 3)  # pool_t = 3 does not divide T = 2
        with pytest.raises(FormatError):
            checkpoint_from_bytes(bytes(bad))


class TestManifest:
    def test_golden(self):
        recs = read_manifest(DATA / "golden_manifest.jsonl")
        assert [r["id"] for r in recs] == ["clip-00000", "clip-00001"]
        assert read_clip(recs[0]["path"]) == read_clip(DATA / "golden.tbc")
        assert recs[1]["relpath"] == "sub/other.tbc"
        assert Path(recs[1]["path"]) == DATA / "sub" / "other.tbc"

    def test_write_matches_golden(self, tmp_path):
        recs = [json.loads(l) for l in (DATA / "golden_manifest.jsonl").read_text().splitlines()]
        write_manifest(recs, tmp_path / "m.jsonl")
        assert (tmp_path / "m.jsonl").read_bytes() == (DATA / "golden_manifest.jsonl").read_bytes()

    def test_duplicate_ids(self, tmp_path):
        with pytest.raises(FormatError):
            write_manifest([{"id": "a"}, {"id": "a"}], tmp_path / "m.jsonl")
        (tmp_path / "d.jsonl").write_text('{"id":"a"}\n{"id":"a"}\n')
        with pytest.raises(FormatError, match="duplicate"):
            read_manifest(tmp_path / "d.jsonl")

    def test_malformed_line(self, tmp_path):
        (tmp_path / "m.jsonl").write_text('{"id":"a"}\n{not json\n')
        with pytest.raises(FormatError, match=":2:"):
            read_manifest(tmp_path / "m.jsonl")


class TestHistory:
    def test_round_trip(self, tmp_path):
        h = [EpochRecord(0, 4.25, 0.01), EpochRecord(1, 3.1 / 3, 0.005)]
        write_history(h, tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_text().splitlines()[0] == "epoch,mean_loss,lr"
        assert read_history(tmp_path / "h.csv") == h

    def test_missing_header(self, tmp_path):
        (tmp_path / "h.csv").write_text("0,1.0,0.1\n")
        with pytest.raises(FormatError):
            read_history(tmp_path / "h.csv")


class TestPlot:
    def test_static_is_single_point(self, tmp_path):
        render_trajectory_plot([Trajectory(np.full((16, 2), 10.0))], (32, 24), tmp_path / "p.ppm")
        img = read_ppm(tmp_path / "p.ppm")
        assert img.shape == (24, 32, 3)
        ys, xs = np.nonzero(np.any(img != 255, axis=-1))
        assert ys.max() - ys.min() <= 2 and xs.max() - xs.min() <= 2

    def test_two_colors(self, tmp_path):
        a = Trajectory(np.stack([np.linspace(2, 28, 16), np.full(16, 5.0)], axis=1))
        b = Trajectory(np.stack([np.linspace(2, 28, 16), np.full(16, 20.0)], axis=1))
        render_trajectory_plot([a, b], (32, 32), tmp_path / "p.ppm")
        colors = {tuple(c) for c in read_ppm(tmp_path / "p.ppm").reshape(-1, 3)} - {(255, 255, 255)}
        assert colors == {PALETTE[0], PALETTE[1]}

    def test_scale(self, tmp_path):
        render_trajectory_plot([Trajectory(np.full((2, 2), 1.0))], (8, 6), tmp_path / "p.ppm", scale=4)
        assert read_ppm(tmp_path / "p.ppm").shape == (24, 32, 3)

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            render_trajectory_plot([], (8, 8), tmp_path / "p.ppm")

    def test_not_ppm(self, tmp_path):
        (tmp_path / "x.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(BadMagicError):
            read_ppm(tmp_path / "x.ppm")


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        (tmp_path / "c.toml").write_text("")
        cfg = parse_config(tmp_path / "c.toml")
        assert cfg["train"]["tau"] == 0.2
        assert cfg["pair"]["m"] == 2
        assert cfg["motion"]["K"] == 3 and cfg["motion"]["n"] == 48 and cfg["motion"]["sigma"] == 8
        assert cfg["motion"]["delta"] == [40, 80]
        assert cfg["train"]["momentum"] == 0.9 and cfg["train"]["lr"] == 0.01
        assert cfg["train"]["weight_decay"] == 1e-4

    def test_golden(self):
        cfg = parse_config(DATA / "golden.toml")
        assert cfg.seed == 42
        assert cfg["motion"] == {"kind": "linear", "K": 4, "delta": [30.0, 60.0], "n": 48, "sigma": 8.0}
        assert cfg["transform"]["kinds"] == ["scale", "shear"]
        tc = cfg.train_config()
        assert (tc.tau, tc.epochs, tc.queue, tc.seed) == (0.1, 5, 64, 42)
        assert cfg.corpus_spec().kinds == {"uniform-noise": 2.0, "static-texture": 1.0}
        # untouched sections keep defaults
        assert cfg["augment"] == default_config()["augment"]

    def test_desk_scaling(self):
        pc = default_config().pair_config("tubelet")
        assert pc.patch_size == (5, 18)
        assert pc.delta == pytest.approx((40 * 32 / 112, 80 * 32 / 112))
        assert pc.transforms == ("rotation",) and pc.motion == "nonlinear"

    @pytest.mark.parametrize("text,key", [
        ("taus = 0.1", "taus"),
        ("[train]\ntaus = 0.1", "train.taus"),
        ("[motion]\nsigmaa = 2", "motion.sigmaa"),
    ])
    def test_unknown_key(self, text, key):
        with pytest.raises(ConfigConstraintError, match="unknown key") as exc:
            loads_config(text)
        assert exc.value.key_path == key

    @pytest.mark.parametrize("text,key", [
        ("[train]\ntau = -1", "train.tau"),
        ("[train]\ntau = 0", "train.tau"),
        ("[train]\nkey_momentum = 1.5", "train.key_momentum"),
        ("[train]\nbatch_size = 0", "train.batch_size"),
        ("[motion]\nK = 1", "motion.K"),
        ("[motion]\ndelta = [80, 40]", "motion.delta"),
        ("[motion]\nsigma = 0", "motion.sigma"),
        ("[motion]\nn = 8", "motion.n"),
        ("[motion]\nkind = \"zigzag\"", "motion.kind"),
        ("[pair]\nm = -1", "pair.m"),
        ("[pair]\nshapes = [\"star\"]", "pair.shapes"),
        ("[augment]\ncrop_scale = [0.5, 1.5]", "augment.crop_scale"),
        ("[augment]\nflip = 2", "augment.flip"),
        ("[corpus]\ncount = 1", "corpus.count"),
        ("[corpus]\nshape = [16, 30, 32]", "train.pool"),
        ("[corpus.kinds]\nlava = 1.0", "corpus.kinds.lava"),
        ("[eval]\nprobe_mode = \"x\"", "eval.probe_mode"),
        ("seed = -3", "seed"),
        ("motion = 3", "motion"),
    ])
    def test_constraint_violation(self, text, key):
        with pytest.raises(ConfigConstraintError) as exc:
            loads_config(text)
        assert exc.value.key_path == key

    def test_parse_error_location(self):
        with pytest.raises(ConfigParseError) as exc:
            loads_config("seed = 1\n[train]\ntau = = 2\n")
        assert exc.value.line == 3 and exc.value.column is not None

    def test_overrides_revalidated(self):
        cfg = default_config().with_overrides({"train.tau": 0.5, "train.epochs": None})
        assert cfg["train"]["tau"] == 0.5 and cfg["train"]["epochs"] == 30
        with pytest.raises(ConfigConstraintError):
            default_config().with_overrides({"train.tau": -1.0})


def test_ppm_round_trip_whitespace_bytes(tmp_path):
    from tubekit.storage import write_ppm
    img = np.zeros((2, 3, 3), np.uint8)
    img[0, 0] = (10, 32, 9)  # bytes that look like whitespace
    write_ppm(img, tmp_path / "w.ppm")
    assert np.array_equal(read_ppm(tmp_path / "w.ppm"), img)
