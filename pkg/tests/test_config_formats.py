import numpy as np
import pytest

from qdcascade.config import load_config, parse_config, serialize_config
from qdcascade.qdtt import read_qdtt, write_qdtt
from qdcascade.simulate import TimeTagStream
from qdcascade.states import ANALYZER_SETTINGS

GOOD_CONFIG = """
[emitter]
fss_uev = 2.3
t1_xx_ps = 112
t1_x_ps = 134
k = 0.97

[excitation]
pulse_area_pi = 1.0

[run]
topology = cross
analyzer_a = D
analyzer_b = 0.3,1.1
duration_s = 0.5
seed = 42
"""


class TestConfig:
    def test_parse_minimal(self):
        config = parse_config(GOOD_CONFIG)
        assert config.emitter.fss_uev == 2.3
        assert config.emitter.t_ss_ps == 15000.0  # default
        assert config.excitation.rep_period_ps == 13157.9  # default
        assert config.detectors.efficiency == (0.05, 0.05)  # default
        assert config.topology == "cross"
        assert config.analyzer_a == ANALYZER_SETTINGS["D"]
        assert config.analyzer_b.qwp_angle == pytest.approx(0.3)
        assert config.analyzer_b.hwp_angle == pytest.approx(1.1)
        assert config.seed == 42

    def test_round_trip_idempotent(self):
        config = parse_config(GOOD_CONFIG)
        text = serialize_config(config)
        again = parse_config(text)
        assert serialize_config(again) == text
        assert again == config

    def test_unknown_key_rejected(self):
        bad = GOOD_CONFIG.replace("k = 0.97", "k = 0.97\nbogus_key = 1")
        with pytest.raises(ValueError, match="bogus_key"):
            parse_config(bad)

    def test_unknown_section_rejected(self):
        with pytest.raises(ValueError, match="\\[laser\\]"):
            parse_config(GOOD_CONFIG + "\n[laser]\npower = 1\n")

    def test_missing_required_key_named(self):
        bad = GOOD_CONFIG.replace("fss_uev = 2.3\n", "")
        with pytest.raises(ValueError, match="fss_uev"):
            parse_config(bad)

    def test_missing_seed_named(self):
        bad = GOOD_CONFIG.replace("seed = 42\n", "")
        with pytest.raises(ValueError, match="seed"):
            parse_config(bad)

    def test_non_numeric_value_rejected(self):
        bad = GOOD_CONFIG.replace("k = 0.97", "k = high")
        with pytest.raises(ValueError, match="not a number"):
            parse_config(bad)

    def test_bad_analyzer_rejected(self):
        bad = GOOD_CONFIG.replace("analyzer_a = D", "analyzer_a = Q")
        with pytest.raises(ValueError, match="analyzer"):
            parse_config(bad)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(GOOD_CONFIG)
        assert load_config(path) == parse_config(GOOD_CONFIG)


class TestQdtt:
    def make_stream(self, rng, n=5000):
        ts = np.sort(rng.integers(0, 10**12, n).astype(np.uint64))
        ch = rng.integers(0, 2, n).astype(np.uint8)
        return TimeTagStream(ch, ts)

    def test_round_trip_exact(self, rng, tmp_path):
        stream = self.make_stream(rng)
        path = tmp_path / "tags.qdtt"
        write_qdtt(path, stream)
        back = read_qdtt(path)
        np.testing.assert_array_equal(back.channels, stream.channels)
        np.testing.assert_array_equal(back.timestamps_ps, stream.timestamps_ps)

    def test_write_is_deterministic(self, rng, tmp_path):
        stream = self.make_stream(rng)
        p1, p2 = tmp_path / "a.qdtt", tmp_path / "b.qdtt"
        write_qdtt(p1, stream)
        write_qdtt(p2, stream)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, rng, tmp_path):
        stream = self.make_stream(rng, n=3)
        path = tmp_path / "tags.qdtt"
        write_qdtt(path, stream)
        raw = path.read_bytes()
        assert raw[:4] == b"QDTT"
        assert int.from_bytes(raw[4:6], "little") == 1  # version
        assert int.from_bytes(raw[12:20], "little") == 3  # record_count
        assert len(raw) == 20 + 3 * 16

    def test_empty_stream(self, tmp_path):
        stream = TimeTagStream(np.array([], dtype=np.uint8), np.array([], dtype=np.uint64))
        path = tmp_path / "empty.qdtt"
        write_qdtt(path, stream)
        assert len(read_qdtt(path)) == 0

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.qdtt"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ValueError, match="magic"):
            read_qdtt(path)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "short.qdtt"
        path.write_bytes(b"QDTT\x01\x00")
        with pytest.raises(ValueError, match="truncated"):
            read_qdtt(path)

    def test_count_mismatch_rejected(self, rng, tmp_path):
        stream = self.make_stream(rng, n=4)
        path = tmp_path / "tags.qdtt"
        write_qdtt(path, stream)
        raw = bytearray(path.read_bytes())
        raw[12:20] = (9).to_bytes(8, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="promises 9 records"):
            read_qdtt(path)

    def test_unsorted_records_rejected(self, tmp_path):
        stream = TimeTagStream(np.array([0, 0], dtype=np.uint8), np.array([5, 9], dtype=np.uint64))
        path = tmp_path / "tags.qdtt"
        write_qdtt(path, stream)
        raw = bytearray(path.read_bytes())
        # swap the two timestamps
        raw[20 + 8 : 20 + 16], raw[36 + 8 : 36 + 16] = raw[36 + 8 : 36 + 16], raw[20 + 8 : 20 + 16]
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="decrease"):
            read_qdtt(path)
