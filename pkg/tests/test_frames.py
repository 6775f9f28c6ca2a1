import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from depthguide import frames
from depthguide.errors import DimensionMismatchError, DuplicateCoordinateError, FormatError, OutOfBoundsError
from depthguide.frames import DepthFrame, FrameworkConfig, GuideImage, QMap, SamplePattern

from conftest import random_frame


def test_pgm16_unit_conversion(tmp_path):
    p = tmp_path / "d.pgm"
    frames.write_pnm(p, np.array([[1000, 2000], [0, 65535]]), 65535)
    f = frames.load_depth(p)
    assert f.valid.tolist() == [[True, True], [False, True]]
    assert f.depth[0, 0] == np.float32(1.0)
    assert f.depth[0, 1] == np.float32(2.0)
    assert f.depth[1, 1] == np.float32(65.535)
    assert f.depth[1, 0] == 0


def test_pfm_nan_pixel_becomes_invalid(tmp_path):
    d = np.full((3, 4), 2.5, dtype=np.float32)
    d[1, 2] = np.nan
    p = tmp_path / "d.pfm"
    frames.write_pfm(p, d)
    f = frames.load_depth(p)
    assert not f.valid[1, 2]
    assert f.valid.sum() == 11
    assert np.all(f.depth[f.valid] == np.float32(2.5))


def test_pfm_round_trip_100_frames(tmp_path, rng):
    p = tmp_path / "d.pfm"
    for _ in range(100):
        h, w = rng.integers(1, 20, size=2)
        f = random_frame(rng, h, w, 0.01, 500.0, invalid_frac=0.2)
        frames.save_depth(f, p)
        g = frames.load_depth(p)
        assert np.array_equal(g.valid, f.valid)
        assert g.depth.tobytes() == f.depth.tobytes()


def test_pgm16_round_trip_100_frames(tmp_path, rng):
    p = tmp_path / "d.pgm"
    for _ in range(100):
        h, w = rng.integers(1, 20, size=2)
        mm = rng.integers(0, 65536, size=(h, w))
        frames.write_pnm(p, mm, 65535)
        f = frames.load_depth(p)
        q = tmp_path / "e.pgm"
        frames.save_depth(f, q)
        assert q.read_bytes() == p.read_bytes()
        g = frames.load_depth(q)
        assert g.depth.tobytes() == f.depth.tobytes()


def test_save_pgm16_constant_and_invalid(tmp_path):
    p = tmp_path / "c.pgm"
    frames.save_depth(DepthFrame(np.ones((4, 4)), np.ones((4, 4), bool)), p)
    a, maxval = frames.read_pnm(p)
    assert maxval == 65535 and np.all(a == 1000)
    valid = np.ones((4, 4), bool)
    valid[2, 3] = False
    frames.save_depth(DepthFrame(np.where(valid, 1.0, 0.0), valid), p)
    a, _ = frames.read_pnm(p)
    assert a[2, 3] == 0 and a.sum() == 15 * 1000


def test_save_pgm16_strict_rejects_far_depth(tmp_path):
    f = DepthFrame(np.full((2, 2), 70.0), np.ones((2, 2), bool))
    with pytest.raises(ValueError):
        frames.save_depth(f, tmp_path / "x.pgm", strict=True)
    frames.save_depth(f, tmp_path / "x.pgm")
    assert np.all(frames.read_pnm(tmp_path / "x.pgm")[0] == 65535)


@pytest.mark.parametrize(
    "payload, offset",
    [
        (b"PF\n2 2\n-1.0\n" + bytes(48), 0),
        (b"Px\n2 2\n-1.0\n", 0),
        (b"Pf\n2 x\n-1.0\n", 5),
        (b"Pf\n2 2\n-1.0\n" + bytes(15), 27),
    ],
)
def test_pfm_errors_report_offset(tmp_path, payload, offset):
    p = tmp_path / "bad.pfm"
    p.write_bytes(payload)
    with pytest.raises(FormatError) as exc:
        frames.read_pfm(p)
    assert exc.value.offset == offset
    assert f"byte offset {offset}" in str(exc.value)


def test_pgm_comments_and_truncation(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# comment\n2 1\n65535\n" + np.array([1000, 2000], ">u2").tobytes())
    assert frames.load_depth(p).depth.tolist() == [[1.0, 2.0]]
    p.write_bytes(b"P5\n2 1\n65535\n\x00")
    with pytest.raises(FormatError, match="truncated"):
        frames.load_depth(p)
    p.write_bytes(b"P5\n2 1\n255\n\x00\x01")
    with pytest.raises(FormatError, match="maxval"):
        frames.load_depth(p)


def test_big_endian_pfm_is_read(tmp_path):
    d = (np.arange(6).reshape(2, 3) + 1).astype(">f4")
    p = tmp_path / "b.pfm"
    p.write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(d).tobytes())
    assert np.array_equal(frames.read_pfm(p), d.astype(np.float32))


def test_pattern_csv(tmp_path):
    p = tmp_path / "p.csv"
    pat = SamplePattern([(0, 0), (3, 1)])
    frames.save_pattern(pat, p)
    assert p.read_text() == "x,y\n0,0\n3,1\n"
    back = frames.load_pattern(p)
    assert back.as_tuples() == [(0, 0), (3, 1)]
    p.write_text("x,y\n1,2\n3,4\n1,2\n")
    with pytest.raises(DuplicateCoordinateError):
        frames.load_pattern(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        frames.load_pattern(p)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 300), st.integers(0, 300)), unique=True, max_size=60))
def test_pattern_round_trip_preserves_order(tmp_path_factory, coords):
    p = tmp_path_factory.mktemp("pat") / "p.csv"
    frames.save_pattern(SamplePattern(np.array(coords, dtype=np.int64).reshape(-1, 2)), p)
    assert frames.load_pattern(p).as_tuples() == coords


def test_sample_pattern_validation():
    with pytest.raises(DuplicateCoordinateError):
        SamplePattern([(1, 2), (1, 2)])
    with pytest.raises(OutOfBoundsError):
        SamplePattern([(-1, 0)])
    pat = SamplePattern([(4, 0)])
    with pytest.raises(OutOfBoundsError):
        pat.check_bounds(4, 4)
    valid = np.ones((3, 5), bool)
    valid[0, 4] = False
    with pytest.raises(OutOfBoundsError):
        pat.check_against(valid)


def test_linear_index_convention():
    pat = SamplePattern.from_linear([0, 7, 13], width=5)
    assert pat.as_tuples() == [(0, 0), (2, 1), (3, 2)]
    assert pat.linear_indices(5).tolist() == [0, 7, 13]
    m = pat.mask(5, 3)
    assert m[1, 2] and m[2, 3] and m.sum() == 3


def test_depth_frame_invariants():
    with pytest.raises(ValueError):
        DepthFrame(np.array([[1.0, -2.0]]), np.ones((1, 2), bool))
    with pytest.raises(DimensionMismatchError):
        DepthFrame(np.ones((2, 2)), np.ones((2, 3), bool))
    f = DepthFrame.from_array([[1.0, np.inf, 0.0, 3.0]])
    assert f.valid.tolist() == [[True, False, False, True]]
    with pytest.raises(ValueError):
        f.depth[0, 0] = 5


def test_guide_and_qmap_validation(tmp_path):
    with pytest.raises(ValueError):
        GuideImage(np.full((2, 2), 1.5))
    with pytest.raises(ValueError):
        QMap(np.array([[0.0, -1.0]]))
    g = GuideImage(frames.quantize_guide(np.random.default_rng(0).random((5, 7, 3))))
    frames.save_guide(g, tmp_path / "g.ppm")
    back = frames.load_guide(tmp_path / "g.ppm")
    assert back.channels == 3 and np.array_equal(back.data, g.data)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, max_side=12),
                  elements=st.floats(0, 1e6, width=32)))
def test_qmap_pfm_round_trip(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("q") / "q.pfm"
    q = QMap(data)
    frames.save_qmap(q, p)
    assert frames.load_qmap(p).data.tobytes() == q.data.tobytes()


def test_mask_round_trip(tmp_path, rng):
    m = rng.random((9, 13)) > 0.5
    frames.save_mask(m, tmp_path / "m.pgm")
    assert np.array_equal(frames.load_mask(tmp_path / "m.pgm"), m)


def test_config_validation_and_defaults():
    cfg = FrameworkConfig(budget=10)
    assert (cfg.depth_threshold, cfg.mc_iterations, cfg.grid_fraction) == (100.0, 100, 0.05)
    assert cfg.metric.value == "rmse"
    assert cfg.replace(metric="rel").metric.value == "rel"
    for bad in ({"budget": 0}, {"budget": 1, "mc_iterations": 0}, {"budget": 1, "grid_fraction": 1.5},
                {"budget": 1, "sigma": -1.0}, {"budget": 1, "metric": "foo"}):
        with pytest.raises(ValueError):
            FrameworkConfig(**bad)
    assert frames.default_budget(128, 96) == 123
