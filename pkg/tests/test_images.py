"""images: 깊이 컬러맵, FDEPTH1 입출력"""

import numpy as np
import pytest
from matplotlib import colormaps

from config import RENDER_CONFIG
from hybridfield.errors import DataError
from hybridfield.images import colorize_depth, load_depth, save_depth


def expected_color(t: float) -> np.ndarray:
    rgb = colormaps[RENDER_CONFIG["depth_colormap"]](np.array([t]))[0, :3]
    return np.round(rgb * 255.0).astype(np.uint8)


class TestColorizeDepth:

    def test_endpoints_follow_colormap(self):
        depth = np.array([[1.0, 3.0], [2.0, 3.0]])
        out = colorize_depth(depth)
        assert out.shape == (2, 2, 3) and out.dtype == np.uint8
        assert np.array_equal(out[0, 0], expected_color(0.0))
        assert np.array_equal(out[0, 1], expected_color(1.0))
        assert np.array_equal(out[1, 0], expected_color(0.5))

    def test_sentinel_pixels_use_reserved_color(self):
        sentinel = RENDER_CONFIG["depth_sentinel"]
        depth = np.array([[sentinel, 1.0], [2.0, sentinel]])
        out = colorize_depth(depth)
        reserved = np.asarray(RENDER_CONFIG["sentinel_color"], dtype=np.uint8)
        assert np.array_equal(out[0, 0], reserved)
        assert np.array_equal(out[1, 1], reserved)
        assert np.array_equal(out[0, 1], expected_color(0.0))

    def test_constant_depth_maps_to_near_color(self):
        out = colorize_depth(np.full((3, 3), 2.5))
        assert np.all(out == expected_color(0.0))

    def test_all_sentinel(self):
        sentinel = RENDER_CONFIG["depth_sentinel"]
        out = colorize_depth(np.full((2, 2), sentinel))
        assert np.all(out == np.asarray(RENDER_CONFIG["sentinel_color"], dtype=np.uint8))


class TestDepthFile:

    def test_save_and_load(self, tmp_path):
        depth = np.arange(12, dtype=np.float64).reshape(3, 4) * 0.25
        path = save_depth(depth, tmp_path / "d.fdepth")
        assert path.read_bytes()[:7] == b"FDEPTH1"
        np.testing.assert_allclose(load_depth(path), depth)

    def test_truncated_file(self, tmp_path):
        path = save_depth(np.ones((4, 4)), tmp_path / "d.fdepth")
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataError):
            load_depth(path)
