import numpy as np
import pytest

from conftest import draw_image
from fgbench_adapters.embed import (
    DIM, color_anchor, composite_anchor, embed_image_file, embed_text,
    embed_texts, pair_score,
)


@pytest.fixture()
def solid(tmp_path):
    def make(color):
        path = tmp_path / f"{color}.png"
        draw_image(path, color, color)
        return embed_image_file(path)
    return make


class TestImageTower:
    def test_unit_norm_and_dim(self, solid):
        vec = solid("red")
        assert vec.shape == (DIM,)
        assert vec.dtype == np.float32
        assert abs(float(np.linalg.norm(vec)) - 1.0) < 1e-6

    def test_solid_image_lands_near_its_anchor(self, solid):
        # drawn shade (230, 30, 25) vs the ideal (1, 0, 0) anchor
        assert pair_score(solid("red"), color_anchor((1.0, 0.0, 0.0))) > 0.95

    def test_colors_separate(self, solid):
        red, blue = solid("red"), solid("blue")
        assert pair_score(red, color_anchor((1.0, 0.0, 0.0))) \
            > pair_score(blue, color_anchor((1.0, 0.0, 0.0)))

    def test_deterministic(self, solid):
        np.testing.assert_array_equal(solid("green"), solid("green"))

    def test_mid_gray_does_not_collapse(self, solid):
        vec = solid("gray")
        assert np.isfinite(vec).all()
        assert abs(float(np.linalg.norm(vec)) - 1.0) < 1e-6


class TestTextTower:
    def test_color_words_drive_the_vector(self):
        red = embed_text("a red box.", seed=0)
        assert pair_score(red, color_anchor((1.0, 0.0, 0.0))) > 0.9

    def test_figure_ground_order_matters(self):
        blue_on_yellow = embed_text("a blue box on a yellow background.", seed=0)
        yellow_on_blue = embed_text("a yellow box on a blue background.", seed=0)
        assert pair_score(blue_on_yellow, yellow_on_blue) < 0.9

    def test_complementary_pair_keeps_signal(self):
        # mean-of-anchors would cancel blue against yellow entirely
        vec = composite_anchor([(0.0, 0.0, 1.0), (1.0, 1.0, 0.0)])
        assert float(np.abs(vec[:-1]).max()) > 0.1

    def test_colorless_text_is_pure_hash(self):
        a = embed_text("a man sitting on a bench.", seed=0)
        b = embed_text("a man sitting on a bench.", seed=0)
        c = embed_text("a man sitting on a bench.", seed=1)
        np.testing.assert_array_equal(a, b)
        assert pair_score(a, c) < 0.9

    def test_color_text_is_stable_across_seeds(self):
        a = embed_text("a red box on a white background.", seed=0)
        b = embed_text("a red box on a white background.", seed=1)
        assert pair_score(a, b) > 0.98

    def test_batch_matches_single(self):
        texts = ["a red box.", "a blue box."]
        batch = embed_texts(texts, seed=3)
        for row, text in zip(batch, texts):
            np.testing.assert_array_equal(row, embed_text(text, seed=3))


class TestPairScore:
    def test_own_caption_beats_swapped_colors(self, tmp_path):
        draw_image(tmp_path / "i.png", "green", "white")
        vec = embed_image_file(tmp_path / "i.png")
        own = pair_score(vec, embed_text("a green box on a white background.", 0))
        swapped = pair_score(vec, embed_text("a red box on a black background.", 0))
        assert own > swapped
