"""Unit tests for PNG heatmaps"""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from PIL import Image

from dmha.exceptions import FormatException
from dmha.heatmap import (
    CELL_PIXELS,
    DIVIDER_COLOR,
    render_attention_maps,
    render_confusion,
    render_heatmap,
    row_normalize,
    value_color,
)


class TestHeatmap(unittest.TestCase):
    """Cell grid rendering"""

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_image_size(self):
        """Test the rendered image size"""
        path = render_heatmap(np.zeros((3, 5)), self.test_dir / 'm.png')
        with Image.open(path) as image:
            self.assertEqual(image.size, (5 * CELL_PIXELS, 3 * CELL_PIXELS))

    def test_cell_colors(self):
        """Test the color of low and high cells"""
        path = render_heatmap([[0.0, 1.0]], self.test_dir / 'm.png')
        with Image.open(path) as image:
            self.assertEqual(image.getpixel((CELL_PIXELS // 2, CELL_PIXELS // 2)), value_color(0.0))
            self.assertEqual(image.getpixel((CELL_PIXELS + CELL_PIXELS // 2, CELL_PIXELS // 2)), value_color(1.0))

    def test_divider(self):
        """Test drawing the acoustic and text divider"""
        path = render_heatmap(np.zeros((2, 4)), self.test_dir / 'm.png', divider_column=3)
        with Image.open(path) as image:
            self.assertEqual(image.getpixel((3 * CELL_PIXELS, 0)), DIVIDER_COLOR)
            self.assertNotEqual(image.getpixel((CELL_PIXELS, 0)), DIVIDER_COLOR)

    def test_large_matrix_is_downscaled(self):
        """Test downscaling a large matrix"""
        path = render_heatmap(np.zeros((10, 400)), self.test_dir / 'wide.png')
        with Image.open(path) as image:
            self.assertEqual(image.size, (1600, 40))

    def test_empty_matrix(self):
        """Test rejecting an empty matrix"""
        with self.assertRaises(FormatException):
            render_heatmap(np.zeros((0, 3)), self.test_dir / 'm.png')

    def test_row_normalize(self):
        """Test normalizing confusion rows"""
        out = row_normalize([[1, 3], [0, 0]])
        np.testing.assert_allclose(out, [[0.25, 0.75], [0.0, 0.0]])

    def test_confusion_png(self):
        """Test writing a confusion matrix image"""
        path = render_confusion(np.eye(8, dtype=int) * 5, self.test_dir / 'confusion.png')
        with Image.open(path) as image:
            self.assertEqual(image.size, (8 * CELL_PIXELS, 8 * CELL_PIXELS))

    def test_attention_maps_one_per_head(self):
        """Test writing one attention image per head"""
        heads = [np.full((5, 5), 0.2), np.eye(5)]
        paths = render_attention_maps(heads, 3, self.test_dir, prefix='utt')
        self.assertEqual([p.name for p in paths], ['utt.head0.png', 'utt.head1.png'])
        self.assertTrue(all(p.is_file() for p in paths))


if __name__ == '__main__':
    unittest.main()
