"""PNG heatmaps of confusion matrices and attention weights"""

from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from dmha.exceptions import FormatException
from dmha.logger import get_logger

logger = get_logger(__name__)

CELL_PIXELS = 24
MAX_IMAGE_PIXELS = 1600
DIVIDER_COLOR = (255, 255, 255)


def _hsv_to_rgb(h, s, v):
    """Convert HSV color to RGB (h: 0-360, s: 0-1, v: 0-1)"""
    h = h / 60.0
    i = int(h)
    f = h - i

    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))

    i = i % 6

    if i == 0: return v, t, p
    if i == 1: return q, v, p
    if i == 2: return p, v, t
    if i == 3: return p, q, v
    if i == 4: return t, p, v
    return v, p, q


def value_color(value: float):
    """Blue for 0 through to red for 1"""
    value = min(max(float(value), 0.0), 1.0)
    r, g, b = _hsv_to_rgb(240.0 * (1.0 - value), 0.85, 0.35 + 0.6 * value)
    return int(r * 255), int(g * 255), int(b * 255)


def render_heatmap(matrix, path, divider_column: Optional[int] = None) -> Path:
    """
    Draw a matrix with values in [0, 1] as a grid of colored cells.

    Args:
        matrix: 2-d array, row 0 at the top
        path: PNG file to write
        divider_column: Draw a dashed vertical line left of this column

    Returns:
        Path: The written file
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise FormatException(f"heatmap needs a nonempty 2-d matrix, got shape {list(matrix.shape)}")
    rows, cols = matrix.shape
    cell = max(1, min(CELL_PIXELS, MAX_IMAGE_PIXELS // max(rows, cols)))

    image = Image.new('RGB', (cols * cell, rows * cell))
    draw = ImageDraw.Draw(image)
    for i in range(rows):
        for j in range(cols):
            draw.rectangle([j * cell, i * cell, (j + 1) * cell - 1, (i + 1) * cell - 1],
                           fill=value_color(matrix[i, j]))

    if divider_column is not None and 0 < divider_column < cols:
        x = divider_column * cell
        dash = max(2, cell // 3)
        for y in range(0, rows * cell, 2 * dash):
            draw.line([(x, y), (x, min(y + dash, rows * cell - 1))], fill=DIVIDER_COLOR, width=1)

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        image.save(path, format='PNG')
    except OSError as e:
        raise FormatException(f"cannot write image {path}: {e}") from e
    logger.info(f"Heatmap written to {path} ({rows}×{cols})")
    return path


def row_normalize(matrix) -> np.ndarray:
    """Divide each row by its sum; all-zero rows stay zero"""
    matrix = np.asarray(matrix, dtype=np.float64)
    sums = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, sums, out=np.zeros_like(matrix), where=sums > 0)


def render_confusion(matrix, path) -> Path:
    return render_heatmap(row_normalize(matrix), path)


def render_attention_maps(head_weights: Sequence[np.ndarray], acoustic_frames: int,
                          out_dir, prefix: str) -> List[Path]:
    """One PNG per head; a dashed line separates acoustic from text columns"""
    out_dir = Path(out_dir)
    paths = []
    for j, weights in enumerate(head_weights):
        weights = np.asarray(weights)
        peak = weights.max()
        scaled = weights / peak if peak > 0 else weights
        paths.append(render_heatmap(scaled, out_dir / f'{prefix}.head{j}.png',
                                    divider_column=acoustic_frames))
    return paths
