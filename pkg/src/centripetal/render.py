"""Overlay rendering: detections in green, ground truth in red."""

import numpy as np
from PIL import Image, ImageDraw


def render_overlay(height, width, detections=(), ground_truth=(), background=None):
    """Draw polygon outlines over a probability map (or black) background."""
    if background is not None:
        base = (np.clip(np.asarray(background, dtype=np.float64), 0.0, 1.0) * 255).astype(np.uint8)
        image = Image.fromarray(base, mode="L").convert("RGB")
    else:
        image = Image.new("RGB", (width, height))
    draw = ImageDraw.Draw(image)
    for poly in ground_truth:
        draw.polygon([(float(x), float(y)) for x, y in poly.points], outline=(255, 0, 0))
    for poly in detections:
        draw.polygon([(float(x), float(y)) for x, y in poly.points], outline=(0, 255, 0))
    return image
