import math
from typing import Any, List, Sequence, Tuple

import aggdraw
from PIL import Image, ImageColor, ImageFont

__all__ = [
    'MARKER_SHAPES',
    'Marker',
    'ColorWheel',
    'fade_color',
    'get_rgba_tuple',
    'text_size',
    'nice_ticks',
    'vertical_image_concat',
    'linear_layout',
]

MARKER_SHAPES = ('circle', 'square', 'diamond', 'triangle')


class Marker:
    """A data point glyph centred on (x, y)."""

    def __init__(self, x: float, y: float, radius: float = 4, shape: str = 'circle', fill: Any = 'black',
                 outline: Any = None):
        if shape not in MARKER_SHAPES:
            raise ValueError(f"unknown marker shape {shape!r}, expected one of {MARKER_SHAPES}")
        self.x = x
        self.y = y
        self.radius = radius
        self.shape = shape
        self.fill = get_rgba_tuple(fill)
        self.outline = get_rgba_tuple(outline) if outline is not None else fade_color(self.fill, 60)

    def bounds(self) -> Tuple[float, float, float, float]:
        r = self.radius
        return self.x - r, self.y - r, self.x + r, self.y + r

    def draw(self, draw: aggdraw.Draw):
        pen = aggdraw.Pen(self.outline)
        brush = aggdraw.Brush(self.fill)
        x1, y1, x2, y2 = self.bounds()
        if self.shape == 'circle':
            draw.ellipse([x1, y1, x2, y2], pen, brush)
        elif self.shape == 'square':
            draw.rectangle([x1, y1, x2, y2], pen, brush)
        elif self.shape == 'diamond':
            draw.polygon([self.x, y1, x2, self.y, self.x, y2, x1, self.y], pen, brush)
        else:
            draw.polygon([self.x, y1, x2, y2, x1, y2], pen, brush)


class ColorWheel:
    """Hands out colors and marker shapes to series labels in first-seen order."""

    def __init__(self, colors: list = None):
        self._cache = dict()
        self.colors = colors if colors is not None else ["#118ab2", "#ef476f", "#06d6a0", "#ffd166", "#073b4c",
                                                         "#842da1", "#fe9775", "#83d483", "#ffbad4", "#0cb0a9"]

    def get_color(self, label: str):
        if label not in self._cache:
            self._cache[label] = len(self._cache)
        return self.colors[self._cache[label] % len(self.colors)]

    def get_shape(self, label: str) -> str:
        self.get_color(label)
        return MARKER_SHAPES[self._cache[label] % len(MARKER_SHAPES)]


def fade_color(color: tuple, fade_amount: int) -> tuple:
    return tuple(max(0, c - fade_amount) for c in color[:3]) + (color[3],)


def get_rgba_tuple(color: Any) -> tuple:
    """
    :param color: Color name, hex string, (R, G, B[, A]) tuple or 0xAARRGGBB integer.
    :return: (R, G, B, A) tuple
    """
    if isinstance(color, tuple):
        rgba = color
    elif isinstance(color, int):
        rgba = (color >> 16 & 0xff, color >> 8 & 0xff, color & 0xff, color >> 24 & 0xff)
    else:
        rgba = ImageColor.getrgb(color)

    if len(rgba) == 3:
        rgba = (rgba[0], rgba[1], rgba[2], 255)
    return rgba


def text_size(font: ImageFont.ImageFont, text: str) -> Tuple[int, int]:
    if hasattr(font, 'getsize'):
        return font.getsize(text)
    left, top, right, bottom = font.getbbox(text)
    return int(right), int(bottom)


def nice_ticks(low: float, high: float, count: int = 5) -> List[float]:
    """
    Evenly spaced tick values covering [low, high] with a step of 1, 2 or 5 times a power of ten.

    :param low: Lower end of the data range.
    :param high: Upper end of the data range.
    :param count: Approximate number of ticks.
    :return: Ascending tick values.
    """
    if high < low:
        low, high = high, low
    if high == low:
        return [low]
    raw = (high - low) / max(1, count)
    magnitude = 10 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw)
    first = step * math.floor(low / step)
    ticks = []
    value = first
    while value <= high + step * 1e-9:
        if value >= low - step * 1e-9:
            ticks.append(round(value, 12))
        value += step
    return ticks


def vertical_image_concat(im1: Image.Image, im2: Image.Image, background_fill: Any = 'white'):
    """
    Vertical concatenation of two PIL images.

    :param im1: top image
    :param im2: bottom image
    :param background_fill: Color for the image background. Can be str or (R,G,B,A).
    :return: concatenated image
    """
    dst = Image.new('RGBA', (max(im1.width, im2.width), im1.height + im2.height), background_fill)
    dst.paste(im1, (0, 0))
    dst.paste(im2, (0, im1.height))
    return dst


def linear_layout(images: Sequence[Image.Image], max_width: int = -1, padding: int = 0, spacing: int = 0,
                  background_fill: Any = 'white'):
    """
    Lays images out left to right, wrapping into a new row when ``max_width`` would be exceeded.

    :param images: List of PIL images
    :param max_width: Maximum width of the layout, -1 for no limit.
    :param padding: Top, bottom, left, right border distance in pixels.
    :param spacing: Spacing in pixels between elements.
    :param background_fill: Color for the image background. Can be str or (R,G,B,A).
    :return: Layout image.
    """
    coords = []
    width = height = 0
    x, y = padding, padding
    row_bottom = padding

    for img in images:
        if max_width != -1 and x > padding and x + img.width + padding > max_width:
            x = padding
            y = row_bottom + spacing
        coords.append((x, y))
        row_bottom = max(row_bottom, y + img.height)
        width = max(x + img.width + padding, width)
        height = max(y + img.height + padding, height)
        x += img.width + spacing

    layout = Image.new('RGBA', (max(width, 1), max(height, 1)), background_fill)
    for img, coord in zip(images, coords):
        layout.paste(img, coord)
    return layout

