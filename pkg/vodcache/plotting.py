import csv
import logging
import warnings
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence

import aggdraw
from PIL import Image, ImageDraw, ImageFont

from .exceptions import ParseError
from .metrics import REPORT_COLUMNS
from .utils import ColorWheel, Marker, get_rgba_tuple, linear_layout, nice_ticks, text_size, vertical_image_concat

__all__ = [
    'read_sweep_csv',
    'sweep_view',
]

logger = logging.getLogger(__name__)

_NON_AXIS_COLUMNS = set(REPORT_COLUMNS) | {'policy', 'status', 'error', 'trace_digest'}


def _number(value):
    try:
        return float(value)
    except (TypeError, ValueError):
        return value


def read_sweep_csv(path) -> List[Dict[str, Any]]:
    """Reads a sweep CSV back into rows, converting numeric cells to floats."""
    path = Path(path)
    try:
        with path.open('r', encoding='utf-8', newline='') as fh:
            rows = [{key: _number(value) for key, value in row.items()} for row in csv.DictReader(fh)]
    except OSError as e:
        raise ParseError(f"cannot read sweep: {e.strerror}", path=path) from e
    except csv.Error as e:
        raise ParseError(str(e), path=path) from e
    return rows


def _infer_axis(rows: Sequence[Mapping]) -> str:
    for key in rows[0]:
        if key not in _NON_AXIS_COLUMNS:
            return key
    return 'policy'


def sweep_view(rows: Sequence[Mapping],
               metric: str = 'hit_ratio',
               axis: str = None,
               series: str = 'policy',
               to_file: str = None,
               width: int = 640,
               height: int = 400,
               padding: int = 10,
               spacing: int = 10,
               background_fill: Any = 'white',
               axis_color: Any = 'black',
               color_map: dict = None,
               line_width: float = 2.0,
               marker_radius: float = 4.0,
               legend: bool = True,
               font: ImageFont = None,
               font_color: Any = 'black') -> Image:
    """
    Draws a sweep as a line chart: ``metric`` against ``axis``, one line per value of ``series``.

    :param rows: Sweep rows as written by ``write_sweep_csv`` or read by ``read_sweep_csv``. Failed cells are skipped.
    :param metric: Report column on the y axis.
    :param axis: Column on the x axis. Inferred from the first non-report column if None. Non-numeric axis values are spaced evenly.
    :param series: Column that splits rows into lines. Rows without it form a single line.
    :param to_file: Path to write the image to. Image type is inferred from the file ending. None disables writing.
    :param width: Width in pixels of the plot area.
    :param height: Height in pixels of the plot area.
    :param padding: Border distance in pixels.
    :param spacing: Spacing in pixels between legend entries and between tick labels and the axes.
    :param background_fill: Color for the image background. Can be str or (R,G,B,A).
    :param axis_color: Color of the axes and ticks.
    :param color_map: Dict mapping a series label to its line color. Labels not in it get colors from a ColorWheel.
    :param line_width: Width of the series lines.
    :param marker_radius: Radius of the data point markers.
    :param legend: Add a legend of the series below the chart.
    :param font: Font for labels and legend. None uses the default font.
    :param font_color: Color for the font. Can be str or (R,G,B,A).
    :return: Generated chart image.
    """
    if font is None:
        font = ImageFont.load_default()
    color_map = color_map if color_map is not None else dict()
    rows = [row for row in rows if row.get('status', 'ok') != 'failed' and row.get(metric, '') != '']
    if not rows:
        warnings.warn("No successful sweep rows to draw.")
        img = Image.new('RGBA', (width + 2 * padding, height + 2 * padding), background_fill)
        if to_file is not None:
            img.save(to_file)
        return img
    if axis is None:
        axis = _infer_axis(rows)

    lines: Dict[str, list] = {}
    for row in rows:
        label = str(row.get(series, metric))
        lines.setdefault(label, []).append((row[axis], float(row[metric])))

    x_values = [x for points in lines.values() for x, _ in points]
    categorical = not all(isinstance(x, (int, float)) for x in x_values)
    if categorical:
        categories = list(dict.fromkeys(str(x) for x in x_values))
        position = {c: float(i) for i, c in enumerate(categories)}
        to_x = lambda x: position[str(x)]
        x_ticks = [(position[c], c) for c in categories]
        x_low, x_high = -0.5, len(categories) - 0.5
    else:
        x_ticks = [(t, f"{t:g}") for t in nice_ticks(min(x_values), max(x_values))]
        to_x = float
        x_low = min([min(x_values)] + [t for t, _ in x_ticks])
        x_high = max([max(x_values)] + [t for t, _ in x_ticks])
    y_values = [y for points in lines.values() for _, y in points]
    y_ticks = nice_ticks(min(y_values), max(y_values))
    y_low, y_high = min(y_ticks + y_values), max(y_ticks + y_values)

    tick_labels = [f"{t:g}" for t in y_ticks]
    label_w = max(text_size(font, t)[0] for t in tick_labels)
    text_h = text_size(font, "Ag")[1]
    left = padding + label_w + spacing
    top = padding + text_h
    bottom = top + height
    right = left + width
    img = Image.new('RGBA', (right + padding + label_w // 2, bottom + spacing + 2 * text_h + padding),
                    background_fill)

    def px(x):
        span = (x_high - x_low) or 1.0
        return left + (to_x(x) - x_low) / span * width

    def py(y):
        span = (y_high - y_low) or 1.0
        return bottom - (y - y_low) / span * height

    draw = aggdraw.Draw(img)
    axis_pen = aggdraw.Pen(get_rgba_tuple(axis_color), 1)
    draw.line([left, top, left, bottom, right, bottom], axis_pen)
    for t in y_ticks:
        draw.line([left - 4, py(t), left, py(t)], axis_pen)
    for t, _ in x_ticks:
        x = left + ((t - x_low) / ((x_high - x_low) or 1.0)) * width
        draw.line([x, bottom, x, bottom + 4], axis_pen)

    wheel = ColorWheel()
    markers = []
    for label, points in lines.items():
        points.sort(key=lambda p: to_x(p[0]))
        color = get_rgba_tuple(color_map.get(label, wheel.get_color(label)))
        coords = [c for x, y in points for c in (px(x), py(y))]
        if len(points) > 1:
            draw.line(coords, aggdraw.Pen(color, line_width))
        markers.extend(Marker(px(x), py(y), marker_radius, wheel.get_shape(label), color) for x, y in points)
    for marker in markers:
        marker.draw(draw)
    draw.flush()

    draw_text = ImageDraw.Draw(img)
    for t, text in zip(y_ticks, tick_labels):
        w = text_size(font, text)[0]
        draw_text.text((left - spacing - w, py(t) - text_h / 2), text, font=font, fill=font_color)
    for t, text in x_ticks:
        x = left + ((t - x_low) / ((x_high - x_low) or 1.0)) * width
        draw_text.text((x - text_size(font, text)[0] / 2, bottom + spacing), text, font=font, fill=font_color)
    draw_text.text((left, padding / 2), metric, font=font, fill=font_color)
    axis_w = text_size(font, axis)[0]
    draw_text.text((right - axis_w, bottom + spacing + text_h), axis, font=font, fill=font_color)

    if legend and (len(lines) > 1 or series in rows[0]):
        patches = []
        for label in lines:
            w = text_size(font, label)[0]
            patch = Image.new('RGBA', (int(3 * text_h + spacing + w), int(text_h + 2)), background_fill)
            patch_draw = aggdraw.Draw(patch)
            color = get_rgba_tuple(color_map.get(label, wheel.get_color(label)))
            y = patch.height / 2
            patch_draw.line([0, y, 3 * text_h, y], aggdraw.Pen(color, line_width))
            Marker(1.5 * text_h, y, min(marker_radius, text_h / 2), wheel.get_shape(label), color).draw(patch_draw)
            patch_draw.flush()
            ImageDraw.Draw(patch).text((3 * text_h + spacing, 0), label, font=font, fill=font_color)
            patches.append(patch)
        legend_image = linear_layout(patches, max_width=img.width, padding=padding, spacing=spacing,
                                     background_fill=background_fill)
        img = vertical_image_concat(img, legend_image, background_fill=background_fill)

    if to_file is not None:
        img.save(to_file)
        logger.info("wrote %s chart to %s", metric, to_file)

    return img
