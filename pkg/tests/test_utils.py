import unittest

import aggdraw
from PIL import Image

from vodcache.utils import (ColorWheel, Marker, fade_color, get_rgba_tuple, linear_layout, nice_ticks,
                            vertical_image_concat)


class UtilMethods(unittest.TestCase):

    def test_get_rgba_tuples_by_name(self):
        x = get_rgba_tuple('red')
        y = (255, 0, 0, 255)
        self.assertEqual(x, y)

    def test_get_rgba_tuples_by_hex(self):
        self.assertEqual(get_rgba_tuple('#118ab2'), (17, 138, 178, 255))
        self.assertEqual(get_rgba_tuple('#ff000080'), (255, 0, 0, 128))

    def test_get_rgba_tuples_by_tuple_and_int(self):
        self.assertEqual(get_rgba_tuple((1, 2, 3)), (1, 2, 3, 255))
        self.assertEqual(get_rgba_tuple((1, 2, 3, 4)), (1, 2, 3, 4))
        self.assertEqual(get_rgba_tuple(0xff00ff00), (0, 255, 0, 255))

    def test_fade_color(self):
        self.assertEqual(fade_color((100, 50, 10, 200), 60), (40, 0, 0, 200))

    def test_color_wheel(self):
        wheel = ColorWheel()
        self.assertEqual(wheel.get_color('LRU'), '#118ab2')
        self.assertEqual(wheel.get_color('RV'), '#ef476f')
        self.assertEqual(wheel.get_color('LRU'), '#118ab2')
        self.assertEqual(wheel.get_shape('LRU'), 'circle')
        self.assertEqual(wheel.get_shape('RV'), 'square')

    def test_color_wheel_wraps(self):
        wheel = ColorWheel(colors=['red', 'blue'])
        self.assertEqual([wheel.get_color(label) for label in 'abc'], ['red', 'blue', 'red'])

    def test_nice_ticks(self):
        self.assertEqual(nice_ticks(0, 100), [0, 20, 40, 60, 80, 100])
        self.assertEqual(nice_ticks(100, 0), [0, 20, 40, 60, 80, 100])
        self.assertEqual(nice_ticks(3, 3), [3])
        ticks = nice_ticks(0.013, 0.087)
        self.assertTrue(all(0.013 <= t <= 0.087 for t in ticks))
        self.assertTrue(3 <= len(ticks) <= 8)

    def test_linear_layout(self):
        images = [Image.new('RGBA', (10, 10)) for _ in range(3)]
        layout = linear_layout(images, padding=1, spacing=2)
        self.assertEqual(layout.size, (36, 12))
        wrapped = linear_layout(images, max_width=25, padding=1, spacing=2)
        self.assertEqual(wrapped.size, (24, 24))

    def test_linear_layout_empty(self):
        self.assertEqual(linear_layout([]).size, (1, 1))

    def test_vertical_image_concat(self):
        img = vertical_image_concat(Image.new('RGBA', (10, 5)), Image.new('RGBA', (20, 7)))
        self.assertEqual(img.size, (20, 12))

    def test_marker(self):
        with self.assertRaises(ValueError):
            Marker(0, 0, shape='star')
        marker = Marker(10, 10, radius=5, shape='square', fill='red')
        self.assertEqual(marker.bounds(), (5, 5, 15, 15))
        self.assertEqual(marker.outline, (195, 0, 0, 255))

        img = Image.new('RGBA', (20, 20), 'white')
        draw = aggdraw.Draw(img)
        marker.draw(draw)
        draw.flush()
        self.assertEqual(img.getpixel((10, 10)), (255, 0, 0, 255))
        self.assertEqual(img.getpixel((1, 1)), (255, 255, 255, 255))


if __name__ == '__main__':
    unittest.main()
