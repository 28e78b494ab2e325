import json
import math

import numpy as np
from django.test import SimpleTestCase

from steinclt import utils


class SeedTestCase(SimpleTestCase):
    """Deterministic substreams."""

    def test_substream_is_reproducible(self):
        first = utils.substream(1, 'W', 3).standard_normal(5)
        np.testing.assert_array_equal(first, utils.substream(1, 'W', 3).standard_normal(5))
        self.assertFalse(np.array_equal(first, utils.substream(1, 'W', 4).standard_normal(5)))
        self.assertFalse(np.array_equal(first, utils.substream(2, 'W', 3).standard_normal(5)))

    def test_derive_seed(self):
        seed = utils.derive_seed(10, 'pair', 0)
        self.assertEqual(seed, utils.derive_seed(10, 'pair', 0))
        self.assertNotEqual(seed, utils.derive_seed(10, 'pair', 1))
        self.assertTrue(0 <= seed < 2 ** 63)

    def test_chunks(self):
        self.assertEqual(list(utils.chunks(10, 4)), [4, 4, 2])
        self.assertEqual(list(utils.chunks(0, 4)), [])


class ReportTestCase(SimpleTestCase):
    """Report serialization."""

    def test_non_finite_values(self):
        text = utils.dumps_report({'b': math.inf, 'a': np.float64('nan'), 'c': np.arange(2)})
        self.assertEqual(json.loads(text), {'a': 'nan', 'b': 'inf', 'c': [0, 1]})
        self.assertLess(text.index('"a"'), text.index('"b"'))

    def test_compact(self):
        self.assertEqual(utils.dumps_report({'x': [1, 2]}, compact=True), '{"x": [1, 2]}\n')

    def test_csv(self):
        self.assertEqual(utils.csv_text(['n', 'v'], [[1, 0.5]]), 'n,v\r\n1,0.5\r\n')

    def test_truncate_for_log(self):
        self.assertTrue(utils.truncate_for_log('x' * 600).endswith('...[truncated]'))
        self.assertEqual(utils.truncate_for_log('short'), 'short')
