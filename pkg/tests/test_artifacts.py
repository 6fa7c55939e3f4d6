import json
import math

import numpy as np

from django_adaptive_kernels.artifacts import Artifacts, csv_text, format_cell
from django_adaptive_kernels.model import GridFunction
from django_adaptive_kernels.utils import canonical_json, content_hash

from .django_test_setup import *  # NOQA
from .testutils import BaseTestCase, TempDirTestCase, small_grid


class FormatCellTest(BaseTestCase):
    def test_cells(self):
        self.assertEqual(format_cell(0.1), "0.1")
        self.assertEqual(format_cell(np.float64(1 / 3)), repr(1 / 3))
        self.assertEqual(format_cell(math.inf), "inf")
        self.assertEqual(format_cell(None), "")
        self.assertEqual(format_cell(3), "3")
        self.assertEqual(format_cell([1, 2]), "[1,2]")

    def test_csv_text(self):
        text = csv_text(("eps", "risk"), [(0.1, 0.2)], manifest_hash="f" * 64)
        self.assertEqual(text, "# manifest-sha256: " + "f" * 64 + "\neps,risk\n0.1,0.2\n")
        self.assertEqual(csv_text(("a",), []), "a\n")


class CanonicalJsonTest(BaseTestCase):
    def test_key_order_does_not_change_the_hash(self):
        self.assertEqual(content_hash({"a": 1, "b": [1.0, 2.0]}), content_hash({"b": (1.0, 2.0), "a": 1}))
        self.assertEqual(json.loads(canonical_json({"p": math.inf})), {"p": "inf"})


class ArtifactsTest(TempDirTestCase):
    def test_manifest_comes_first(self):
        artifacts = Artifacts(self.temp_dir / "run")
        with self.assertRaises(RuntimeError):
            artifacts.write_csv("results.csv", ("a",), [(1,)])

    def test_csv_carries_manifest_hash(self):
        artifacts = Artifacts(self.temp_dir / "run")
        manifest = {"config": {"kind": "rates_table"}, "seeds": {"seed": 0}}
        digest = artifacts.write_manifest(manifest)
        self.assertEqual(digest, content_hash(manifest))
        path = artifacts.write_csv("results.csv", ("a", "b"), [(1, 2.5)])
        self.assertEqual(path.read_text().splitlines()[0], f"# manifest-sha256: {digest}")
        self.assertEqual(json.loads((artifacts.root / "manifest.json").read_text()), manifest)
        self.assertEqual([p.name for p in artifacts.written], ["manifest.json", "results.csv"])

    def test_grid_function_files(self):
        artifacts = Artifacts(self.temp_dir / "run")
        artifacts.write_manifest({})
        g = GridFunction(small_grid(n=8), np.arange(8, dtype=float))
        csv_path, binary_path = artifacts.write_grid_function("signals/f", g)
        lines = csv_path.read_text().splitlines()
        self.assertTrue(lines[0].startswith("# manifest-sha256: "))
        self.assertEqual(lines[1], "x1,value")
        self.assertEqual(len(lines), 10)
        restored = GridFunction.from_bytes(binary_path.read_bytes())
        np.testing.assert_array_equal(restored.values, g.values)
