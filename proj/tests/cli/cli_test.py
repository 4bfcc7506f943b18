"""End-to-end checks of the pairx command line: exit codes, report schemas,
config precedence and byte-identical outputs across thread counts."""

import json
import pathlib
import shutil
import subprocess
import sys
import tempfile
import unittest

import jsonschema
from PIL import Image
from referencing import Registry, Resource

BIN = pathlib.Path(sys.argv.pop(1)).resolve()
SCHEMAS = pathlib.Path(sys.argv.pop(1)).resolve()


def load_schema(name):
    return json.loads((SCHEMAS / name).read_text())


REGISTRY = Registry().with_resources(
    [(s["$id"], Resource.from_contents(s)) for s in map(load_schema, ["report.schema.json", "explanation.schema.json"])]
)


def validate(doc, name):
    schema = load_schema(name)
    jsonschema.Draft202012Validator(schema, registry=REGISTRY).validate(doc)


def run(*args, cwd=None):
    return subprocess.run([str(BIN), *map(str, args)], cwd=cwd, capture_output=True, text=True)


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = pathlib.Path(tempfile.mkdtemp(prefix="pairx_cli_"))
        cls.data = cls.tmp / "data"
        r = run("synth", cls.data, "--individuals", 6, "--train-individuals", 2, "--seed", 4)
        assert r.returncode == 0, r.stderr
        cls.model = cls.data / "model.pxw"
        cls.manifest = cls.data / "manifest.jsonl"
        cls.corr = cls.data / "correspondences.jsonl"
        cls.img_a = cls.data / "images" / "id000_v0.png"
        cls.img_b = cls.data / "images" / "id000_v3.png"

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def explain(self, out, *extra):
        return run("explain", self.img_a, self.img_b, "--model", self.model, "--correspondences", self.corr,
                   "--out", out, *extra)

    def eval(self, out, *extra):
        return run("eval", "--model", self.model, "--manifest", self.manifest, "--correspondences", self.corr,
                   "--target-pairs", 12, "--out", out, *extra)

    def test_explain_outputs_validate(self):
        out = self.tmp / "explain"
        r = self.explain(out)
        self.assertEqual(r.returncode, 0, r.stderr)
        doc = json.loads((out / "explanation.json").read_text())
        validate(doc, "explanation.schema.json")
        self.assertEqual(doc["kept_matches"], 20)
        self.assertIsNotNone(doc["inverted_residual_mean"])
        with Image.open(out / "explanation.png") as im:
            self.assertEqual(im.size, (doc["canvas"]["width"], doc["canvas"]["height"]))

    def test_eval_report_validates(self):
        out = self.tmp / "eval"
        r = self.eval(out, "--layer", "auto")
        self.assertEqual(r.returncode, 0, r.stderr)
        doc = json.loads((out / "report.json").read_text())
        validate(doc, "report.schema.json")
        self.assertEqual(doc["aggregate"]["n_correct"], 12)
        self.assertIn("layer_selection", doc)
        self.assertEqual(doc["config"]["layer"], "auto")

    def test_single_identity_reports_missing_delta(self):
        manifest = self.data / "one.jsonl"
        lines = [l for l in self.manifest.read_text().splitlines() if "id001_" in l]
        manifest.write_text("\n".join(lines) + "\n")
        out = self.tmp / "one"
        r = run("eval", "--model", self.model, "--manifest", manifest, "--correspondences", self.corr, "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertIn("delta_res missing", " ".join(r.stdout.split()))
        doc = json.loads((out / "report.json").read_text())
        validate(doc, "report.schema.json")
        self.assertIsNone(doc["aggregate"]["delta_res"])

    def test_sweep(self):
        out = self.tmp / "sweep"
        r = run("sweep-layers", "--model", self.model, "--manifest", self.manifest, "--correspondences", self.corr,
                "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        doc = json.loads((out / "sweep.json").read_text())
        self.assertEqual(sum(row["best"] for row in doc["sweep"]["rows"]), 1)

    def test_outputs_identical_across_runs_and_threads(self):
        blobs = {}
        for n, threads in enumerate([1, 1, 4, 4]):
            out = self.tmp / f"det{n}"
            self.assertEqual(self.explain(out, "--threads", threads, "--seed", 9).returncode, 0)
            self.assertEqual(self.eval(out, "--threads", threads, "--seed", 9).returncode, 0)
            for name in ["explanation.png", "explanation.json", "report.json"]:
                blobs.setdefault(name, set()).add((out / name).read_bytes())
        for name, variants in blobs.items():
            self.assertEqual(len(variants), 1, name)

    def test_config_file_and_flag_precedence(self):
        cfg = self.tmp / "cfg.toml"
        cfg.write_text("[explain]\nn-matches = 5\nseed = 3\n")
        out = self.tmp / "cfg"
        r = run("--config", cfg, "explain", self.img_a, self.img_b, "--model", self.model, "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        doc = json.loads((out / "explanation.json").read_text())
        self.assertEqual(doc["kept_matches"], 5)
        self.assertEqual(doc["config"]["seed"], 3)
        r = run("--config", cfg, "explain", self.img_a, self.img_b, "--model", self.model, "--out", out,
                "--n-matches", 7)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(json.loads((out / "explanation.json").read_text())["kept_matches"], 7)

    def test_exit_codes(self):
        out = self.tmp / "codes"
        self.assertEqual(run("explain", self.img_a, self.img_b, "--model", self.tmp / "none.pxw").returncode, 2)
        self.assertEqual(run("explain", self.img_a, self.tmp / "none.png", "--model", self.model,
                             "--out", out).returncode, 2)
        black = self.tmp / "black.png"
        Image.new("RGB", (160, 160)).save(black)
        self.assertEqual(run("explain", black, black, "--model", self.model, "--out", out).returncode, 3)
        self.assertEqual(self.explain(out, "--layer", 0).returncode, 4)
        self.assertEqual(self.explain(out, "--layer", "deep").returncode, 4)
        self.assertEqual(self.explain(out, "--n-matches", 0).returncode, 4)
        self.assertEqual(run("explain", "--bogus").returncode, 4)
        self.assertEqual(run("--help").returncode, 0)
        no_train = self.data / "no_train.jsonl"
        no_train.write_text("".join(l + "\n" for l in self.manifest.read_text().splitlines() if '"train"' not in l))
        r = run("eval", "--model", self.model, "--manifest", no_train, "--layer", "auto", "--out", out)
        self.assertEqual(r.returncode, 4)
        self.assertIn("layer auto-selection requires train pairs", r.stderr)


if __name__ == "__main__":
    unittest.main(verbosity=2)
