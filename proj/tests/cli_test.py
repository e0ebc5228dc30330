"""Drives the seediff executable and validates its JSON outputs against schemas/.

Usage: cli_test.py <seediff-binary> <schema-dir>
"""

import json
import struct
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema
import numpy as np
from PIL import Image

BINARY = None
SCHEMAS = None


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def validate(path, name):
    jsonschema.validate(json.loads(Path(path).read_text()), schema(name))


def run(*args):
    return subprocess.run([str(BINARY), *map(str, args)], capture_output=True, text=True)


def write_atnb(path, array):
    """Independent ATNB writer, as an external producer would implement it."""
    array = np.ascontiguousarray(array, dtype="<f4")
    header = b"ATNB" + struct.pack("<HBBI", 1, 0, 0, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def read_atnb(path):
    data = Path(path).read_bytes()
    assert data[:4] == b"ATNB"
    version, dtype, _reserved, ndim = struct.unpack_from("<HBBI", data, 4)
    assert (version, dtype) == (1, 0)
    dims = struct.unpack_from(f"<{ndim}Q", data, 12)
    offset = 12 + 8 * ndim
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims)


def mask(path):
    return np.array(Image.open(path).convert("L")) > 0


def iou(a, b):
    union = np.logical_or(a, b).sum()
    return 1.0 if union == 0 else np.logical_and(a, b).sum() / union


def upsample_bilinear(a, side):
    """Half-pixel-center bilinear resize with edge clamping."""
    def axis(n):
        x = (np.arange(side) + 0.5) * n / side - 0.5
        x = np.clip(x, 0, n - 1)
        i0 = np.floor(x).astype(int)
        i1 = np.minimum(i0 + 1, n - 1)
        return i0, i1, x - i0
    r0, r1, fr = axis(a.shape[0])
    c0, c1, fc = axis(a.shape[1])
    top = a[r0][:, c0] * (1 - fc) + a[r0][:, c1] * fc
    bot = a[r1][:, c0] * (1 - fc) + a[r1][:, c1] * fc
    return top * (1 - fr[:, None]) + bot * fr[:, None]


class Cli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.disk = cls.root / "disk"
        r = run("synth", "--preset", "disk", "-o", cls.disk)
        assert r.returncode == 0, r.stderr

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_synth_manifests_validate(self):
        validate(self.disk / "manifest.json", "manifest")
        full = self.root / "full"
        r = run("synth", "--preset", "sparse", "--mode", "full", "--scales", "16,32",
                "--layers", "2", "--timesteps", "3", "-o", full)
        self.assertEqual(r.returncode, 0, r.stderr)
        validate(full / "manifest.json", "manifest")
        m = json.loads((full / "manifest.json").read_text())
        self.assertEqual(len(m["tensors"]), 2 * 2 * 2 * 3)
        self.assertEqual(run("synth", "--preset", "blob", "-o", self.root / "x").returncode, 1)

    def test_generate_defaults_and_trace(self):
        out = self.root / "gen"
        r = run("generate", self.disk, "-o", out, "--trace")
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertTrue((out / "mask.png").is_file())
        soft = read_atnb(out / "soft.atnb")
        self.assertEqual(soft.shape, (512, 512))
        self.assertEqual((out / "soft.atnb").stat().st_size, 28 + 512 * 512 * 4)
        binary = mask(out / "mask.png")
        np.testing.assert_array_equal(binary, soft > 0)
        self.assertTrue(np.all((soft == 0) | (soft >= np.float32(0.3))))
        validate(out / "trace" / "index.json", "trace_index")
        names = {s["name"] for s in json.loads((out / "trace" / "index.json").read_text())["stages"]}
        self.assertTrue({"expanded_1", "upsampled_2", "expanded_2", "upsampled_3",
                         "expanded_3", "background", "refined"} <= names)
        self.assertGreaterEqual(iou(binary, mask(self.disk / "truth.png")), 0.99)

    def test_generate_exit_codes(self):
        self.assertEqual(run("generate", self.disk, "-o", self.root / "a", "--alpha", "1.5").returncode, 1)
        self.assertEqual(run("generate", self.disk, "-o", self.root / "a", "--strategy", "crf").returncode, 1)
        self.assertEqual(run("generate", self.disk, "-o", self.root / "a", "--schedule", "32,16").returncode, 1)
        self.assertEqual(run("generate", self.disk).returncode, 1)
        r = run("generate", self.root / "missing", "-o", self.root / "a")
        self.assertEqual(r.returncode, 2)
        self.assertIn("manifest", r.stderr)
        blocker = self.root / "blocker"
        blocker.write_text("file")
        self.assertEqual(run("generate", self.disk, "-o", blocker / "sub").returncode, 3)

    def test_strategies_compare(self):
        truth = mask(self.disk / "truth.png")
        scores = {}
        for s in ("caa", "ca_sa", "seediff"):
            out = self.root / f"strat_{s}"
            self.assertEqual(run("generate", self.disk, "-o", out, "--strategy", s).returncode, 0)
            scores[s] = iou(mask(out / "mask.png"), truth)
        self.assertGreaterEqual(scores["seediff"], scores["caa"])
        no_bg = self.root / "nobg"
        self.assertEqual(run("generate", self.disk, "-o", no_bg, "--no-background").returncode, 0)

    def test_externally_written_dump(self):
        # A dump produced outside this code base: hand-built block attention.
        d = self.root / "external"
        d.mkdir()
        s, tokens = 16, 4
        obj = np.zeros((s, s), bool)
        obj[4:12, 4:12] = True
        ca = np.zeros((s, s, tokens), np.float32)
        ca[7, 7, 2] = 1.0
        ca[..., 0] = 0.1
        same = obj.reshape(-1)[:, None] == obj.reshape(-1)[None, :]
        sa = same.astype(np.float32)
        sa /= sa.max(axis=1, keepdims=True)
        write_atnb(d / "ca.atnb", ca)
        write_atnb(d / "sa.atnb", sa.reshape(s, s, s, s))
        manifest = {
            "prompt": "a photo of a box",
            "class_token_indices": [2],
            "timestep_count": 50,
            "mode": "aggregated",
            "scales": [16],
            "tensors": [
                {"kind": "cross", "scale": 16, "path": "ca.atnb", "shape": [s, s, tokens]},
                {"kind": "self", "scale": 16, "path": "sa.atnb", "shape": [s, s, s, s]},
            ],
            "image_path": "image.png",
            "generator": {"model_id": "external", "sampler_seed": 7},
        }
        validate_obj = manifest
        jsonschema.validate(validate_obj, schema("manifest"))
        (d / "manifest.json").write_text(json.dumps(manifest))
        out = self.root / "external_out"
        r = run("generate", d, "-o", out, "--schedule", "16")
        self.assertEqual(r.returncode, 0, r.stderr)
        # Block attention expands to exactly the block; the output is then its
        # half-pixel bilinear upsampling thresholded at beta.
        expected = upsample_bilinear(obj.astype(np.float64), 512) >= 0.3
        got = mask(out / "mask.png")
        np.testing.assert_array_equal(got, expected)
        truth = np.kron(obj, np.ones((32, 32), bool))
        self.assertGreater(iou(got, truth), 0.9)

        manifest["class_token_indices"] = [4]
        (d / "manifest.json").write_text(json.dumps(manifest))
        self.assertEqual(run("generate", d, "-o", out, "--schedule", "16").returncode, 2)

    def test_batch_and_eval(self):
        dumps = []
        for i, preset in enumerate(("disk", "rectangle", "leak")):
            p = self.root / f"b{i}"
            self.assertEqual(run("synth", "--preset", preset, "--scales", "16,32", "--seed", i,
                                 "-o", p).returncode, 0)
            dumps.append(p)
        listing = self.root / "dumps.txt"
        listing.write_text("# batch\n" + "\n".join(str(p) for p in dumps) + "\n" +
                           str(self.root / "missing") + "\n")
        out = self.root / "batch"
        r = run("batch", "--list", listing, "-o", out, "--jobs", "2", "--schedule", "16,32")
        self.assertEqual(r.returncode, 0, r.stderr)
        validate(out / "dataset.json", "dataset")
        validate(out / "config.json", "batch_config")
        entries = json.loads((out / "dataset.json").read_text())
        self.assertEqual([e["status"] for e in entries], ["ok", "ok", "ok", "error"])
        self.assertEqual(run("batch", "--list", listing, "-o", out, "--strict",
                             "--schedule", "16,32").returncode, 2)
        self.assertEqual(run("batch", "-o", out).returncode, 1)

        pred, gt = self.root / "pred", self.root / "gt"
        pred.mkdir()
        gt.mkdir()
        class_map = {}
        for e, d in zip(entries[:3], dumps):
            name = Path(e["mask"]).parent.name + ".png"
            (pred / name).write_bytes((out / e["mask"]).read_bytes())
            (gt / name).write_bytes((d / "truth.png").read_bytes())
            class_map[name] = e["class"]
        (self.root / "classes.json").write_text(json.dumps(class_map))
        report = self.root / "report.json"
        r = run("eval", pred, gt, "--class-map", self.root / "classes.json", "--report", report)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertIn("mIoU:", r.stdout)
        validate(report, "eval_report")
        rep = json.loads(report.read_text())
        self.assertEqual(set(rep["classes"]), {"disk", "rectangle", "leak"})
        self.assertAlmostEqual(rep["miou"], sum(c["iou"] for c in rep["classes"].values()) / 3)
        r = run("eval", pred, gt, "--per-image")
        self.assertEqual(r.returncode, 0, r.stderr)
        validate(pred / "eval_report.json", "eval_report")
        self.assertEqual(run("eval", pred, self.root / "nothing").returncode, 2)

    def test_batch_jobs_determinism(self):
        dumps = []
        for i in range(4):
            p = self.root / f"det{i}"
            run("synth", "--preset", "sparse", "--scales", "16,32", "--seed", i, "-o", p)
            dumps.append(p)
        outs = []
        for jobs in (1, 4):
            out = self.root / f"det_out{jobs}"
            self.assertEqual(run("batch", *dumps, "-o", out, "-j", jobs, "--schedule", "16,32").returncode, 0)
            outs.append(out)
        files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
        self.assertGreater(len(files), 8)
        for f in files:
            self.assertEqual((outs[0] / f).read_bytes(), (outs[1] / f).read_bytes(), f)

    def test_inspect(self):
        out = self.root / "inspect"
        r = run("inspect", self.disk, "-o", out, "--at", "256,256", "--at", "10,500")
        self.assertEqual(r.returncode, 0, r.stderr)
        validate(out / "inspect.json", "inspect")
        for name in ("ca_16.png", "ca_64.png", "sa_32_256_256.png", "sa_64_10_500.png"):
            with Image.open(out / name) as im:
                self.assertEqual(im.size, (512, 512))
        self.assertEqual(run("inspect", self.disk, "-o", out, "--at", "600,1").returncode, 1)
        self.assertEqual(run("inspect", self.disk, "-o", out, "--at", "x").returncode, 1)


if __name__ == "__main__":
    BINARY = Path(sys.argv[1])
    SCHEMAS = Path(sys.argv[2])
    unittest.main(argv=sys.argv[:1], verbosity=2)
