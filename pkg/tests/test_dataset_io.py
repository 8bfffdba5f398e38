import filecmp
import os
from dataclasses import replace

import numpy as np
import pytest
import torch

from mmfas.dataset_io import (MANIFEST_COLUMNS, ManifestEntry, ManifestError, MultiModalSample, SyntheticSpec,
                              batches, collate, face_depth_variance, generate_synthetic, load_manifest, load_samples,
                              make_manifest, synthesize, write_manifest)
from mmfas.imageio import write_png8
from mmfas.metrics import roc_points


def _tree(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, files in os.walk(root) for f in files)


def _auc(scores, labels):
    f, t = np.array(roc_points(scores, labels)).T
    return float(np.trapezoid(t, f))


class TestGenerator:
    def test_byte_identical_trees(self, tmp_path):
        spec = SyntheticSpec(n_live=3, n_spoof=4, seed=7)
        generate_synthetic(spec, tmp_path / "a")
        generate_synthetic(spec, tmp_path / "b")
        files = _tree(tmp_path / "a")
        assert files == _tree(tmp_path / "b") and "manifest.tsv" in files
        match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
        assert not mismatch and not errors

    def test_counts_and_balance(self, tmp_path):
        entries = generate_synthetic(SyntheticSpec(n_live=5, n_spoof=5), tmp_path)
        assert len(entries) == 10
        assert sum(e.label == "live" for e in entries) == 5
        loaded = load_manifest(tmp_path / "manifest.tsv")
        assert [e.sample_id for e in loaded] == [e.sample_id for e in entries]
        samples = load_samples(loaded)
        assert samples[0].rgb.shape == (8, 8, 3) and samples[0].depth_gt.shape == (16, 16)

    def test_different_seed_differs(self):
        a = synthesize(SyntheticSpec(n_live=1, n_spoof=1, seed=0))
        b = synthesize(SyntheticSpec(n_live=1, n_spoof=1, seed=1))
        assert not np.array_equal(a[0].rgb, b[0].rgb)

    def test_depth_planarity_separates_classes(self):
        samples = synthesize(SyntheticSpec(n_live=40, n_spoof=40, seed=3))
        var = {t: [face_depth_variance(s) for s in samples if s.attack_type == t]
               for t in ("none", "print_bw", "print_color", "screen")}
        flat = var["print_bw"] + var["print_color"] + var["screen"]
        assert np.mean(var["none"]) > np.mean(var["print_bw"] + var["print_color"])
        scores = var["none"] + flat
        labels = [1] * len(var["none"]) + [0] * len(flat)
        assert _auc(scores, labels) > 0.95

    def test_gt_degrades_to_input(self):
        from mmfas.quality import DegradeSpec, degrade
        s = synthesize(SyntheticSpec(n_live=1, n_spoof=1))[1]
        assert np.array_equal(degrade(s.ir_gt, DegradeSpec(8, True, 3, 1.5)), s.ir)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n_live=0)
        with pytest.raises(ValueError):
            SyntheticSpec(spoof_types=("paper_cut",))


def _write_entry(root, sid, r=8, gt=16, label="live", attack="none"):
    d = root / sid
    d.mkdir(parents=True)
    paths = {}
    for key in ("rgb", "depth", "ir", "rgb_gt", "depth_gt", "ir_gt"):
        n = gt if key.endswith("_gt") else r
        shape = (n, n, 3) if key.startswith("rgb") else (n, n)
        write_png8(d / f"{key}.png", np.zeros(shape, np.uint8))
        paths[key] = f"{sid}/{key}.png"
    return ManifestEntry(sid, label=label, attack_type=attack, camera_tag="cam", root=root, **paths)


class TestManifest:
    def test_empty_manifest(self, tmp_path):
        write_manifest(tmp_path / "m.tsv", [])
        assert load_manifest(tmp_path / "m.tsv") == []

    def test_roundtrip(self, tmp_path):
        entries = [_write_entry(tmp_path, "a"), _write_entry(tmp_path, "b", label="spoof", attack="screen")]
        write_manifest(tmp_path / "m.tsv", entries)
        assert load_manifest(tmp_path / "m.tsv") == entries
        assert (tmp_path / "m.tsv").read_text().splitlines()[0].split("\t") == list(MANIFEST_COLUMNS)

    def test_dimension_rule(self, tmp_path):
        write_manifest(tmp_path / "m.tsv", [_write_entry(tmp_path, "odd", r=9, gt=16)])
        with pytest.raises(ManifestError, match="rgb_gt"):
            load_manifest(tmp_path / "m.tsv")

    @pytest.mark.parametrize("field,value", [("label", "alive"), ("attack_type", "origami"), ("attack_type", "screen")])
    def test_bad_field_is_named(self, tmp_path, field, value):
        entry = replace(_write_entry(tmp_path, "x"), **{field: value})
        write_manifest(tmp_path / "m.tsv", [entry])
        with pytest.raises(ManifestError, match=field):
            load_manifest(tmp_path / "m.tsv")

    def test_missing_file_is_named(self, tmp_path):
        entry = _write_entry(tmp_path, "x")
        (tmp_path / "x" / "ir.png").unlink()
        write_manifest(tmp_path / "m.tsv", [entry])
        with pytest.raises(ManifestError, match="'ir'"):
            load_manifest(tmp_path / "m.tsv")

    def test_bad_header_and_row(self, tmp_path):
        (tmp_path / "m.tsv").write_text("id\trgb\n")
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "m.tsv")
        (tmp_path / "n.tsv").write_text("\t".join(MANIFEST_COLUMNS) + "\nonly\tthree\tfields\n")
        with pytest.raises(ManifestError, match="fields"):
            load_manifest(tmp_path / "n.tsv")

    def test_make_manifest(self, tmp_path):
        generate_synthetic(SyntheticSpec(n_live=2, n_spoof=2), tmp_path / "data")
        out = tmp_path / "lists" / "m.tsv"
        out.parent.mkdir()
        entries = make_manifest(tmp_path / "data", out, camera_tag="rs")
        assert len(entries) == 4 and all(e.camera_tag == "rs" for e in entries)
        loaded = load_manifest(out)
        assert loaded[0].rgb.startswith("../data/")
        original = {s.sample_id: s for s in load_samples(load_manifest(tmp_path / "data" / "manifest.tsv"))}
        for s in load_samples(loaded):
            assert np.array_equal(s.rgb, original[s.sample_id].rgb) and s.label == original[s.sample_id].label


class TestBatches:
    def test_sizes(self):
        assert [len(b) for b in batches(list(range(10)), 4, seed=0)] == [4, 4, 2]

    def test_no_shuffle_keeps_order(self):
        assert [x for b in batches(list(range(10)), 3, shuffle=False) for x in b] == list(range(10))

    def test_epoch_orders(self):
        items = list(range(20))
        e0 = [x for b in batches(items, 4, seed=1, epoch=0) for x in b]
        e1 = [x for b in batches(items, 4, seed=1, epoch=1) for x in b]
        assert e0 != e1 and sorted(e0) == items
        assert e0 == [x for b in batches(items, 4, seed=1, epoch=0) for x in b]

    def test_entries_load_to_samples(self, tmp_path):
        entries = generate_synthetic(SyntheticSpec(n_live=2, n_spoof=3), tmp_path)
        out = list(batches(load_manifest(tmp_path / "manifest.tsv"), 2, seed=0))
        assert [len(b) for b in out] == [2, 2, 1]
        assert all(isinstance(s, MultiModalSample) for b in out for s in b)
        assert len(entries) == 5

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            list(batches([1], 0))


def test_sample_invariants_checked():
    s = synthesize(SyntheticSpec(n_live=1, n_spoof=1))[0]
    with pytest.raises(ValueError):
        replace(s, depth_gt=s.depth)
    with pytest.raises(ValueError):
        replace(s, ir=s.ir.astype(np.float32))
    with pytest.raises(ValueError):
        replace(s, label=2)


def test_collate():
    samples = synthesize(SyntheticSpec(n_live=1, n_spoof=1))
    b = collate([samples[0], replace(samples[1], erased="ir")])
    assert b["rgb"].shape == (2, 3, 8, 8) and b["ir_gt"].shape == (2, 1, 16, 16)
    assert b["label"].tolist() == [1, 0] and b["ir_mask"].tolist() == [1.0, 0.0]
    assert float(b["depth"].max()) <= 1.0 and b["depth"].dtype == torch.float32
    assert torch.equal(b["rgb"][0, 0], torch.from_numpy(samples[0].rgb[:, :, 0] / np.float32(255)))
