from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from hyperdf.manifest import check_source_links
from hyperdf.schemas import SyntheticSpec
from hyperdf.synthetic import (
    default_suite,
    generate_synthetic_dataset,
    generate_synthetic_suite,
    heldout_generators,
    standard_splits,
    training_generators,
)


def _pixels(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.int16)


class TestSyntheticDataset:
    def test_counts_and_pairing(self, tmp_path):
        spec = SyntheticSpec(name="counts", identities=40, generators=3, frames=1, image_size=16)
        manifest = generate_synthetic_dataset(spec, tmp_path)
        assert len(manifest.reals) == 40
        assert len(manifest.fakes) == 120
        check_source_links(manifest)
        assert all(len(r.frame_paths) == 1 for r in manifest.records)

    def test_frames_on_disk(self, synth_manifest, synth_spec):
        record = synth_manifest.records[0]
        assert len(record.frame_paths) == synth_spec.frames
        assert _pixels(record.frame_paths[0]).shape == (synth_spec.image_size, synth_spec.image_size, 3)

    def test_zero_amplitude_fakes_equal_sources(self, tmp_path):
        spec = SyntheticSpec(name="flat", identities=2, generators=2, frames=2, image_size=16, artifact_amplitude=0.0)
        manifest = generate_synthetic_dataset(spec, tmp_path)
        by_id = {r.video_id: r for r in manifest.records}
        for fake in manifest.fakes:
            source = by_id[fake.source_id]
            for a, b in zip(fake.frame_paths, source.frame_paths):
                np.testing.assert_array_equal(_pixels(a), _pixels(b))

    def test_fakes_differ_from_sources(self, synth_manifest):
        by_id = {r.video_id: r for r in synth_manifest.records}
        fake = synth_manifest.fakes[0]
        diff = np.abs(_pixels(fake.frame_paths[0]) - _pixels(by_id[fake.source_id].frame_paths[0]))
        assert diff.max() > 0

    def test_regeneration_is_byte_identical(self, tmp_path):
        spec = SyntheticSpec(name="again", identities=3, generators=1, frames=1, image_size=16)
        a = generate_synthetic_dataset(spec, tmp_path / "a")
        b = generate_synthetic_dataset(spec, tmp_path / "b")
        for ra, rb in zip(a.records, b.records):
            assert [Path(p).read_bytes() for p in ra.frame_paths] == [Path(p).read_bytes() for p in rb.frame_paths]
        assert a.preprocessing_fingerprint == b.preprocessing_fingerprint


class TestSplits:
    def test_identity_never_crosses_splits(self, synth_manifest):
        splits_of_source = {}
        for record in synth_manifest.records:
            splits_of_source.setdefault(record.source_id, set()).add(record.split)
        assert all(len(s) == 1 for s in splits_of_source.values())

    def test_standard_splits_hold_out_generators(self, synth_splits, synth_spec):
        seen = set(training_generators(synth_spec))
        unseen = set(heldout_generators(synth_spec))
        assert seen == {"gen00", "gen01"} and unseen == {"gen02"}
        assert {r.generator for r in synth_splits["train"].fakes} == seen
        assert {r.generator for r in synth_splits["val"].fakes} <= unseen
        assert {r.generator for r in synth_splits["test"].fakes} <= unseen
        assert all(r.split == "train" for r in synth_splits["train"].records)

    def test_train_generators_bounded(self):
        with pytest.raises(ValueError):
            SyntheticSpec(generators=2, train_generators=3)


class TestSuite:
    def test_default_suite_has_disjoint_generators(self):
        suite = default_suite()
        families = [set(training_generators(s)) | set(heldout_generators(s)) for s in suite]
        assert [s.year for s in suite] == [2019, 2021, 2025]
        assert not (families[0] & families[1]) and not (families[1] & families[2])

    def test_duplicate_names_rejected(self, tmp_path):
        spec = SyntheticSpec(name="dup", identities=2, frames=1, image_size=16)
        with pytest.raises(ValueError):
            generate_synthetic_suite([spec, spec], tmp_path)
