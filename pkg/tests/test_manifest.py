import pytest

from hyperdf.errors import MissingSourceLinks
from hyperdf.manifest import (
    build_paired_split,
    build_unpaired_split,
    check_source_links,
    read_manifest,
    split_digest,
    write_manifest,
)
from hyperdf.schemas import DatasetManifest, VideoRecord


def _record(video_id, label="real", source=None, generator="real", **kw) -> VideoRecord:
    fields = {"split": "train", "dataset": "fixture", "year": 2020, "frame_paths": [f"{video_id}.png"]}
    fields.update(kw)
    return VideoRecord(
        video_id=video_id, label=label, source_id=source or video_id, generator=generator, **fields
    )


@pytest.fixture
def paired_manifest() -> DatasetManifest:
    records = []
    for k in range(10):
        real = f"fixture/real/{k}"
        records.append(_record(real))
        records.append(_record(f"fixture/gA/{k}", "fake", real, "gA"))
        records.append(_record(f"fixture/gB/{k}", "fake", real, "gB"))
    return DatasetManifest(name="fixture", preprocessing_fingerprint="abc", records=records)


class TestSchema:
    def test_real_must_be_its_own_source(self):
        with pytest.raises(ValueError):
            _record("r1", source="r2")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            DatasetManifest(name="x", preprocessing_fingerprint="f", records=[_record("a"), _record("a")])

    def test_subset_filters_fakes_by_generator(self, paired_manifest):
        sub = paired_manifest.subset(generators=["gA"], name="only-gA")
        assert sub.name == "only-gA"
        assert len(sub.reals) == 10
        assert {r.generator for r in sub.fakes} == {"gA"}


class TestPersistence:
    def test_write_then_read(self, paired_manifest, tmp_path):
        path = write_manifest(paired_manifest, tmp_path / "m" / "fixture.jsonl")
        loaded = read_manifest(path, check_files=False)
        assert loaded.name == "fixture"
        assert loaded.preprocessing_fingerprint == "abc"
        assert [r.video_id for r in loaded.records] == [r.video_id for r in paired_manifest.records]
        # relative frame paths resolve against the manifest directory
        assert loaded.records[0].frame_paths[0].startswith(str(tmp_path / "m"))

    def test_missing_frames_detected(self, paired_manifest, tmp_path):
        path = write_manifest(paired_manifest, tmp_path / "fixture.jsonl")
        with pytest.raises(FileNotFoundError):
            read_manifest(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ValueError):
            read_manifest(path)


class TestPairing:
    def test_paired_contains_sources_of_every_fake(self, paired_manifest):
        split = build_paired_split(paired_manifest, trial_seed=4)
        reals = {r.video_id for r in split.reals}
        assert len(reals) == 5
        assert len(split.fakes) == 10
        assert all(f.source_id in reals for f in split.fakes)
        assert split.name == "fixture-paired-4"

    def test_unpaired_contains_no_source(self, paired_manifest):
        paired = build_paired_split(paired_manifest, trial_seed=4)
        unpaired = build_unpaired_split(paired_manifest, trial_seed=4)
        reals = {r.video_id for r in unpaired.reals}
        assert reals == {r.video_id for r in paired.reals}
        assert len(unpaired.fakes) == 10
        assert not any(f.source_id in reals for f in unpaired.fakes)

    def test_seed_controls_the_split(self, paired_manifest):
        a = split_digest(build_paired_split(paired_manifest, 1))
        assert a == split_digest(build_paired_split(paired_manifest, 1))
        others = {split_digest(build_paired_split(paired_manifest, seed)) for seed in range(2, 7)}
        assert others - {a}

    def test_broken_links_rejected(self, paired_manifest):
        orphan = _record("fixture/gA/x", "fake", "fixture/real/missing", "gA")
        broken = paired_manifest.model_copy(update={"records": [*paired_manifest.records, orphan]})
        with pytest.raises(MissingSourceLinks):
            check_source_links(broken)
        with pytest.raises(MissingSourceLinks):
            build_paired_split(broken, 0)
