import pytest

from speckit.core.config import RunConfig
from speckit.core.exceptions import ArtifactError
from speckit.pipeline.artifacts import write_yaml
from speckit.pipeline.manifest import (
    STAGE_FILE,
    RunManifest,
    StageRecord,
    config_run_id,
    package_versions,
)


def _stage(directory, name, payload):
    directory.mkdir()
    write_yaml(directory / STAGE_FILE, {"stage": name, "parameters": {"alpha": 0.01}, "path": str(directory)})
    (directory / "data.csv").write_text(payload)
    return directory


def test_stage_record_from_directory(temp_dir):
    """Test that every output except stage.yaml is hashed."""
    record = StageRecord.from_directory(_stage(temp_dir / "fit", "fit", "1,2\n"))
    assert record.stage == "fit"
    assert record.parameters == {"alpha": 0.01}
    assert list(record.files) == ["data.csv"]


def test_manifest_save_load(temp_dir):
    """Test the manifest round trip through YAML."""
    config = RunConfig().to_dict()
    record = StageRecord.from_directory(_stage(temp_dir / "fit", "fit", "1,2\n"))
    manifest = RunManifest(config_run_id(config), config, [record], package_versions(), {"measured": "abc"})
    path = manifest.save(temp_dir / "manifest.yaml")

    loaded = RunManifest.load(path)
    assert loaded.run_id == manifest.run_id
    assert loaded.seeds == {"training": [1, 2], "example": 7}
    assert loaded.file_hashes() == manifest.file_hashes()
    assert loaded.inputs == {"measured": "abc"}
    assert RunConfig.from_dict(loaded.config) == RunConfig()


def test_manifest_differences(temp_dir):
    """Test hash comparison of two runs."""
    config = RunConfig().to_dict()
    first = RunManifest("a", config, [StageRecord.from_directory(_stage(temp_dir / "one", "fit", "1\n"))])
    same = RunManifest("b", config, [StageRecord.from_directory(_stage(temp_dir / "two", "fit", "1\n"))])
    other = RunManifest("c", config, [StageRecord.from_directory(_stage(temp_dir / "three", "fit", "2\n"))])
    assert first.differences(same) == []
    assert first.differences(other) == ["fit/data.csv"]


def test_manifest_missing_fields(temp_dir):
    """Test that incomplete manifests are rejected."""
    path = write_yaml(temp_dir / "manifest.yaml", {"stages": []})
    with pytest.raises(ArtifactError, match="run_id"):
        RunManifest.load(path)


def test_config_run_id_is_stable():
    """Test that the run id depends only on the config content."""
    config = RunConfig().to_dict()
    assert config_run_id(config) == config_run_id(RunConfig().to_dict())
    assert len(config_run_id(config)) == 12
    assert config_run_id(RunConfig().with_overrides(seed=8).to_dict()) != config_run_id(config)


def test_package_versions():
    """Test the recorded library versions."""
    versions = package_versions()
    assert versions["speckit"]
    assert "numpy" in versions
    assert "python" in versions
