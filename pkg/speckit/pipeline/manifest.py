import hashlib
import json
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..core.exceptions import ArtifactError
from .artifacts import file_sha256, read_yaml, write_yaml

STAGE_FILE = "stage.yaml"
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "structlog", "joblib", "PyYAML")


class StageRecord:
    """Outputs of one pipeline stage with their hashes."""

    def __init__(self,
                 stage: str,
                 parameters: Dict[str, Any],
                 files: Dict[str, str]):
        self.stage = stage
        self.parameters = parameters
        self.files = files

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stage': self.stage,
            'parameters': self.parameters,
            'files': self.files
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StageRecord':
        return cls(
            stage=data['stage'],
            parameters=data.get('parameters', {}),
            files=data.get('files', {})
        )

    @classmethod
    def from_directory(cls, stage_dir: Path) -> 'StageRecord':
        """Record a finished stage directory (its stage.yaml plus every output file)."""
        info = read_yaml(stage_dir / STAGE_FILE)
        files = {
            path.name: file_sha256(path)
            for path in sorted(stage_dir.iterdir())
            if path.is_file() and path.name != STAGE_FILE
        }
        return cls(stage=info.get('stage', stage_dir.name),
                   parameters=info.get('parameters', {}),
                   files=files)


class RunManifest:
    """Everything needed to re-run the pipeline and check its outputs."""

    def __init__(self,
                 run_id: str,
                 config: Dict[str, Any],
                 stages: List[StageRecord],
                 versions: Optional[Dict[str, str]] = None,
                 inputs: Optional[Dict[str, str]] = None):
        self.run_id = run_id
        self.config = config
        self.stages = stages
        self.versions = versions or {}
        self.inputs = inputs or {}

    @property
    def seeds(self) -> Dict[str, Any]:
        return self.config.get('seeds', {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            'run_id': self.run_id,
            'seeds': self.seeds,
            'versions': self.versions,
            'inputs': self.inputs,
            'config': self.config,
            'stages': [record.to_dict() for record in self.stages]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        return cls(
            run_id=data['run_id'],
            config=data['config'],
            stages=[StageRecord.from_dict(s) for s in data.get('stages', [])],
            versions=data.get('versions', {}),
            inputs=data.get('inputs', {})
        )

    def save(self, path: Path) -> Path:
        return write_yaml(path, self.to_dict())

    @classmethod
    def load(cls, path: Path) -> 'RunManifest':
        try:
            return cls.from_dict(read_yaml(path))
        except KeyError as e:
            raise ArtifactError(f"manifest {path} lacks field {str(e)}")

    def file_hashes(self) -> Dict[str, str]:
        """Hashes keyed by '<stage>/<file>'."""
        return {
            f"{record.stage}/{name}": digest
            for record in self.stages
            for name, digest in record.files.items()
        }

    def differences(self, other: 'RunManifest') -> List[str]:
        """Files whose hashes differ between two manifests."""
        mine, theirs = self.file_hashes(), other.file_hashes()
        return sorted(k for k in mine.keys() | theirs.keys() if mine.get(k) != theirs.get(k))


def config_run_id(config: Dict[str, Any]) -> str:
    """Short hash of the canonical JSON form of the config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def package_versions() -> Dict[str, str]:
    from .. import __version__

    versions = {'speckit': __version__, 'python': platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = 'unknown'
    return versions
