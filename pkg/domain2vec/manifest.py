"""Run manifests: one ``manifest.json`` per artifact directory."""

import hashlib
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from .config import ExperimentConfig
from .errors import DataFormatError
from .json_utils import dump_json, load_json

MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1


def toolkit_version() -> str:
    try:
        return metadata.version("domain2vec")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class FileRecord:
    path: str
    sha256: str

    @classmethod
    def of(cls, path: Union[str, Path], relative_to: Optional[Path] = None) -> "FileRecord":
        path = Path(path)
        shown = path.relative_to(relative_to) if relative_to is not None else path
        return cls(path=shown.as_posix(), sha256=sha256_file(path))


def _files_of(paths: Sequence[Union[str, Path]]) -> List[Path]:
    files: List[Path] = []
    for path in map(Path, paths):
        if path.is_dir():
            files.extend(sorted(p for p in path.rglob("*") if p.is_file()))
        elif path.is_file():
            files.append(path)
    return files


@dataclass
class RunManifest:
    """What ran, with which resolved config, reading and writing which files."""

    command: str
    seed: Optional[int]
    config_hash: Optional[str]
    config: Optional[Dict[str, Any]]
    inputs: List[FileRecord] = field(default_factory=list)
    outputs: List[FileRecord] = field(default_factory=list)
    version: str = field(default_factory=toolkit_version)
    duration_seconds: float = 0.0
    argv: List[str] = field(default_factory=lambda: list(sys.argv[1:]))
    schema_version: int = MANIFEST_SCHEMA_VERSION

    @classmethod
    def build(
        cls,
        command: str,
        out_dir: Union[str, Path],
        *,
        config: Optional[ExperimentConfig] = None,
        seed: Optional[int] = None,
        inputs: Sequence[Union[str, Path]] = (),
        duration_seconds: float = 0.0,
        argv: Optional[Sequence[str]] = None,
    ) -> "RunManifest":
        out_dir = Path(out_dir)
        outputs = [p for p in _files_of([out_dir]) if p.name != MANIFEST_NAME]
        return cls(
            command=command,
            seed=config.seed if seed is None and config is not None else seed,
            config_hash=None if config is None else config.config_hash(),
            config=None if config is None else config.to_dict(),
            inputs=[FileRecord.of(p) for p in _files_of(inputs)],
            outputs=[FileRecord.of(p, relative_to=out_dir) for p in outputs],
            duration_seconds=duration_seconds,
            argv=list(sys.argv[1:] if argv is None else argv),
        )

    def verify_config_hash(self) -> bool:
        """True when the stored config hashes to the stored hash."""
        if self.config is None:
            return self.config_hash is None
        return ExperimentConfig.from_dict(self.config).config_hash() == self.config_hash

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
            "inputs": [vars(f) for f in self.inputs],
            "outputs": [vars(f) for f in self.outputs],
            "version": self.version,
            "duration_seconds": self.duration_seconds,
            "argv": self.argv,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                command=data["command"],
                seed=data.get("seed"),
                config_hash=data.get("config_hash"),
                config=data.get("config"),
                inputs=[FileRecord(**f) for f in data.get("inputs", [])],
                outputs=[FileRecord(**f) for f in data.get("outputs", [])],
                version=data.get("version", ""),
                duration_seconds=float(data.get("duration_seconds", 0.0)),
                argv=list(data.get("argv", [])),
                schema_version=data.get("schema_version", MANIFEST_SCHEMA_VERSION),
            )
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"malformed manifest: {exc}") from exc


def write_manifest(manifest: RunManifest, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    dump_json(path, manifest.to_dict())
    return path


def load_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    data = load_json(path)
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: manifest must be a JSON object")
    return RunManifest.from_dict(data)
