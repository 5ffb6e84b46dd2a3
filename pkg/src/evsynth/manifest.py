"""Line-oriented dataset manifests pairing frame files with conditions.

Each line is ``<frame path><TAB><split><TAB><condition descriptor>`` where
the descriptor is ``class=<label>``, ``skeleton=<path>``, ``normal=<path>``,
or ``uncond``. Paths are relative to the manifest's directory. Writes go
through a temp file and rename so a failed run never leaves a partial
manifest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

HEADER = "# evsynth manifest v1"


@dataclass(frozen=True)
class ManifestEntry:
    frame_path: str
    split: str  # "train" or "eval"
    condition_kind: str  # "class" | "skeleton" | "normal" | "uncond"
    condition_value: str | None = None  # label text or control-image path

    def descriptor(self) -> str:
        if self.condition_kind == "uncond":
            return "uncond"
        return f"{self.condition_kind}={self.condition_value}"


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    directory: str = "."

    def resolve(self, entry: ManifestEntry) -> str:
        return os.path.join(self.directory, entry.frame_path)

    def check_files(self) -> list[str]:
        """Paths referenced by the manifest that do not exist."""
        missing = [self.resolve(e) for e in self.entries
                   if not os.path.exists(self.resolve(e))]
        for e in self.entries:
            if e.condition_kind in ("skeleton", "normal"):
                p = os.path.join(self.directory, e.condition_value)
                if not os.path.exists(p):
                    missing.append(p)
        return missing


def write_manifest(manifest: DatasetManifest, path) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as f:
        f.write(HEADER + "\n")
        for e in manifest.entries:
            f.write(f"{e.frame_path}\t{e.split}\t{e.descriptor()}\n")
    os.replace(tmp, path)


def read_manifest(path) -> DatasetManifest:
    entries = []
    with open(path) as f:
        first = f.readline().rstrip("\n")
        if first != HEADER:
            raise ValueError(f"{path}: missing manifest header")
        for lineno, line in enumerate(f, 2):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            frame_path, split, descriptor = parts
            if descriptor == "uncond":
                kind, value = "uncond", None
            elif "=" in descriptor:
                kind, value = descriptor.split("=", 1)
                if kind not in ("class", "skeleton", "normal"):
                    raise ValueError(f"{path}:{lineno}: unknown condition {kind!r}")
            else:
                raise ValueError(f"{path}:{lineno}: bad condition descriptor {descriptor!r}")
            entries.append(ManifestEntry(frame_path, split, kind, value))
    return DatasetManifest(tuple(entries), os.path.dirname(os.path.abspath(path)))
