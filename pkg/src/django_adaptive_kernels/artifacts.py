import csv
import io
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

from django_adaptive_kernels.logger import logger
from django_adaptive_kernels.model import GridFunction
from django_adaptive_kernels.utils import canonical_json, content_hash, to_jsonable


def format_cell(value: Any) -> str:
    """CSV cell text; reals use `repr` so they round-trip exactly."""
    value = to_jsonable(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return canonical_json(value).replace("\n", "").replace("  ", "")
    return "" if value is None else str(value)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]], manifest_hash: Optional[str] = None) -> str:
    buffer = io.StringIO()
    if manifest_hash is not None:
        buffer.write(f"# manifest-sha256: {manifest_hash}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    return buffer.getvalue()


class Artifacts:
    """
    Files of one run, all under `root`. CSV files start with the hash of the manifest, so the
    manifest has to be written first.
    """

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_hash: Optional[str] = None
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _record(self, path: Path) -> None:
        if path not in self.written:
            self.written.append(path)
        logger.debug(f"Artifact written: {path}")

    def write_manifest(self, manifest: dict) -> str:
        self.write_json("manifest.json", manifest)
        self.manifest_hash = content_hash(manifest)
        return self.manifest_hash

    def write_json(self, name: str, data: Any) -> Path:
        path = self.path(name)
        path.write_text(canonical_json(data), encoding="utf-8")
        self._record(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text, encoding="utf-8")
        self._record(path)
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        if self.manifest_hash is None:
            raise RuntimeError("The manifest must be written before any CSV artifact")
        return self.write_text(name, csv_text(columns, rows, self.manifest_hash))

    def write_grid_function(self, stem: str, g: GridFunction) -> List[Path]:
        """`<stem>.csv` and the binary dump `<stem>.bin`."""
        if self.manifest_hash is None:
            raise RuntimeError("The manifest must be written before any CSV artifact")
        csv_path = self.write_text(stem + ".csv", f"# manifest-sha256: {self.manifest_hash}\n" + g.to_csv())
        binary_path = self.path(stem + ".bin")
        binary_path.write_bytes(g.to_bytes())
        self._record(binary_path)
        return [csv_path, binary_path]
