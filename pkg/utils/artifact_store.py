import hashlib
import json
import logging
import os
import tempfile
from datetime import datetime
from typing import Any, Dict, List, Tuple

import pandas as pd

logger = logging.getLogger(__name__)


def config_digest(provenance: Dict[str, Any]) -> str:
    """Short stable hash of a resolved configuration"""
    canonical = json.dumps(provenance, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class ArtifactStore:
    """CSV result tables with a provenance header, written atomically."""

    def __init__(self, base_path="results"):
        self.base_path = base_path
        self.ensure_directories()

    def ensure_directories(self):
        """Create the output directory"""
        os.makedirs(self.base_path, exist_ok=True)

    def table_path(self, name: str) -> str:
        return os.path.join(self.base_path, f"{name}.csv")

    def save_table(self, name: str, frame: pd.DataFrame, provenance: Dict[str, Any]) -> str:
        """Write '# key = value' header lines then the table; the file appears only when complete"""
        path = self.table_path(name)
        header = dict(provenance)
        header.setdefault("config_digest", config_digest(provenance))
        header["written_at"] = self._current_timestamp()

        fd, tmp_path = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.base_path)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                for key, value in header.items():
                    f.write(f"# {key} = {self._format_value(value)}\n")
                frame.to_csv(f, index=False)
            os.replace(tmp_path, path)
        except Exception as e:
            logger.error(f"Failed to write table {name}: {str(e)}")
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise

        logger.info(f"Table saved: {path} ({len(frame)} rows)")
        return path

    def load_table(self, name_or_path: str) -> Tuple[pd.DataFrame, Dict[str, str]]:
        """Read a table and its provenance header"""
        path = name_or_path if name_or_path.endswith(".csv") else self.table_path(name_or_path)
        provenance = {}
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition("=")
                provenance[key.strip()] = value.strip()
        frame = pd.read_csv(path, comment="#")
        logger.info(f"Table loaded: {path}")
        return frame, provenance

    def list_tables(self) -> List[str]:
        return sorted(f[:-4] for f in os.listdir(self.base_path)
                      if f.endswith(".csv") and not f.startswith("."))

    @staticmethod
    def _format_value(value: Any) -> str:
        if isinstance(value, (list, tuple)):
            return ", ".join(str(v) for v in value)
        return str(value).replace("\n", " ")

    def _current_timestamp(self) -> str:
        return datetime.now().isoformat()
