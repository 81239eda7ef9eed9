"""
Local artifact storage: parity-check matrices, PSK pool files and CSV reports
"""
from pathlib import Path
from typing import Optional
import logging

from app.core.config import settings
from app.core.errors import HoqsError

logger = logging.getLogger(__name__)


class LocalStorage:
    """Artifact store rooted at a directory; names may contain sub-directories"""

    def __init__(self, base_dir: Optional[str] = None):
        self.base_dir = Path(base_dir or settings.ARTIFACT_DIR)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Using artifact directory: {self.base_dir}")

    def path(self, name: str) -> Path:
        """Resolve an artifact name inside the base directory"""
        path = (self.base_dir / name).resolve()
        if self.base_dir.resolve() not in path.parents:
            raise HoqsError(f"Artifact name escapes the store: {name}")
        return path

    def upload_file(self, file_content: bytes, name: str) -> str:
        """
        Write an artifact, replacing any previous version.

        Args:
            file_content: Bytes to store
            name: Artifact name, e.g. "ldpc/H_5000x10000_seed1_v1.txt"

        Returns:
            The artifact name
        """
        path = self.path(name)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_bytes(file_content)
            tmp.replace(path)
            logger.info(f"Stored artifact: {name} ({len(file_content)} bytes)")
            return name
        except OSError as e:
            logger.error(f"Failed to store artifact {name}: {e}")
            raise HoqsError(f"Artifact write failed: {str(e)}") from e

    def download_file(self, name: str) -> bytes:
        path = self.path(name)
        if not path.exists():
            raise FileNotFoundError(f"Artifact not found: {name}")
        try:
            return path.read_bytes()
        except OSError as e:
            logger.error(f"Failed to read artifact {name}: {e}")
            raise HoqsError(f"Artifact read failed: {str(e)}") from e

    def file_exists(self, name: str) -> bool:
        return self.path(name).exists()


# Singleton instance
_storage_instance: Optional[LocalStorage] = None


def get_storage() -> LocalStorage:
    """Get or create the storage singleton for the configured ARTIFACT_DIR"""
    global _storage_instance
    if _storage_instance is None or _storage_instance.base_dir != Path(settings.ARTIFACT_DIR):
        _storage_instance = LocalStorage()
    return _storage_instance
