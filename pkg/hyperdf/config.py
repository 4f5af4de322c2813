# hyperdf/config.py
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):
    OUTPUT_ROOT: str = "runs"
    CLIP_WEIGHTS: Optional[str] = None   # file, HF-layout dir, or http(s) URL
    CACHE_DIR: str = "~/.cache/hyperdf"
    DEVICE: str = "cpu"
    NUM_WORKERS: int = 0
    LOG_LEVEL: str = "INFO"
    DOWNLOAD_TIMEOUT: float = 60.0

    model_config = SettingsConfigDict(
        env_prefix="HYPERDF_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    @property
    def output_root_path(self) -> Path:
        return Path(self.OUTPUT_ROOT).expanduser()

    @property
    def cache_path(self) -> Path:
        return Path(self.CACHE_DIR).expanduser()

settings = Settings()
