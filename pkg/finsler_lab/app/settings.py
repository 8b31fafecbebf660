import os
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

# Load environment variables
load_dotenv()


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    output_dir: Path = Field(Path("runs"), description="Default directory for report files")
    workers: int = Field(1, ge=1, description="Default degree of parallelism")
    cache_enabled: bool = Field(False, description="Persist distance fields in the sqlite cache")
    cache_path: Path = Field(..., description="Path of the sqlite distance-field cache")
    cache_ttl_days: int = Field(7, ge=0, description="Time-to-live of cached distance fields")
    log_level: str = Field("WARNING", description="Root log level for the CLI")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Read settings from the environment (and `.env`) once per process."""
    default_cache = Path(__file__).parent.parent / "cache" / "distance_fields.db"
    return Settings(
        output_dir=Path(os.getenv("FINSLER_LAB_OUTPUT_DIR", "runs")),
        workers=int(os.getenv("FINSLER_LAB_WORKERS", os.cpu_count() or 1)),
        cache_enabled=os.getenv("FINSLER_LAB_CACHE", "off").lower() in ("1", "on", "true", "yes"),
        cache_path=Path(os.getenv("FINSLER_LAB_CACHE_PATH", str(default_cache))),
        cache_ttl_days=int(os.getenv("FINSLER_LAB_CACHE_TTL_DAYS", 7)),
        log_level=os.getenv("FINSLER_LAB_LOG_LEVEL", "WARNING").upper(),
    )
